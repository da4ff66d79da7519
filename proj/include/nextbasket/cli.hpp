#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace nextbasket::cli {

/// Every command-line setting. Defaults here are the documented defaults.
struct Options {
  std::string command;
  std::filesystem::path data;
  std::string format = "generic";
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 42;
  std::size_t k = 5;
  double tau = 20.0;
  double p = 1.0;
  std::size_t dim = 50;
  std::size_t top_items = 500;
  std::size_t min_baskets = 10;
  std::size_t min_basket_size = 5;
  int threads = 0;
  bool aisle_level = false;
  bool no_prune = false;
  int epochs = 5;
  double lr = 0.025;
  std::string customer;  // predict: one customer key; empty means every test customer
  bool categories = false;
  std::size_t pairs = 10000;
  std::string k_grid = "1,2,5,10,20";
  std::string tau_grid = "5,10,15,20,25,30,35";
  std::string fallback_size = "last";
  bool normalize = false;

  // Set when --k / --tau were given explicitly; otherwise tuned.json wins.
  bool k_given = false;
  bool tau_given = false;
};

/// Parses argv-style arguments (without the program name), runs the command
/// and maps exceptions to exit codes: 0 ok, 1 usage, 2 data, 3 internal.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

/// Full --help text of the tool.
std::string help_text();

struct FlagInfo {
  std::string name;           // e.g. "--top-items"
  std::string default_value;  // empty for switches
  bool is_switch = false;
};
/// Flags registered with the parser, for help consistency checks.
std::vector<FlagInfo> parser_flags();

void cmd_ingest(const Options& options, std::ostream& out);
void cmd_embed(const Options& options, std::ostream& out);
void cmd_tune(const Options& options, std::ostream& out);
void cmd_predict(const Options& options, std::ostream& out);
void cmd_evaluate(const Options& options, std::ostream& out);
void cmd_bench(const Options& options, std::ostream& out);

/// Parses "1,2,5" style lists; throws UsageError on junk or an empty list.
std::vector<std::size_t> parse_size_list(const std::string& text, const std::string& flag);
std::vector<double> parse_double_list(const std::string& text, const std::string& flag);

inline constexpr const char* kVersion = "0.1.0";

}  // namespace nextbasket::cli
