#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nextbasket/core.hpp"

namespace nextbasket {

enum class SourceFormat { Generic, Instacart, TaFeng };

/// Parses "generic", "instacart" or "tafeng"; throws UsageError otherwise.
SourceFormat parse_format(std::string_view name);
std::string_view format_name(SourceFormat format);

/// One purchased line item after adapting a source layout.
struct TransactionRecord {
  std::string customer_key;
  std::uint64_t order_sequence = 0;
  std::string item_code;
  std::string category_code;  // empty when the source has none
};

/// Loaded or preprocessed transactions.
struct Corpus {
  Vocabulary vocab;
  std::vector<PurchaseHistory> histories;
  std::vector<std::string> item_category;  // per ItemId; empty when no categories are known

  [[nodiscard]] bool has_categories() const { return !item_category.empty(); }
  [[nodiscard]] std::size_t basket_count() const;
};

/// Groups records into histories: customers in first-seen order, baskets by
/// ascending order_sequence, duplicate (customer, sequence, item) triples
/// collapsed. Records of a sequence number that reappear after another
/// sequence of the same customer are merged into the earlier basket and
/// counted in merged_out_of_order().
class HistoryBuilder {
 public:
  /// A frozen `vocab` restricts items to known codes.
  explicit HistoryBuilder(Vocabulary vocab = {}, bool aisle_level = false);

  /// `where` prefixes error messages (e.g. "file.csv:12").
  void add(const TransactionRecord& record, std::string_view where);
  [[nodiscard]] std::size_t merged_out_of_order() const { return merged_; }
  Corpus finish() &&;

 private:
  struct Customer {
    std::string key;
    std::map<std::uint64_t, std::vector<ItemId>> baskets;
    std::optional<std::uint64_t> last_sequence;
  };
  Vocabulary vocab_;
  bool aisle_level_;
  std::vector<Customer> customers_;
  std::map<std::string, std::size_t, std::less<>> customer_index_;
  std::map<std::uint32_t, std::string> category_;
  std::size_t merged_ = 0;
};

struct LoadOptions {
  bool aisle_level = false;              // replace item codes by their category codes
  std::optional<Vocabulary> vocabulary;  // pre-seeded (and usually frozen) vocabulary
};

/// Generic: a CSV with header `customer,order_seq,item[,category]`.
/// Instacart: a directory holding orders.csv, products.csv and
/// order_products__prior.csv and/or order_products__train.csv.
/// Ta-Feng: one flat file (comma or semicolon separated); a basket is one
/// customer's purchases on one calendar day.
/// Throws DataError naming file and line on malformed input.
Corpus load_transactions(const std::filesystem::path& path, SourceFormat format, const LoadOptions& options = {});
Corpus read_generic_csv(std::istream& in, const std::string& source_name, const LoadOptions& options = {});

/// Writes histories as generic CSV, order_seq being the basket position.
void write_generic_csv(const Corpus& corpus, std::ostream& out);

struct PreprocessOptions {
  std::size_t top_n_items = 500;
  std::size_t min_baskets = 10;
  std::size_t min_basket_size = 5;
};

/// 1) keep the top_n_items items by basket incidence (ties by first-seen
/// order); 2) drop baskets left empty; 3) keep customers with at least
/// min_baskets baskets that all hold at least min_basket_size items. The
/// vocabulary is rebuilt densely over the items left in retained histories.
/// Throws DataError when no customer survives.
Corpus preprocess(const Corpus& corpus, const PreprocessOptions& options = {});

enum class Partition { Train, Validation, Test };
std::string_view partition_name(Partition part);

struct SplitAssignment {
  std::vector<std::string> train;       // each sorted by key
  std::vector<std::string> validation;
  std::vector<std::string> test;
  std::uint64_t seed = 0;

  [[nodiscard]] std::optional<Partition> partition_of(std::string_view customer) const;
};

/// Seeded shuffle of the sorted customer keys, then an 80/10/10 cut with
/// largest-remainder rounding. Throws UsageError for fewer than 3 customers.
SplitAssignment split_customers(std::span<const PurchaseHistory> histories, std::uint64_t seed);

/// Lines `customer_key<TAB>{train|val|test}`.
void write_split(const SplitAssignment& split, std::ostream& out);
SplitAssignment read_split(std::istream& in, const std::string& source_name);

/// Histories of one partition, in corpus order.
std::vector<PurchaseHistory> select_partition(std::span<const PurchaseHistory> histories,
                                              const SplitAssignment& split, Partition part);

/// Splits one CSV line; double-quoted fields may contain the delimiter and
/// escaped quotes ("").
std::vector<std::string> split_csv_line(std::string_view line, char delimiter = ',');

}  // namespace nextbasket
