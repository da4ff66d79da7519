#include "nextbasket/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "nextbasket/baselines.hpp"
#include "nextbasket/data_io.hpp"
#include "nextbasket/embeddings.hpp"
#include "nextbasket/error.hpp"
#include "nextbasket/evaluation.hpp"
#include "nextbasket/predictor.hpp"
#include "nextbasket/random.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace nextbasket::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Artifact names under --out-dir.
constexpr const char* kTransactions = "transactions.csv";
constexpr const char* kVocab = "vocab.tsv";
constexpr const char* kSplit = "split.tsv";
constexpr const char* kEmbeddings = "embeddings.txt";
constexpr const char* kTuned = "tuned.json";
constexpr const char* kTuneLog = "tune_log.csv";
constexpr const char* kPredictions = "predictions.csv";
constexpr const char* kComparison = "comparison.csv";
constexpr const char* kBench = "bench.json";

constexpr const char* kOurs = "knn_sdtw";

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// FNV-1a over the file bytes; lets a manifest pin the exact artifact it wrote.
std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "";
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << h;
  return hex.str();
}

json options_json(const Options& o) {
  return json{{"data", o.data.string()},
              {"format", o.format},
              {"out_dir", o.out_dir.string()},
              {"seed", o.seed},
              {"k", o.k},
              {"tau", o.tau},
              {"p", o.p},
              {"dim", o.dim},
              {"top_items", o.top_items},
              {"min_baskets", o.min_baskets},
              {"min_basket_size", o.min_basket_size},
              {"threads", o.threads},
              {"aisle_level", o.aisle_level},
              {"no_prune", o.no_prune},
              {"epochs", o.epochs},
              {"lr", o.lr},
              {"customer", o.customer},
              {"categories", o.categories},
              {"pairs", o.pairs},
              {"k_grid", o.k_grid},
              {"tau_grid", o.tau_grid},
              {"fallback_size", o.fallback_size},
              {"normalize", o.normalize}};
}

class Manifest {
 public:
  Manifest(std::string command, const Options& options)
      : command_(std::move(command)), options_(options), started_(utc_now()) {}

  void input(const fs::path& path) { inputs_.push_back(path); }
  void output(const fs::path& path) { outputs_.push_back(path); }
  void note(const std::string& key, json value) { extra_[key] = std::move(value); }

  void write() const {
    json doc;
    doc["tool"] = "nextbasket";
    doc["version"] = kVersion;
    doc["command"] = command_;
    doc["config"] = options_json(options_);
    auto files = [](const std::vector<fs::path>& paths) {
      json list = json::array();
      for (const auto& p : paths) list.push_back({{"path", p.filename().string()}, {"fnv1a", file_digest(p)}});
      return list;
    };
    doc["inputs"] = files(inputs_);
    doc["outputs"] = files(outputs_);
    if (!extra_.empty()) doc["summary"] = extra_;
    doc["started_at"] = started_;
    doc["finished_at"] = utc_now();
    const fs::path path = options_.out_dir / ("manifest_" + command_ + ".json");
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
  }

 private:
  std::string command_;
  Options options_;
  std::string started_;
  std::vector<fs::path> inputs_;
  std::vector<fs::path> outputs_;
  json extra_ = json::object();
};

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

fs::path require_artifact(const Options& o, const char* name, const char* producer) {
  const fs::path path = o.out_dir / name;
  if (!fs::exists(path)) {
    throw DataError("missing artifact " + path.string() + " (run `nextbasket " + producer + "` first)");
  }
  return path;
}

FallbackSize parse_fallback(const std::string& s) {
  if (s == "last") return FallbackSize::LastBasket;
  if (s == "mean") return FallbackSize::MeanBasket;
  throw UsageError("--fallback-size must be 'last' or 'mean', got '" + s + "'");
}

std::string fallback_name(FallbackSize f) { return f == FallbackSize::LastBasket ? "last" : "mean"; }

void apply_threads(const Options& o) {
  if (o.threads < 0) throw UsageError("--threads must be >= 0");
  if (o.threads > 0) omp_set_num_threads(o.threads);
}

// Corpus, split and (optionally) embeddings as written by earlier commands.
struct Workspace {
  Corpus corpus;
  SplitAssignment split;
  EmbeddingTable table;
  std::vector<PurchaseHistory> train;
  std::vector<PurchaseHistory> validation;
  std::vector<PurchaseHistory> test;
};

Workspace load_workspace(const Options& o, Manifest& manifest, bool with_embeddings) {
  const auto vocab_path = require_artifact(o, kVocab, "ingest");
  const auto tx_path = require_artifact(o, kTransactions, "ingest");
  const auto split_path = require_artifact(o, kSplit, "ingest");
  Workspace w;
  LoadOptions load;
  load.vocabulary = load_vocabulary(vocab_path);
  w.corpus = load_transactions(tx_path, SourceFormat::Generic, load);
  w.corpus.vocab = *load.vocabulary;
  if (w.corpus.has_categories()) w.corpus.item_category.resize(w.corpus.vocab.size());
  std::ifstream split_in(split_path);
  w.split = read_split(split_in, split_path.string());
  manifest.input(vocab_path);
  manifest.input(tx_path);
  manifest.input(split_path);

  w.train = select_partition(w.corpus.histories, w.split, Partition::Train);
  w.validation = select_partition(w.corpus.histories, w.split, Partition::Validation);
  w.test = select_partition(w.corpus.histories, w.split, Partition::Test);
  if (w.train.empty()) throw DataError("training split is empty");

  if (with_embeddings) {
    const auto emb_path = require_artifact(o, kEmbeddings, "embed");
    w.table = align_embeddings(load_embeddings(emb_path), w.corpus.vocab);
    if (w.table.dim() == 0) throw DataError(emb_path.string() + ": zero-dimensional embeddings");
    manifest.input(emb_path);
  }
  return w;
}

// Tuned (k, tau) unless given explicitly on the command line.
PredictionConfig resolve_config(const Options& o, Manifest* manifest) {
  PredictionConfig cfg;
  cfg.k = o.k;
  cfg.tau = o.tau;
  cfg.p = o.p;
  cfg.embed_dim = o.dim;
  cfg.fallback_size = parse_fallback(o.fallback_size);
  cfg.normalize_by_query_length = o.normalize;
  const fs::path tuned = o.out_dir / kTuned;
  if (fs::exists(tuned) && (!o.k_given || !o.tau_given)) {
    std::ifstream in(tuned);
    json doc;
    try {
      doc = json::parse(in);
      if (!o.k_given) cfg.k = doc.at("k").get<std::size_t>();
      if (!o.tau_given) cfg.tau = doc.at("tau").get<double>();
    } catch (const json::exception& e) {
      throw DataError(tuned.string() + ": " + e.what());
    }
    if (doc.contains("p") && doc["p"].get<double>() != cfg.p) {
      spdlog::warn("{} was tuned with p = {} but --p is {}", tuned.string(), doc["p"].get<double>(), cfg.p);
    }
    if (manifest) manifest->input(tuned);
  }
  cfg.validate();
  return cfg;
}

std::string format_fixed(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s << std::fixed << std::setprecision(10) << v;
  return s.str();
}

std::string basket_codes(const Basket& b, const Vocabulary& vocab) {
  std::string out;
  for (ItemId id : b) {
    if (!out.empty()) out += ' ';
    out += vocab.code(id);
  }
  return out;
}

struct ModelSpec {
  std::string name;
  BasketModel model;
};

std::vector<std::size_t> usable_indices(std::span<const PurchaseHistory> histories) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < histories.size(); ++i) {
    if (histories[i].length() >= 2) idx.push_back(i);
  }
  return idx;
}

CLI::App& build_app(CLI::App& app, Options& o) {
  app.description("Next market basket prediction with nearest neighbours under subsequence DTW.");
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", kVersion);

  app.add_option("--data", o.data, "Input transactions (file, or directory for instacart)");
  app.add_option("--format", o.format, "Input layout: generic, instacart or tafeng")->capture_default_str();
  app.add_option("--out-dir", o.out_dir, "Directory holding every artifact")->capture_default_str();
  app.add_option("--seed", o.seed, "Seed for the split, embedding training and bench sampling")->capture_default_str();
  app.add_option("--k", o.k, "Number of neighbours (overrides tuned.json)")->capture_default_str();
  app.add_option("--tau", o.tau, "Mean-distance threshold (overrides tuned.json)")->capture_default_str();
  app.add_option("--p", o.p, "Wasserstein order, >= 1")->capture_default_str();
  app.add_option("--dim", o.dim, "Embedding dimension")->capture_default_str();
  app.add_option("--top-items", o.top_items, "Keep this many most frequent items")->capture_default_str();
  app.add_option("--min-baskets", o.min_baskets, "Minimum baskets per retained customer")->capture_default_str();
  app.add_option("--min-basket-size", o.min_basket_size, "Minimum items in every retained basket")
      ->capture_default_str();
  app.add_option("--threads", o.threads, "Worker threads, 0 for the OpenMP default")->capture_default_str();
  app.add_flag("--aisle-level", o.aisle_level, "Replace products by their category before interning");
  app.add_flag("--no-prune", o.no_prune, "Disable lower-bound pruning and early abandoning");
  app.add_option("--epochs", o.epochs, "Embedding training epochs")->capture_default_str();
  app.add_option("--lr", o.lr, "Initial embedding learning rate")->capture_default_str();
  app.add_option("--customer", o.customer, "predict: a single customer key (default: all test customers)");
  app.add_flag("--categories", o.categories, "evaluate: also write per-category breakdowns");
  app.add_option("--pairs", o.pairs, "bench: sampled basket pairs")->capture_default_str();
  app.add_option("--k-grid", o.k_grid, "tune: candidate k values")->capture_default_str();
  app.add_option("--tau-grid", o.tau_grid, "tune: candidate tau values")->capture_default_str();
  app.add_option("--fallback-size", o.fallback_size, "Fallback basket size: last or mean")->capture_default_str();
  app.add_flag("--normalize", o.normalize, "Divide the mean neighbour distance by the query length");

  const std::pair<const char*, const char*> commands[] = {
      {"ingest", "Load, filter and split transactions"},
      {"embed", "Train item embeddings on the training split"},
      {"tune", "Grid-search k and tau on the validation split"},
      {"predict", "Predict next baskets"},
      {"evaluate", "Score the engine and four baselines on the test split"},
      {"bench", "Time exact vs lower-bound distances and measure the pruning hitrate"},
  };
  for (const auto& [name, help] : commands) {
    app.add_subcommand(name, help)->fallthrough()->callback([&o, n = std::string(name)] { o.command = n; });
  }
  return app;
}

}  // namespace

std::vector<std::size_t> parse_size_list(const std::string& text, const std::string& flag) {
  std::vector<std::size_t> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      values.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError(flag + ": '" + item + "' is not a positive integer");
    }
  }
  if (values.empty()) throw UsageError(flag + " is empty");
  return values;
}

std::vector<double> parse_double_list(const std::string& text, const std::string& flag) {
  std::vector<double> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size() || !(v > 0.0)) throw std::invalid_argument(item);
      values.push_back(v);
    } catch (const std::exception&) {
      throw UsageError(flag + ": '" + item + "' is not a positive number");
    }
  }
  if (values.empty()) throw UsageError(flag + " is empty");
  return values;
}

void cmd_ingest(const Options& o, std::ostream& out) {
  if (o.data.empty()) throw UsageError("ingest needs --data");
  Manifest manifest("ingest", o);
  const SourceFormat format = parse_format(o.format);
  LoadOptions load;
  load.aisle_level = o.aisle_level;
  const Corpus raw = load_transactions(o.data, format, load);
  if (raw.histories.empty()) throw DataError(o.data.string() + ": no transactions");
  const Corpus corpus = preprocess(raw, {o.top_items, o.min_baskets, o.min_basket_size});
  const SplitAssignment split = split_customers(corpus.histories, o.seed);

  fs::create_directories(o.out_dir);
  const fs::path tx = o.out_dir / kTransactions;
  const fs::path vocab = o.out_dir / kVocab;
  const fs::path split_path = o.out_dir / kSplit;
  {
    auto f = open_output(tx);
    write_generic_csv(corpus, f);
  }
  save_vocabulary(corpus.vocab, vocab);
  {
    auto f = open_output(split_path);
    write_split(split, f);
  }
  if (fs::is_regular_file(o.data)) manifest.input(o.data);
  manifest.output(tx);
  manifest.output(vocab);
  manifest.output(split_path);
  manifest.note("raw_customers", raw.histories.size());
  manifest.note("customers", corpus.histories.size());
  manifest.note("baskets", corpus.basket_count());
  manifest.note("products", corpus.vocab.size());
  manifest.note("train", split.train.size());
  manifest.note("validation", split.validation.size());
  manifest.note("test", split.test.size());
  manifest.write();

  out << "customers=" << corpus.histories.size() << " baskets=" << corpus.basket_count()
      << " products=" << corpus.vocab.size() << '\n';
  out << "split train=" << split.train.size() << " val=" << split.validation.size() << " test=" << split.test.size()
      << '\n';
}

void cmd_embed(const Options& o, std::ostream& out) {
  if (o.dim == 0) throw UsageError("--dim must be >= 1");
  if (o.epochs < 1) throw UsageError("--epochs must be >= 1");
  if (!(o.lr > 0.0)) throw UsageError("--lr must be > 0");
  Manifest manifest("embed", o);
  const Workspace w = load_workspace(o, manifest, false);
  std::vector<Basket> corpus;
  for (const auto& h : w.train) corpus.insert(corpus.end(), h.baskets.begin(), h.baskets.end());

  TrainOptions train;
  train.learning_rate = o.lr;
  train.min_learning_rate = std::min(1e-4, o.lr);
  train.epochs = o.epochs;
  train.seed = o.seed;
  const auto t0 = std::chrono::steady_clock::now();
  const EmbeddingTable table = train_embeddings(corpus, w.corpus.vocab.size(), o.dim, train);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path path = o.out_dir / kEmbeddings;
  save_embeddings(table, w.corpus.vocab, path);
  manifest.output(path);
  manifest.output(vocabulary_sidecar(path));
  manifest.note("training_baskets", corpus.size());
  manifest.write();
  out << "embedded items=" << table.size() << " dim=" << table.dim() << " baskets=" << corpus.size() << '\n';
  spdlog::info("embedding training took {:.2f}s", seconds);
}

void cmd_tune(const Options& o, std::ostream& out) {
  apply_threads(o);
  Manifest manifest("tune", o);
  const Workspace w = load_workspace(o, manifest, true);
  if (w.validation.empty()) throw DataError("validation split is empty; nothing to tune on");
  const auto ks = parse_size_list(o.k_grid, "--k-grid");
  const auto taus = parse_double_list(o.tau_grid, "--tau-grid");
  const std::size_t k_max = *std::max_element(ks.begin(), ks.end());

  const NeighborDatabase db(w.train, w.table);
  const auto global_freq = FrequencyTable::from_histories(w.train, w.corpus.vocab.size());
  const SearchOptions search{!o.no_prune, 1};

  // Neighbours depend only on k_max; every grid point reuses a prefix.
  std::map<std::string, std::vector<NeighborMatch>> neighbors;
  const auto usable = usable_indices(w.validation);
  if (usable.empty()) throw DataError("no validation customer has two or more baskets");
  std::vector<std::vector<NeighborMatch>> found(usable.size());
  std::exception_ptr failure;
  const auto count = static_cast<std::ptrdiff_t>(usable.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      const auto& h = w.validation[usable[static_cast<std::size_t>(i)]];
      found[static_cast<std::size_t>(i)] = find_neighbors(without_last(h), db, k_max, o.p, search).neighbors;
    } catch (const NoEligibleNeighbors&) {
    } catch (...) {
#pragma omp critical(nextbasket_tune_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  for (std::size_t i = 0; i < usable.size(); ++i) neighbors[w.validation[usable[i]].customer] = std::move(found[i]);

  PredictionConfig base = resolve_config(o, nullptr);
  const fs::path log_path = o.out_dir / kTuneLog;
  auto log = open_output(log_path);
  log << "tau,k,f1,wasserstein,jaccard,neighbor_share\n";

  struct Best {
    double f1 = -1.0;
    double wasserstein = 0.0;
    std::size_t k = 0;
    double tau = 0.0;
  } best;
  for (double tau : taus) {
    for (std::size_t k : ks) {
      PredictionConfig cfg = base;
      cfg.k = k;
      cfg.tau = tau;
      std::atomic<std::size_t> from_neighbors{0};
      const BasketModel model = [&](const PurchaseHistory& prefix) {
        const auto& n = neighbors.at(prefix.customer);
        const auto pred = predict_from_neighbors(prefix, n, db, cfg, global_freq);
        if (pred.source == PredictionSource::Neighbors) from_neighbors.fetch_add(1, std::memory_order_relaxed);
        return pred.basket;
      };
      const EvalReport report = evaluate_model(kOurs, model, w.validation, w.table, o.p, o.threads);
      const double share = static_cast<double>(from_neighbors.load()) / static_cast<double>(report.rows.size());
      log << format_fixed(tau) << ',' << k << ',' << format_fixed(report.mean_f1) << ','
          << format_fixed(report.mean_wasserstein) << ',' << format_fixed(report.mean_jaccard) << ','
          << format_fixed(share) << '\n';

      // Highest F1, then lower Wasserstein, then smaller k, then smaller tau.
      const bool better = report.mean_f1 > best.f1 ||
                          (report.mean_f1 == best.f1 && report.mean_wasserstein < best.wasserstein) ||
                          (report.mean_f1 == best.f1 && report.mean_wasserstein == best.wasserstein &&
                           (k < best.k || (k == best.k && tau < best.tau)));
      if (better) best = {report.mean_f1, report.mean_wasserstein, k, tau};
    }
  }
  log.close();

  const fs::path tuned_path = o.out_dir / kTuned;
  json doc{{"k", best.k},
           {"tau", best.tau},
           {"p", o.p},
           {"fallback_size", fallback_name(base.fallback_size)},
           {"normalize", o.normalize},
           {"validation_f1", best.f1},
           {"validation_wasserstein", best.wasserstein},
           {"grid_points", ks.size() * taus.size()}};
  auto tuned = open_output(tuned_path);
  tuned << doc.dump(2) << '\n';
  tuned.close();

  manifest.output(log_path);
  manifest.output(tuned_path);
  manifest.write();
  out << "tuned k=" << best.k << " tau=" << best.tau << " f1=" << format_fixed(best.f1)
      << " grid=" << ks.size() * taus.size() << '\n';
}

void cmd_predict(const Options& o, std::ostream& out) {
  apply_threads(o);
  Manifest manifest("predict", o);
  const Workspace w = load_workspace(o, manifest, true);
  const PredictionConfig cfg = resolve_config(o, &manifest);
  const NeighborDatabase db(w.train, w.table);
  const auto global_freq = FrequencyTable::from_histories(w.train, w.corpus.vocab.size());
  const SearchOptions search{!o.no_prune, o.threads};

  std::vector<const PurchaseHistory*> queries;
  if (!o.customer.empty()) {
    const auto it = std::find_if(w.corpus.histories.begin(), w.corpus.histories.end(),
                                 [&](const PurchaseHistory& h) { return h.customer == o.customer; });
    if (it == w.corpus.histories.end()) throw DataError("unknown customer '" + o.customer + "'");
    queries.push_back(&*it);
  } else {
    for (const auto& h : w.test) queries.push_back(&h);
  }
  if (queries.empty()) throw DataError("test split is empty; pass --customer");

  const fs::path path = o.out_dir / kPredictions;
  auto f = open_output(path);
  f << "customer,source,mean_distance,basket\n";
  for (const PurchaseHistory* h : queries) {
    const Prediction pred = predict_next(*h, db, cfg, global_freq, search);
    const char* source = pred.source == PredictionSource::Neighbors ? "neighbors" : "fallback";
    const std::string items = basket_codes(pred.basket, w.corpus.vocab);
    f << h->customer << ',' << source << ',' << format_fixed(pred.mean_neighbor_distance) << ',' << items << '\n';
    if (queries.size() == 1) out << h->customer << ' ' << source << ": " << items << '\n';
  }
  f.close();
  manifest.output(path);
  manifest.write();
  if (queries.size() > 1) out << "predicted " << queries.size() << " baskets\n";
}

void cmd_evaluate(const Options& o, std::ostream& out) {
  apply_threads(o);
  Manifest manifest("evaluate", o);
  const Workspace w = load_workspace(o, manifest, true);
  if (w.test.empty()) throw DataError("test split is empty");
  const PredictionConfig cfg = resolve_config(o, &manifest);
  const NeighborDatabase db(w.train, w.table);
  const auto global_freq = FrequencyTable::from_histories(w.train, w.corpus.vocab.size());
  const SupportMatrix support = fit_association(w.train, w.corpus.vocab.size());
  const SearchOptions search{!o.no_prune, 1};

  const std::vector<ModelSpec> models = {
      {kOurs, [&](const PurchaseHistory& q) { return predict_next(q, db, cfg, global_freq, search).basket; }},
      {"global_top", [&](const PurchaseHistory& q) { return global_top(global_freq, mean_basket_size(q)); }},
      {"personal_top", [&](const PurchaseHistory& q) { return personal_top(q); }},
      {"repurchase_last", [&](const PurchaseHistory& q) { return repurchase_last(q); }},
      {"association",
       [&](const PurchaseHistory& q) {
         return predict_association(support, q.baskets.back(), mean_basket_size(q), global_freq);
       }},
  };

  const fs::path comparison_path = o.out_dir / kComparison;
  std::ostringstream comparison;
  comparison << "model,wasserstein,f1,jaccard\n";
  for (const auto& spec : models) {
    EvalReport report = evaluate_model(spec.name, spec.model, w.test, w.table, o.p, o.threads);
    const fs::path report_path = o.out_dir / ("report_" + spec.name + ".csv");
    {
      auto f = open_output(report_path);
      write_report_csv(report, f);
    }
    manifest.output(report_path);
    comparison << spec.name << ',' << format_fixed(report.mean_wasserstein) << ',' << format_fixed(report.mean_f1)
               << ',' << format_fixed(report.mean_jaccard) << '\n';
    out << spec.name << " wasserstein=" << format_fixed(report.mean_wasserstein)
        << " f1=" << format_fixed(report.mean_f1) << " jaccard=" << format_fixed(report.mean_jaccard) << '\n';

    if (o.categories) {
      if (!w.corpus.has_categories()) throw UsageError("--categories needs a corpus with a category column");
      const auto rows = category_breakdown(report, w.corpus.item_category, w.table, o.p);
      const fs::path cat_path = o.out_dir / ("categories_" + spec.name + ".csv");
      auto f = open_output(cat_path);
      write_category_csv(rows, f);
      f.close();
      manifest.output(cat_path);
    }
  }
  {
    auto f = open_output(comparison_path);
    f << comparison.str();
  }
  manifest.output(comparison_path);
  manifest.note("k", cfg.k);
  manifest.note("tau", cfg.tau);
  manifest.write();
}

void cmd_bench(const Options& o, std::ostream& out) {
  apply_threads(o);
  if (o.pairs == 0) throw UsageError("--pairs must be >= 1");
  Manifest manifest("bench", o);
  const Workspace w = load_workspace(o, manifest, true);
  const PredictionConfig cfg = resolve_config(o, &manifest);

  std::vector<PointCloud> clouds;
  for (const auto& h : w.train) {
    for (const auto& b : h.baskets) clouds.push_back(PointCloud::from_basket(b, w.table));
  }
  Rng rng(o.seed);
  std::vector<std::pair<std::size_t, std::size_t>> pairs(o.pairs);
  for (auto& [a, b] : pairs) {
    a = static_cast<std::size_t>(uniform_index(rng, clouds.size()));
    b = static_cast<std::size_t>(uniform_index(rng, clouds.size()));
  }

  // Checksums keep the optimiser from discarding either loop.
  double exact_sum = 0.0;
  auto t0 = std::chrono::steady_clock::now();
  for (const auto& [a, b] : pairs) exact_sum += exact_wasserstein(clouds[a], clouds[b], o.p);
  const double exact_us =
      std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count() / static_cast<double>(pairs.size());
  double bound_sum = 0.0;
  t0 = std::chrono::steady_clock::now();
  for (const auto& [a, b] : pairs) bound_sum += lower_bound_star(clouds[a], clouds[b], o.p);
  const double bound_us =
      std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count() / static_cast<double>(pairs.size());
  if (bound_sum > exact_sum + 1e-9 * (1.0 + exact_sum)) throw InvariantError("lower bounds exceed exact distances");

  const NeighborDatabase db(w.train, w.table);
  const auto& queries = w.test.empty() ? w.validation : w.test;
  SearchStats stats;
  std::size_t searched = 0;
  const SearchOptions search{!o.no_prune, o.threads};
  t0 = std::chrono::steady_clock::now();
  for (const auto& h : queries) {
    if (h.length() < 2) continue;
    try {
      stats += find_neighbors(without_last(h), db, cfg.k, o.p, search).stats;
      ++searched;
    } catch (const NoEligibleNeighbors&) {
    }
  }
  const double search_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json doc{{"pairs", pairs.size()},
           {"dim", w.table.dim()},
           {"exact_us", exact_us},
           {"lower_bound_us", bound_us},
           {"speedup", bound_us > 0.0 ? exact_us / bound_us : 0.0},
           {"k", cfg.k},
           {"prune", !o.no_prune},
           {"queries", searched},
           {"candidates", stats.candidates},
           {"abandoned", stats.abandoned},
           {"cells", stats.cells},
           {"bound_checks", stats.bound_checks},
           {"bound_pruned", stats.bound_pruned},
           {"exact_solves", stats.exact_solves},
           {"hitrate", stats.hitrate()},
           {"search_seconds", search_s}};
  const fs::path path = o.out_dir / kBench;
  auto f = open_output(path);
  f << doc.dump(2) << '\n';
  f.close();
  manifest.output(path);
  manifest.write();
  out << std::fixed << std::setprecision(2) << "exact_us=" << exact_us << " lower_bound_us=" << bound_us
      << " speedup=" << (bound_us > 0.0 ? exact_us / bound_us : 0.0) << std::setprecision(4)
      << " hitrate=" << stats.hitrate() << '\n';
}

std::string help_text() {
  Options o;
  CLI::App app{"nextbasket", "nextbasket"};
  build_app(app, o);
  return app.help();
}

std::vector<FlagInfo> parser_flags() {
  Options o;
  CLI::App app{"nextbasket", "nextbasket"};
  build_app(app, o);
  std::vector<FlagInfo> flags;
  for (const CLI::Option* opt : app.get_options()) {
    for (const auto& name : opt->get_lnames()) {
      flags.push_back({"--" + name, opt->get_default_str(), opt->get_expected_min() == 0});
    }
  }
  return flags;
}

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  if (!spdlog::get("nextbasket")) {
    auto logger = spdlog::stderr_color_mt("nextbasket");
    spdlog::set_default_logger(logger);
  }
  Options o;
  CLI::App app{"nextbasket", "nextbasket"};
  build_app(app, o);
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n(see --help)\n";
    return 1;
  }
  o.k_given = app.count("--k") > 0;
  o.tau_given = app.count("--tau") > 0;

  try {
    if (o.command == "ingest") cmd_ingest(o, out);
    else if (o.command == "embed") cmd_embed(o, out);
    else if (o.command == "tune") cmd_tune(o, out);
    else if (o.command == "predict") cmd_predict(o, out);
    else if (o.command == "evaluate") cmd_evaluate(o, out);
    else if (o.command == "bench") cmd_bench(o, out);
    else throw UsageError("unknown command");
    return 0;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return 2;
  } catch (const InvariantError& e) {
    err << "internal error: " << e.what() << '\n';
    return 3;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 3;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace nextbasket::cli
