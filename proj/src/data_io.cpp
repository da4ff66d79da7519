#include "nextbasket/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "nextbasket/error.hpp"
#include "nextbasket/random.hpp"

#include <spdlog/spdlog.h>

namespace nextbasket {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' || s.front() == '\n')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string location(const std::string& source, std::size_t line) { return source + ":" + std::to_string(line); }

std::optional<std::uint64_t> parse_uint(std::string_view s) {
  s = trim(s);
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

std::uint64_t require_uint(std::string_view s, const std::string& where, std::string_view what) {
  const auto v = parse_uint(s);
  if (!v) throw DataError(where + ": " + std::string(what) + " '" + std::string(trim(s)) + "' is not a non-negative integer");
  return *v;
}

// Column positions of named fields in a header row.
std::unordered_map<std::string, std::size_t> header_columns(const std::vector<std::string>& fields) {
  std::unordered_map<std::string, std::size_t> columns;
  for (std::size_t i = 0; i < fields.size(); ++i) columns.emplace(lower(trim(fields[i])), i);
  return columns;
}

std::size_t require_column(const std::unordered_map<std::string, std::size_t>& columns, const std::string& name,
                           const std::string& where) {
  const auto it = columns.find(name);
  if (it == columns.end()) throw DataError(where + ": missing column '" + name + "'");
  return it->second;
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::vector<std::string> read_fields(const std::string& line, char delimiter, std::size_t needed, const std::string& where) {
  auto fields = split_csv_line(line, delimiter);
  if (fields.size() < needed) {
    throw DataError(where + ": expected at least " + std::to_string(needed) + " fields, found " +
                    std::to_string(fields.size()));
  }
  return fields;
}

bool blank(const std::string& line) { return trim(line).empty(); }

Corpus load_instacart(const fs::path& dir, const LoadOptions& options) {
  if (!fs::is_directory(dir)) throw DataError(dir.string() + ": instacart input must be a directory");
  const fs::path orders_path = dir / "orders.csv";
  const fs::path products_path = dir / "products.csv";
  std::vector<fs::path> line_files;
  for (const char* name : {"order_products__prior.csv", "order_products__train.csv"}) {
    if (fs::exists(dir / name)) line_files.push_back(dir / name);
  }
  if (line_files.empty()) throw DataError(dir.string() + ": no order_products__prior.csv or order_products__train.csv");

  struct Order {
    std::string user;
    std::uint64_t number = 0;
  };
  std::unordered_map<std::string, Order> orders;
  {
    auto in = open_input(orders_path);
    const std::string source = orders_path.string();
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw DataError(source + ": empty file");
    const auto cols = header_columns(split_csv_line(line));
    const std::size_t c_order = require_column(cols, "order_id", location(source, 1));
    const std::size_t c_user = require_column(cols, "user_id", location(source, 1));
    const std::size_t c_number = require_column(cols, "order_number", location(source, 1));
    const std::size_t needed = std::max({c_order, c_user, c_number}) + 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (blank(line)) continue;
      const auto where = location(source, line_no);
      const auto f = read_fields(line, ',', needed, where);
      orders[std::string(trim(f[c_order]))] = {std::string(trim(f[c_user])), require_uint(f[c_number], where, "order_number")};
    }
  }

  std::unordered_map<std::string, std::string> aisle_of;
  {
    auto in = open_input(products_path);
    const std::string source = products_path.string();
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw DataError(source + ": empty file");
    const auto cols = header_columns(split_csv_line(line));
    const std::size_t c_product = require_column(cols, "product_id", location(source, 1));
    const std::size_t c_aisle = require_column(cols, "aisle_id", location(source, 1));
    const std::size_t needed = std::max(c_product, c_aisle) + 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (blank(line)) continue;
      const auto f = read_fields(line, ',', needed, location(source, line_no));
      aisle_of[std::string(trim(f[c_product]))] = std::string(trim(f[c_aisle]));
    }
  }

  HistoryBuilder builder(options.vocabulary.value_or(Vocabulary{}), options.aisle_level);
  for (const auto& path : line_files) {
    auto in = open_input(path);
    const std::string source = path.string();
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) continue;
    const auto cols = header_columns(split_csv_line(line));
    const std::size_t c_order = require_column(cols, "order_id", location(source, 1));
    const std::size_t c_product = require_column(cols, "product_id", location(source, 1));
    const std::size_t needed = std::max(c_order, c_product) + 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (blank(line)) continue;
      const auto where = location(source, line_no);
      const auto f = read_fields(line, ',', needed, where);
      const auto order = orders.find(std::string(trim(f[c_order])));
      if (order == orders.end()) throw DataError(where + ": order '" + f[c_order] + "' is not in orders.csv");
      TransactionRecord record;
      record.customer_key = order->second.user;
      record.order_sequence = order->second.number;
      record.item_code = std::string(trim(f[c_product]));
      const auto aisle = aisle_of.find(record.item_code);
      if (aisle == aisle_of.end()) throw DataError(where + ": product '" + record.item_code + "' is not in products.csv");
      record.category_code = aisle->second;
      builder.add(record, where);
    }
  }
  if (builder.merged_out_of_order() > 0) {
    spdlog::warn("{}: merged {} out-of-order rows into earlier baskets", dir.string(), builder.merged_out_of_order());
  }
  return std::move(builder).finish();
}

// yyyymmdd from "2000-11-01[ hh:mm:ss]", "2000/11/01" or "11/1/2000".
std::optional<std::uint64_t> parse_day(std::string_view text) {
  text = trim(text);
  if (const auto space = text.find_first_of(" T"); space != std::string_view::npos) text = text.substr(0, space);
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == '-' || text[i] == '/') {
      parts.push_back(text.substr(start, i - start));
      start = i + 1;
    }
  }
  if (parts.size() != 3) return std::nullopt;
  const auto a = parse_uint(parts[0]);
  const auto b = parse_uint(parts[1]);
  const auto c = parse_uint(parts[2]);
  if (!a || !b || !c) return std::nullopt;
  std::uint64_t year = 0;
  std::uint64_t month = 0;
  std::uint64_t day = 0;
  if (parts[0].size() == 4) {
    year = *a, month = *b, day = *c;
  } else if (parts[2].size() == 4) {
    month = *a, day = *b, year = *c;
  } else {
    return std::nullopt;
  }
  if (month < 1 || month > 12 || day < 1 || day > 31) return std::nullopt;
  return year * 10000 + month * 100 + day;
}

Corpus load_tafeng(const fs::path& path, const LoadOptions& options) {
  auto in = open_input(path);
  const std::string source = path.string();
  HistoryBuilder builder(options.vocabulary.value_or(Vocabulary{}), options.aisle_level);

  std::string line;
  std::size_t line_no = 0;
  char delimiter = ',';
  std::size_t c_date = 0;
  std::size_t c_customer = 1;
  std::size_t c_subclass = 4;
  std::size_t c_product = 5;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    if (first) {
      first = false;
      delimiter = line.find(';') != std::string::npos ? ';' : ',';
      const auto fields = split_csv_line(line, delimiter);
      const auto cols = header_columns(fields);
      if (cols.contains("customer_id")) {
        const auto where = location(source, line_no);
        c_date = require_column(cols, "transaction_dt", where);
        c_customer = require_column(cols, "customer_id", where);
        c_subclass = require_column(cols, "product_subclass", where);
        c_product = require_column(cols, "product_id", where);
        continue;
      }
      // Positional layout; a header in another language fails the date parse.
      if (!fields.empty() && !parse_day(fields[0])) continue;
    }
    const auto where = location(source, line_no);
    const auto f = read_fields(line, delimiter, std::max({c_date, c_customer, c_subclass, c_product}) + 1, where);
    const auto day = parse_day(f[c_date]);
    if (!day) throw DataError(where + ": unparsable transaction date '" + f[c_date] + "'");
    TransactionRecord record;
    record.customer_key = std::string(trim(f[c_customer]));
    record.order_sequence = *day;
    record.item_code = std::string(trim(f[c_product]));
    record.category_code = std::string(trim(f[c_subclass]));
    if (record.customer_key.empty() || record.item_code.empty()) throw DataError(where + ": empty customer or product id");
    builder.add(record, where);
  }
  return std::move(builder).finish();
}

}  // namespace

SourceFormat parse_format(std::string_view name) {
  const auto n = lower(name);
  if (n == "generic") return SourceFormat::Generic;
  if (n == "instacart") return SourceFormat::Instacart;
  if (n == "tafeng" || n == "ta-feng") return SourceFormat::TaFeng;
  throw UsageError("unknown format '" + std::string(name) + "' (expected generic, instacart or tafeng)");
}

std::string_view format_name(SourceFormat format) {
  switch (format) {
    case SourceFormat::Generic: return "generic";
    case SourceFormat::Instacart: return "instacart";
    case SourceFormat::TaFeng: return "tafeng";
  }
  return "generic";
}

std::size_t Corpus::basket_count() const {
  std::size_t n = 0;
  for (const auto& h : histories) n += h.length();
  return n;
}

std::vector<std::string> split_csv_line(std::string_view line, char delimiter) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delimiter) {
      fields.push_back(std::move(current));
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

HistoryBuilder::HistoryBuilder(Vocabulary vocab, bool aisle_level) : vocab_(std::move(vocab)), aisle_level_(aisle_level) {}

void HistoryBuilder::add(const TransactionRecord& record, std::string_view where) {
  if (record.customer_key.empty()) throw DataError(std::string(where) + ": empty customer key");
  std::string code = record.item_code;
  if (aisle_level_) {
    if (record.category_code.empty()) throw DataError(std::string(where) + ": aisle-level ingestion needs a category");
    code = record.category_code;
  }
  if (code.empty()) throw DataError(std::string(where) + ": empty item code");

  ItemId id;
  if (vocab_.frozen()) {
    const auto known = vocab_.find(code);
    if (!known) throw DataError(std::string(where) + ": item '" + code + "' is not in the vocabulary");
    id = *known;
  } else {
    id = vocab_.intern(code);
  }
  if (!record.category_code.empty()) {
    const std::string& category = aisle_level_ ? code : record.category_code;
    const auto [it, inserted] = category_.emplace(id.index, category);
    if (!inserted && it->second != category) {
      spdlog::warn("{}: item '{}' listed under category '{}' and '{}'; keeping the first", where, code, it->second,
                   category);
    }
  }

  auto [slot, fresh] = customer_index_.try_emplace(record.customer_key, customers_.size());
  if (fresh) customers_.push_back({record.customer_key, {}, std::nullopt});
  Customer& customer = customers_[slot->second];
  auto basket = customer.baskets.find(record.order_sequence);
  if (basket == customer.baskets.end()) {
    basket = customer.baskets.emplace(record.order_sequence, std::vector<ItemId>{}).first;
  } else if (customer.last_sequence && *customer.last_sequence != record.order_sequence) {
    ++merged_;
  }
  customer.last_sequence = record.order_sequence;
  basket->second.push_back(id);
}

Corpus HistoryBuilder::finish() && {
  Corpus corpus;
  corpus.histories.reserve(customers_.size());
  for (auto& c : customers_) {
    PurchaseHistory h;
    h.customer = c.key;
    h.baskets.reserve(c.baskets.size());
    for (auto& [seq, items] : c.baskets) h.baskets.emplace_back(std::move(items));
    corpus.histories.push_back(std::move(h));
  }
  if (!category_.empty()) {
    corpus.item_category.assign(vocab_.size(), std::string{});
    for (const auto& [index, name] : category_) corpus.item_category[index] = name;
  }
  corpus.vocab = std::move(vocab_);
  return corpus;
}

Corpus read_generic_csv(std::istream& in, const std::string& source_name, const LoadOptions& options) {
  HistoryBuilder builder(options.vocabulary.value_or(Vocabulary{}), options.aisle_level);
  std::string line;
  std::size_t line_no = 0;
  std::size_t c_customer = 0;
  std::size_t c_seq = 0;
  std::size_t c_item = 0;
  std::optional<std::size_t> c_category;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto where = location(source_name, line_no);
    if (!have_header) {
      const auto cols = header_columns(split_csv_line(line));
      c_customer = require_column(cols, "customer", where);
      c_seq = require_column(cols, "order_seq", where);
      c_item = require_column(cols, "item", where);
      if (const auto it = cols.find("category"); it != cols.end()) c_category = it->second;
      have_header = true;
      continue;
    }
    const std::size_t needed = std::max({c_customer, c_seq, c_item, c_category.value_or(0)}) + 1;
    const auto f = read_fields(line, ',', needed, where);
    TransactionRecord record;
    record.customer_key = std::string(trim(f[c_customer]));
    record.order_sequence = require_uint(f[c_seq], where, "order_seq");
    record.item_code = std::string(trim(f[c_item]));
    if (c_category) record.category_code = std::string(trim(f[*c_category]));
    builder.add(record, where);
  }
  if (builder.merged_out_of_order() > 0) {
    spdlog::warn("{}: merged {} out-of-order rows into earlier baskets", source_name, builder.merged_out_of_order());
  }
  return std::move(builder).finish();
}

Corpus load_transactions(const fs::path& path, SourceFormat format, const LoadOptions& options) {
  if (!fs::exists(path)) throw DataError(path.string() + ": no such file or directory");
  switch (format) {
    case SourceFormat::Generic: {
      auto in = open_input(path);
      return read_generic_csv(in, path.string(), options);
    }
    case SourceFormat::Instacart: return load_instacart(path, options);
    case SourceFormat::TaFeng: return load_tafeng(path, options);
  }
  throw InvariantError("unhandled source format");
}

void write_generic_csv(const Corpus& corpus, std::ostream& out) {
  const bool categories = corpus.has_categories();
  out << (categories ? "customer,order_seq,item,category\n" : "customer,order_seq,item\n");
  for (const auto& h : corpus.histories) {
    for (std::size_t t = 0; t < h.baskets.size(); ++t) {
      for (ItemId id : h.baskets[t]) {
        out << h.customer << ',' << t << ',' << corpus.vocab.code(id);
        if (categories) out << ',' << corpus.item_category[id.index];
        out << '\n';
      }
    }
  }
}

Corpus preprocess(const Corpus& corpus, const PreprocessOptions& options) {
  if (options.top_n_items == 0) throw UsageError("top_n_items must be >= 1");
  const std::size_t n = corpus.vocab.size();

  std::vector<std::uint64_t> incidence(n, 0);
  for (const auto& h : corpus.histories) {
    for (const auto& b : h.baskets) {
      for (ItemId id : b) ++incidence[id.index];
    }
  }
  // Ids follow first-seen order, so a stable sort on count breaks ties by it.
  std::vector<std::uint32_t> order(n);
  for (std::uint32_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return incidence[a] > incidence[b]; });
  std::vector<bool> top(n, false);
  for (std::size_t r = 0; r < std::min(n, options.top_n_items); ++r) top[order[r]] = true;

  std::vector<PurchaseHistory> kept;
  for (const auto& h : corpus.histories) {
    PurchaseHistory filtered{h.customer, {}};
    for (const auto& b : h.baskets) {
      std::vector<ItemId> items;
      for (ItemId id : b) {
        if (top[id.index]) items.push_back(id);
      }
      if (!items.empty()) filtered.baskets.emplace_back(std::move(items));
    }
    if (filtered.length() < options.min_baskets) continue;
    const bool sizes_ok = std::all_of(filtered.baskets.begin(), filtered.baskets.end(),
                                      [&](const Basket& b) { return b.size() >= options.min_basket_size; });
    if (!sizes_ok) continue;
    kept.push_back(std::move(filtered));
  }
  if (kept.empty()) {
    throw DataError("preprocessing removed every customer; relax --top-items, --min-baskets or --min-basket-size");
  }

  std::vector<bool> used(n, false);
  for (const auto& h : kept) {
    for (const auto& b : h.baskets) {
      for (ItemId id : b) used[id.index] = true;
    }
  }
  Corpus out;
  std::vector<std::uint32_t> remap(n, 0);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!used[i]) continue;
    remap[i] = out.vocab.intern(corpus.vocab.code(ItemId{i})).index;
    if (corpus.has_categories()) out.item_category.push_back(corpus.item_category[i]);
  }
  out.vocab.freeze();
  for (auto& h : kept) {
    for (auto& b : h.baskets) {
      std::vector<ItemId> items;
      items.reserve(b.size());
      for (ItemId id : b) items.push_back(ItemId{remap[id.index]});
      b = Basket(std::move(items));
    }
  }
  out.histories = std::move(kept);
  return out;
}

std::string_view partition_name(Partition part) {
  switch (part) {
    case Partition::Train: return "train";
    case Partition::Validation: return "val";
    case Partition::Test: return "test";
  }
  return "train";
}

std::optional<Partition> SplitAssignment::partition_of(std::string_view customer) const {
  auto in = [&](const std::vector<std::string>& keys) { return std::binary_search(keys.begin(), keys.end(), customer); };
  if (in(train)) return Partition::Train;
  if (in(validation)) return Partition::Validation;
  if (in(test)) return Partition::Test;
  return std::nullopt;
}

SplitAssignment split_customers(std::span<const PurchaseHistory> histories, std::uint64_t seed) {
  std::vector<std::string> keys;
  keys.reserve(histories.size());
  for (const auto& h : histories) keys.push_back(h.customer);
  std::sort(keys.begin(), keys.end());
  if (std::adjacent_find(keys.begin(), keys.end()) != keys.end()) throw DataError("duplicate customer key in corpus");
  if (keys.size() < 3) throw UsageError("a customer split needs at least 3 customers");

  Rng rng(seed);
  shuffle(std::span<std::string>(keys), rng);

  // Largest remainder over 80/10/10; ties go to the earlier partition.
  const std::size_t total = keys.size();
  const std::size_t shares[3] = {8, 1, 1};
  std::size_t counts[3];
  std::size_t remainders[3];
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    counts[i] = total * shares[i] / 10;
    remainders[i] = total * shares[i] % 10;
    assigned += counts[i];
  }
  std::size_t rank[3] = {0, 1, 2};
  std::stable_sort(std::begin(rank), std::end(rank), [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t r = 0; assigned < total; ++r, ++assigned) ++counts[rank[r]];

  SplitAssignment split;
  split.seed = seed;
  auto first = keys.begin();
  split.train.assign(first, first + static_cast<std::ptrdiff_t>(counts[0]));
  first += static_cast<std::ptrdiff_t>(counts[0]);
  split.validation.assign(first, first + static_cast<std::ptrdiff_t>(counts[1]));
  first += static_cast<std::ptrdiff_t>(counts[1]);
  split.test.assign(first, keys.end());
  for (auto* set : {&split.train, &split.validation, &split.test}) std::sort(set->begin(), set->end());
  return split;
}

void write_split(const SplitAssignment& split, std::ostream& out) {
  std::vector<std::pair<std::string, Partition>> rows;
  for (const auto& k : split.train) rows.emplace_back(k, Partition::Train);
  for (const auto& k : split.validation) rows.emplace_back(k, Partition::Validation);
  for (const auto& k : split.test) rows.emplace_back(k, Partition::Test);
  std::sort(rows.begin(), rows.end());
  for (const auto& [key, part] : rows) out << key << '\t' << partition_name(part) << '\n';
}

SplitAssignment read_split(std::istream& in, const std::string& source_name) {
  SplitAssignment split;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto where = location(source_name, line_no);
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError(where + ": expected '<customer>\\t<train|val|test>'");
    std::string key = line.substr(0, tab);
    const auto part = trim(std::string_view(line).substr(tab + 1));
    if (!seen.insert(key).second) throw DataError(where + ": customer '" + key + "' listed twice");
    if (part == "train") {
      split.train.push_back(std::move(key));
    } else if (part == "val") {
      split.validation.push_back(std::move(key));
    } else if (part == "test") {
      split.test.push_back(std::move(key));
    } else {
      throw DataError(where + ": unknown partition '" + std::string(part) + "'");
    }
  }
  for (auto* set : {&split.train, &split.validation, &split.test}) std::sort(set->begin(), set->end());
  return split;
}

std::vector<PurchaseHistory> select_partition(std::span<const PurchaseHistory> histories,
                                              const SplitAssignment& split, Partition part) {
  std::vector<PurchaseHistory> out;
  for (const auto& h : histories) {
    if (split.partition_of(h.customer) == part) out.push_back(h);
  }
  return out;
}

}  // namespace nextbasket
