#include "nextbasket/baselines.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "nextbasket/error.hpp"

namespace nextbasket {

namespace {

Basket first_n(const std::vector<ItemId>& ranked, std::size_t n) {
  return Basket(std::vector<ItemId>(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(std::min(n, ranked.size()))));
}

void require_positive(std::size_t n_c) {
  if (n_c == 0) throw UsageError("predicted basket size n_c must be >= 1");
}

}  // namespace

FrequencyTable FrequencyTable::from_histories(std::span<const PurchaseHistory> histories, std::size_t n_items) {
  FrequencyTable table(n_items);
  for (const auto& h : histories) {
    for (const auto& b : h.baskets) table.add(b);
  }
  return table;
}

FrequencyTable FrequencyTable::from_history(const PurchaseHistory& history, std::size_t n_items) {
  return from_histories(std::span<const PurchaseHistory>(&history, 1), n_items);
}

void FrequencyTable::add(const Basket& basket) {
  for (ItemId id : basket) {
    if (id.index >= counts_.size()) counts_.resize(id.index + 1, 0);
    ++counts_[id.index];
  }
}

std::vector<ItemId> rank_items(std::span<const std::uint64_t> primary, const FrequencyTable* secondary,
                               bool include_zero) {
  std::vector<ItemId> ids;
  ids.reserve(primary.size());
  for (std::uint32_t i = 0; i < primary.size(); ++i) {
    if (include_zero || primary[i] > 0) ids.push_back(ItemId{i});
  }
  std::sort(ids.begin(), ids.end(), [&](ItemId a, ItemId b) {
    if (primary[a.index] != primary[b.index]) return primary[a.index] > primary[b.index];
    if (secondary != nullptr) {
      const auto ca = secondary->count(a);
      const auto cb = secondary->count(b);
      if (ca != cb) return ca > cb;
    }
    return a < b;
  });
  return ids;
}

Basket global_top(const FrequencyTable& train_freq, std::size_t n_c) {
  require_positive(n_c);
  return first_n(rank_items(train_freq.counts(), nullptr, true), n_c);
}

Basket personal_top(const PurchaseHistory& history, std::size_t n_c) {
  require_positive(n_c);
  FrequencyTable personal;
  for (const auto& b : history.baskets) personal.add(b);
  return first_n(rank_items(personal.counts(), nullptr, false), n_c);
}

Basket personal_top(const PurchaseHistory& history) { return personal_top(history, mean_basket_size(history)); }

Basket repurchase_last(const PurchaseHistory& history) {
  if (history.baskets.empty()) throw UsageError("cannot repurchase from an empty history");
  return history.baskets.back();
}

void SupportMatrix::add(ItemId from, ItemId to, std::uint64_t count) {
  if (from.index >= rows_.size() || to.index >= rows_.size()) throw UsageError("support entry outside the assortment");
  auto& row = rows_[from.index];
  auto it = std::lower_bound(row.begin(), row.end(), to.index,
                             [](const auto& entry, std::uint32_t key) { return entry.first < key; });
  if (it != row.end() && it->first == to.index) {
    it->second += count;
  } else {
    row.insert(it, {to.index, count});
  }
}

std::uint64_t SupportMatrix::count(ItemId from, ItemId to) const {
  if (from.index >= rows_.size()) return 0;
  const auto& row = rows_[from.index];
  auto it = std::lower_bound(row.begin(), row.end(), to.index,
                             [](const auto& entry, std::uint32_t key) { return entry.first < key; });
  return (it != row.end() && it->first == to.index) ? it->second : 0;
}

std::uint64_t SupportMatrix::total() const {
  std::uint64_t sum = 0;
  for (const auto& row : rows_) {
    for (const auto& [to, c] : row) sum += c;
  }
  return sum;
}

SupportMatrix fit_association(std::span<const PurchaseHistory> train, std::size_t n_items) {
  SupportMatrix support(n_items);
  for (const auto& h : train) {
    for (std::size_t i = 0; i + 1 < h.baskets.size(); ++i) {
      for (ItemId a : h.baskets[i]) {
        for (ItemId b : h.baskets[i + 1]) support.add(a, b);
      }
    }
  }
  return support;
}

Basket predict_association(const SupportMatrix& support, const Basket& last_basket, std::size_t n_c,
                           const FrequencyTable& global_freq) {
  require_positive(n_c);
  std::vector<std::uint64_t> score(support.size(), 0);
  for (ItemId a : last_basket) {
    if (a.index >= support.size()) continue;
    for (const auto& [b, c] : support.row(a)) score[b] += c;
  }
  return first_n(rank_items(score, &global_freq, true), n_c);
}

void save_support(const SupportMatrix& support, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::uint32_t a = 0; a < support.size(); ++a) {
    for (const auto& [b, c] : support.row(ItemId{a})) out << a << ' ' << b << ' ' << c << '\n';
  }
}

SupportMatrix load_support(const std::filesystem::path& path, std::size_t n_items) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open support file " + path.string());
  SupportMatrix support(n_items);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::uint64_t a = 0;
    std::uint64_t b = 0;
    std::uint64_t c = 0;
    std::string extra;
    if (!(fields >> a >> b >> c) || (fields >> extra) || a >= n_items || b >= n_items || c == 0) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 'a b count' with a, b < " +
                      std::to_string(n_items) + " and count > 0");
    }
    support.add(ItemId{static_cast<std::uint32_t>(a)}, ItemId{static_cast<std::uint32_t>(b)}, c);
  }
  return support;
}

}  // namespace nextbasket
