#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nextbasket/core.hpp"

namespace nextbasket {

/// Purchase count per item over a collection of baskets (basket incidence).
class FrequencyTable {
 public:
  FrequencyTable() = default;
  explicit FrequencyTable(std::size_t n_items) : counts_(n_items, 0) {}
  explicit FrequencyTable(std::vector<std::uint64_t> counts) : counts_(std::move(counts)) {}

  static FrequencyTable from_histories(std::span<const PurchaseHistory> histories, std::size_t n_items);
  static FrequencyTable from_history(const PurchaseHistory& history, std::size_t n_items);

  void add(const Basket& basket);
  [[nodiscard]] std::uint64_t count(ItemId id) const { return id.index < counts_.size() ? counts_[id.index] : 0; }
  [[nodiscard]] std::size_t size() const { return counts_.size(); }
  [[nodiscard]] std::span<const std::uint64_t> counts() const { return counts_; }

 private:
  std::vector<std::uint64_t> counts_;
};

/// Items ranked by descending `primary`, ties by descending `secondary` (when
/// given), then ascending ItemId; only items with a non-zero primary count are
/// returned unless `include_zero` is set.
std::vector<ItemId> rank_items(std::span<const std::uint64_t> primary, const FrequencyTable* secondary,
                               bool include_zero);

/// The n_c globally most purchased items, ties by smaller ItemId. Returns all
/// items when n_c exceeds the vocabulary; throws UsageError when n_c == 0.
Basket global_top(const FrequencyTable& train_freq, std::size_t n_c);

/// The n_c items the customer bought most often, ties by smaller ItemId.
Basket personal_top(const PurchaseHistory& history, std::size_t n_c);

/// Personal top items with n_c = mean basket size of the history.
Basket personal_top(const PurchaseHistory& history);

/// Verbatim copy of the last basket. Throws UsageError on an empty history.
Basket repurchase_last(const PurchaseHistory& history);

/// Successor support: count(a, b) is how often a sits in one basket and b in the
/// next basket of the same customer, counted with multiplicity over all
/// customers and positions.
class SupportMatrix {
 public:
  SupportMatrix() = default;
  explicit SupportMatrix(std::size_t n_items) : rows_(n_items) {}

  void add(ItemId from, ItemId to, std::uint64_t count = 1);
  [[nodiscard]] std::uint64_t count(ItemId from, ItemId to) const;
  [[nodiscard]] std::size_t size() const { return rows_.size(); }
  [[nodiscard]] std::uint64_t total() const;
  /// Non-zero entries of one row as (to, count), ascending by `to`.
  [[nodiscard]] const std::vector<std::pair<std::uint32_t, std::uint64_t>>& row(ItemId from) const {
    return rows_[from.index];
  }

  friend bool operator==(const SupportMatrix&, const SupportMatrix&) = default;

 private:
  std::vector<std::vector<std::pair<std::uint32_t, std::uint64_t>>> rows_;
};

SupportMatrix fit_association(std::span<const PurchaseHistory> train, std::size_t n_items);

/// Top-n_c items by sum of support from the last basket's items. Ties (including
/// zero-support completion) by global frequency, then smaller ItemId.
Basket predict_association(const SupportMatrix& support, const Basket& last_basket, std::size_t n_c,
                           const FrequencyTable& global_freq);

/// Sparse text triples `a b count`, one non-zero entry per line, indices as ItemIds.
void save_support(const SupportMatrix& support, const std::filesystem::path& path);
SupportMatrix load_support(const std::filesystem::path& path, std::size_t n_items);

}  // namespace nextbasket
