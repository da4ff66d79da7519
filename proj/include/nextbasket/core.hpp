#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace nextbasket {

/// Dense item index in [0, n) over the retained assortment.
struct ItemId {
  std::uint32_t index = 0;

  friend constexpr auto operator<=>(ItemId, ItemId) = default;
};

/// Bijection between raw item codes and dense ItemIds.
///
/// Codes are assigned in first-seen order. Once frozen, interning an unseen
/// code throws; lookups of known codes keep working.
class Vocabulary {
 public:
  ItemId intern(std::string_view raw_code);
  [[nodiscard]] std::optional<ItemId> find(std::string_view raw_code) const;
  [[nodiscard]] const std::string& code(ItemId id) const;
  [[nodiscard]] std::size_t size() const { return codes_.size(); }
  [[nodiscard]] const std::vector<std::string>& codes() const { return codes_; }

  void freeze() { frozen_ = true; }
  [[nodiscard]] bool frozen() const { return frozen_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.codes_ == b.codes_; }

 private:
  std::vector<std::string> codes_;
  std::unordered_map<std::string, std::uint32_t> index_;
  bool frozen_ = false;
};

/// Text form: one `<raw_code>\t<index>` pair per line, indices dense and ascending.
void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary load_vocabulary(const std::filesystem::path& path);

/// Set of distinct items bought in one transaction, stored sorted by ItemId.
class Basket {
 public:
  Basket() = default;
  explicit Basket(std::vector<ItemId> items);
  Basket(std::initializer_list<ItemId> items);

  [[nodiscard]] std::size_t size() const { return items_.size(); }
  [[nodiscard]] bool empty() const { return items_.empty(); }
  [[nodiscard]] bool contains(ItemId id) const;
  [[nodiscard]] std::span<const ItemId> items() const { return items_; }
  [[nodiscard]] auto begin() const { return items_.begin(); }
  [[nodiscard]] auto end() const { return items_.end(); }

  friend bool operator==(const Basket&, const Basket&) = default;

 private:
  std::vector<ItemId> items_;
};

inline std::size_t basket_size(const Basket& b) { return b.size(); }
std::size_t intersection_size(const Basket& a, const Basket& b);
std::size_t union_size(const Basket& a, const Basket& b);

/// One customer's baskets in transaction order.
struct PurchaseHistory {
  std::string customer;
  std::vector<Basket> baskets;

  [[nodiscard]] std::size_t length() const { return baskets.size(); }
  friend bool operator==(const PurchaseHistory&, const PurchaseHistory&) = default;
};

/// Copy of `h` without its final basket (the query part in leave-last-out evaluation).
PurchaseHistory without_last(const PurchaseHistory& h);

/// How many items the personal fallback predicts.
enum class FallbackSize {
  LastBasket,   // |b_c^{m_c}|
  MeanBasket,   // round-half-up of the mean basket size, at least 1
};

struct PredictionConfig {
  std::size_t k = 5;
  double tau = 20.0;  // compared against the mean SDTW distance of the k neighbours
  double p = 1.0;     // Wasserstein order
  std::size_t embed_dim = 50;
  FallbackSize fallback_size = FallbackSize::LastBasket;
  bool normalize_by_query_length = false;

  /// Throws UsageError when any field is out of range.
  void validate() const;
};

inline constexpr double kTauGrid[] = {5, 10, 15, 20, 25, 30, 35};
inline constexpr std::size_t kNeighborGrid[] = {1, 2, 5, 10, 20};

/// Mean basket size rounded half-up, floored at 1. Throws on an empty history.
std::size_t mean_basket_size(const PurchaseHistory& h);

}  // namespace nextbasket
