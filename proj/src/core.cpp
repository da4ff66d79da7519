#include "nextbasket/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "nextbasket/error.hpp"

namespace nextbasket {

ItemId Vocabulary::intern(std::string_view raw_code) {
  if (auto it = index_.find(std::string(raw_code)); it != index_.end()) {
    return ItemId{it->second};
  }
  if (frozen_) {
    throw DataError("vocabulary is frozen; unknown item code '" + std::string(raw_code) + "'");
  }
  const auto id = static_cast<std::uint32_t>(codes_.size());
  codes_.emplace_back(raw_code);
  index_.emplace(codes_.back(), id);
  return ItemId{id};
}

std::optional<ItemId> Vocabulary::find(std::string_view raw_code) const {
  if (auto it = index_.find(std::string(raw_code)); it != index_.end()) {
    return ItemId{it->second};
  }
  return std::nullopt;
}

const std::string& Vocabulary::code(ItemId id) const {
  if (id.index >= codes_.size()) {
    throw UsageError("item id " + std::to_string(id.index) + " outside vocabulary of size " +
                     std::to_string(codes_.size()));
  }
  return codes_[id.index];
}

void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    out << vocab.codes()[i] << '\t' << i << '\n';
  }
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file " + path.string());
  Vocabulary vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected '<code>\\t<index>'");
    }
    const std::string code = line.substr(0, tab);
    std::size_t index = 0;
    try {
      index = std::stoul(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": non-numeric index");
    }
    if (index != vocab.size() || vocab.find(code)) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": indices must be dense, ascending and unique");
    }
    vocab.intern(code);
  }
  vocab.freeze();
  return vocab;
}

Basket::Basket(std::vector<ItemId> items) : items_(std::move(items)) {
  std::sort(items_.begin(), items_.end());
  items_.erase(std::unique(items_.begin(), items_.end()), items_.end());
}

Basket::Basket(std::initializer_list<ItemId> items) : Basket(std::vector<ItemId>(items)) {}

bool Basket::contains(ItemId id) const {
  return std::binary_search(items_.begin(), items_.end(), id);
}

std::size_t intersection_size(const Basket& a, const Basket& b) {
  std::size_t count = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++count;
      ++ia;
      ++ib;
    }
  }
  return count;
}

std::size_t union_size(const Basket& a, const Basket& b) {
  return a.size() + b.size() - intersection_size(a, b);
}

PurchaseHistory without_last(const PurchaseHistory& h) {
  PurchaseHistory prefix{h.customer, h.baskets};
  if (!prefix.baskets.empty()) prefix.baskets.pop_back();
  return prefix;
}

void PredictionConfig::validate() const {
  if (k < 1) throw UsageError("k must be >= 1");
  if (!(p >= 1.0) || !std::isfinite(p)) throw UsageError("Wasserstein order p must be a finite value >= 1");
  if (embed_dim < 1) throw UsageError("embedding dimension must be >= 1");
  if (!(tau >= 0.0)) throw UsageError("tau must be >= 0");
}

std::size_t mean_basket_size(const PurchaseHistory& h) {
  if (h.baskets.empty()) throw UsageError("mean basket size of an empty history");
  std::size_t total = 0;
  for (const auto& b : h.baskets) total += b.size();
  // Round half up in integer arithmetic: floor(total / m + 1/2).
  const std::size_t m = h.baskets.size();
  const std::size_t rounded = (2 * total + m) / (2 * m);
  return std::max<std::size_t>(rounded, 1);
}

}  // namespace nextbasket
