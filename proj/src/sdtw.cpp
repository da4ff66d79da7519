#include "nextbasket/sdtw.hpp"

namespace nextbasket {

EmbeddedHistory embed_history(const PurchaseHistory& history, const EmbeddingTable& table) {
  EmbeddedHistory clouds;
  clouds.reserve(history.baskets.size());
  for (const auto& basket : history.baskets) clouds.push_back(PointCloud::from_basket(basket, table));
  return clouds;
}

double dtw_distance(std::span<const PointCloud> a, std::span<const PointCloud> b, double p) {
  return dtw_over_costs(a.size(), b.size(),
                        [&](std::size_t i, std::size_t j) { return exact_wasserstein(a[i], b[j], p); });
}

double dtw_distance(const PurchaseHistory& a, const PurchaseHistory& b, const EmbeddingTable& table, double p) {
  return dtw_distance(embed_history(a, table), embed_history(b, table), p);
}

SubsequenceMatch sdtw_match(std::span<const PointCloud> query, std::span<const PointCloud> candidate, double p) {
  auto match = sdtw_over_costs(query.size(), candidate.size(), [&](std::size_t i, std::size_t j) {
    return exact_wasserstein(query[i], candidate[j], p);
  });
  if (!match) throw InvariantError("unbounded subsequence DTW returned no match");
  return *match;
}

SubsequenceMatch sdtw_match(const PurchaseHistory& query, const PurchaseHistory& candidate,
                            const EmbeddingTable& table, double p) {
  return sdtw_match(embed_history(query, table), embed_history(candidate, table), p);
}

}  // namespace nextbasket
