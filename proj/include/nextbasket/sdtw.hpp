#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <type_traits>
#include <vector>

#include "nextbasket/core.hpp"
#include "nextbasket/embeddings.hpp"
#include "nextbasket/error.hpp"
#include "nextbasket/wasserstein.hpp"

namespace nextbasket {

/// Best contiguous match of a query inside a longer history.
/// `start` and `end` are 0-based inclusive positions in the longer history.
struct SubsequenceMatch {
  double distance = 0.0;
  std::size_t start = 0;
  std::size_t end = 0;

  friend bool operator==(const SubsequenceMatch&, const SubsequenceMatch&) = default;
};

namespace detail {

// A cost callback may take (i, j) or (i, j, budget). With a budget it may
// return any value > budget (typically +inf) instead of the exact cost.
template <class CostFn>
double cell_cost(CostFn& cost, std::size_t i, std::size_t j, double budget) {
  if constexpr (std::is_invocable_r_v<double, CostFn&, std::size_t, std::size_t, double>) {
    return cost(i, j, budget);
  } else {
    return cost(i, j);
  }
}

}  // namespace detail

/// Full-alignment DTW over an n x m grid of non-negative cell costs with
/// D(0,0) = 0, D(i,0) = D(0,j) = inf. `cost(i, j)` is 0-based.
template <class CostFn>
double dtw_over_costs(std::size_t n, std::size_t m, CostFn&& cost) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  if (n == 0 || m == 0) throw UsageError("DTW needs two non-empty sequences");
  std::vector<double> prev(m + 1, kInf);
  std::vector<double> curr(m + 1, kInf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    curr[0] = kInf;
    for (std::size_t j = 1; j <= m; ++j) {
      const double best = std::min({curr[j - 1], prev[j], prev[j - 1]});
      curr[j] = detail::cell_cost(cost, i - 1, j - 1, kInf) + best;
    }
    std::swap(prev, curr);
  }
  return prev[m];
}

/// Subsequence DTW with star padding: the query (n rows) may align to any
/// contiguous run of the m-long history at no extra cost for the skipped
/// prefix and suffix. O(n * m) cell evaluations, each cell evaluated once.
///
/// Ties between equal distances resolve to the smallest end, then the
/// smallest start among optimal paths ending there.
///
/// With a finite `cutoff` the search may stop early: each cell is offered a
/// budget (cutoff minus its cheapest predecessor), cells whose predecessors all
/// exceed the cutoff are not evaluated, and a row whose minimum exceeds the
/// cutoff ends the search. Every cell whose true accumulated cost is <= cutoff
/// is still computed exactly, so a match with distance <= cutoff is returned
/// unchanged. Returns nullopt when the best distance exceeds the cutoff.
template <class CostFn>
std::optional<SubsequenceMatch> sdtw_over_costs(std::size_t n, std::size_t m, CostFn&& cost,
                                                double cutoff = std::numeric_limits<double>::infinity()) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  if (n == 0 || m == 0) throw UsageError("subsequence DTW needs two non-empty sequences");

  // Row 0 is the star row: zero cost above every column, so a path may enter
  // row 1 at any column. start[] carries the smallest start among optimal paths.
  std::vector<double> prev(m + 1, 0.0);
  std::vector<double> curr(m + 1, kInf);
  std::vector<std::size_t> prev_start(m + 1, 0);
  std::vector<std::size_t> curr_start(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    curr[0] = kInf;
    double row_min = kInf;
    for (std::size_t j = 1; j <= m; ++j) {
      double best;
      std::size_t start;
      if (i == 1) {
        best = 0.0;
        start = j - 1;
        if (curr[j - 1] <= best) {  // only ties at zero; prefer the earlier start
          best = curr[j - 1];
          start = curr_start[j - 1];
        }
      } else {
        best = prev[j - 1];
        start = prev_start[j - 1];
        auto consider = [&](double value, std::size_t s) {
          if (value < best || (value == best && s < start)) {
            best = value;
            start = s;
          }
        };
        consider(prev[j], prev_start[j]);
        consider(curr[j - 1], curr_start[j - 1]);
      }
      curr[j] = best > cutoff ? kInf : detail::cell_cost(cost, i - 1, j - 1, cutoff - best) + best;
      curr_start[j] = start;
      row_min = std::min(row_min, curr[j]);
    }
    if (row_min > cutoff) return std::nullopt;
    std::swap(prev, curr);
    std::swap(prev_start, curr_start);
  }

  SubsequenceMatch match{kInf, 0, 0};
  for (std::size_t j = 1; j <= m; ++j) {
    if (prev[j] < match.distance) {
      match = {prev[j], prev_start[j], j - 1};
    }
  }
  if (match.distance > cutoff || match.distance == kInf) return std::nullopt;
  return match;
}

using EmbeddedHistory = std::vector<PointCloud>;

EmbeddedHistory embed_history(const PurchaseHistory& history, const EmbeddingTable& table);

/// DTW between two histories with exact p-Wasserstein basket costs.
double dtw_distance(std::span<const PointCloud> a, std::span<const PointCloud> b, double p);
double dtw_distance(const PurchaseHistory& a, const PurchaseHistory& b, const EmbeddingTable& table, double p);

/// Best subsequence of `candidate` matching the whole `query`.
SubsequenceMatch sdtw_match(std::span<const PointCloud> query, std::span<const PointCloud> candidate, double p);
SubsequenceMatch sdtw_match(const PurchaseHistory& query, const PurchaseHistory& candidate,
                            const EmbeddingTable& table, double p);

}  // namespace nextbasket
