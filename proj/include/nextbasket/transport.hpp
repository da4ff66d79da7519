#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace nextbasket {

/// Exact min-cost transportation problem with integer supplies and demands.
///
/// Successive shortest augmenting paths on the complete bipartite residual
/// graph with Johnson potentials; Dijkstra runs densely since every source is
/// adjacent to every sink. Forward arcs are uncapacitated, so the optimum is
/// integral and exact up to the floating rounding of `cost`.
///
/// `cost` is row-major sources x sinks and must be finite and non-negative.
/// Requires sum(supply) == sum(demand). Returns the flow matrix, same layout.
std::vector<std::int64_t> solve_transport(std::span<const std::int64_t> supply,
                                          std::span<const std::int64_t> demand,
                                          std::span<const double> cost);

}  // namespace nextbasket
