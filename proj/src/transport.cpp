#include "nextbasket/transport.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "nextbasket/error.hpp"

namespace nextbasket {

std::vector<std::int64_t> solve_transport(std::span<const std::int64_t> supply,
                                          std::span<const std::int64_t> demand,
                                          std::span<const double> cost) {
  const std::size_t rows = supply.size();
  const std::size_t cols = demand.size();
  if (cost.size() != rows * cols) throw UsageError("transport cost matrix has the wrong shape");
  const auto total_supply = std::accumulate(supply.begin(), supply.end(), std::int64_t{0});
  const auto total_demand = std::accumulate(demand.begin(), demand.end(), std::int64_t{0});
  if (total_supply != total_demand) throw UsageError("transport supplies and demands do not balance");
  for (double c : cost) {
    if (!std::isfinite(c) || c < 0.0) throw UsageError("transport costs must be finite and non-negative");
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  const std::size_t nodes = rows + cols;  // sources first, then sinks

  std::vector<std::int64_t> flow(rows * cols, 0);
  std::vector<std::int64_t> supply_left(supply.begin(), supply.end());
  std::vector<std::int64_t> demand_left(demand.begin(), demand.end());
  std::vector<double> potential(nodes, 0.0);
  std::vector<double> label(nodes);
  std::vector<std::size_t> pred(nodes);
  std::vector<char> settled(nodes);
  std::int64_t remaining = total_supply;

  while (remaining > 0) {
    // Multi-source Dijkstra on reduced costs. label(v) = dist(v) - potential(v),
    // every source with supply left starts at dist 0.
    for (std::size_t v = 0; v < nodes; ++v) {
      label[v] = (v < rows && supply_left[v] > 0) ? -potential[v] : kInf;
      pred[v] = kNone;
      settled[v] = 0;
    }
    for (;;) {
      std::size_t u = kNone;
      for (std::size_t v = 0; v < nodes; ++v) {
        if (!settled[v] && label[v] < kInf && (u == kNone || label[v] < label[u])) u = v;
      }
      if (u == kNone) break;
      settled[u] = 1;
      if (u < rows) {
        for (std::size_t j = 0; j < cols; ++j) {
          const std::size_t v = rows + j;
          const double candidate = label[u] + cost[u * cols + j] + potential[u] - potential[v];
          if (!settled[v] && candidate < label[v]) {
            label[v] = candidate;
            pred[v] = u;
          }
        }
      } else {
        const std::size_t j = u - rows;
        for (std::size_t i = 0; i < rows; ++i) {
          if (flow[i * cols + j] == 0) continue;
          const double candidate = label[u] - cost[i * cols + j] + potential[u] - potential[i];
          if (!settled[i] && candidate < label[i]) {
            label[i] = candidate;
            pred[i] = u;
          }
        }
      }
    }

    std::size_t target = kNone;
    double best = kInf;
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t v = rows + j;
      if (demand_left[j] > 0 && label[v] < kInf && label[v] + potential[v] < best) {
        best = label[v] + potential[v];
        target = v;
      }
    }
    if (target == kNone) throw InvariantError("transport solver found no augmenting path");

    for (std::size_t v = 0; v < nodes; ++v) {
      if (label[v] < kInf) potential[v] += label[v];
    }

    std::int64_t bottleneck = demand_left[target - rows];
    std::size_t v = target;
    while (pred[v] != kNone) {
      const std::size_t u = pred[v];
      if (u >= rows) bottleneck = std::min(bottleneck, flow[v * cols + (u - rows)]);
      v = u;
    }
    const std::size_t origin = v;
    bottleneck = std::min(bottleneck, supply_left[origin]);

    v = target;
    while (pred[v] != kNone) {
      const std::size_t u = pred[v];
      if (u < rows) {
        flow[u * cols + (v - rows)] += bottleneck;
      } else {
        flow[v * cols + (u - rows)] -= bottleneck;
      }
      v = u;
    }
    supply_left[origin] -= bottleneck;
    demand_left[target - rows] -= bottleneck;
    remaining -= bottleneck;
  }
  return flow;
}

}  // namespace nextbasket
