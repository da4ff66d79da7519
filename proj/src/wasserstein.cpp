#include "nextbasket/wasserstein.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nextbasket/error.hpp"
#include "nextbasket/transport.hpp"

namespace nextbasket {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Absorbs the rounding gap between the bound and the solver's objective, both
// summed from the same cost matrix.
constexpr double kLowerBoundSlack = 1e-12;

double power(double d, double p) {
  if (p == 1.0) return d;
  if (p == 2.0) return d * d;
  return std::pow(d, p);
}

double root(double x, double p) {
  if (p == 1.0) return x;
  if (p == 2.0) return std::sqrt(x);
  return std::pow(x, 1.0 / p);
}

void check_order(double p) {
  if (!(p >= 1.0) || !std::isfinite(p)) throw UsageError("Wasserstein order p must be a finite value >= 1");
}

void check_non_empty(const PointCloud& x, const PointCloud& y) {
  if (x.empty() || y.empty()) throw UsageError("lower bound of an empty point cloud");
}

// Row-major m x n matrix of d(x_i, y_j)^p.
std::vector<double> cost_matrix(const PointCloud& x, const PointCloud& y, double p) {
  if (x.dim() != y.dim()) throw UsageError("point clouds have different dimensions");
  const std::size_t m = x.size();
  const std::size_t n = y.size();
  std::vector<double> cost(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = power(ground_distance(x.point(i), y.point(j)), p);
  }
  return cost;
}

struct BoundPowers {
  double one;  // LB1^p
  double two;  // LB2^p
};

BoundPowers bound_powers(std::span<const double> cost, std::size_t m, std::size_t n) {
  std::vector<double> col_min(n, kInf);
  double row_sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double row_min = kInf;
    for (std::size_t j = 0; j < n; ++j) {
      const double c = cost[i * n + j];
      row_min = std::min(row_min, c);
      col_min[j] = std::min(col_min[j], c);
    }
    row_sum += row_min;
  }
  const double col_sum = std::accumulate(col_min.begin(), col_min.end(), 0.0);
  return {row_sum / static_cast<double>(m), col_sum / static_cast<double>(n)};
}

TransportSolution solve_from_costs(std::span<const double> cost, std::size_t m, std::size_t n, double p) {
  for (double c : cost) {
    if (!std::isfinite(c)) throw UsageError("non-finite ground distance");
  }
  const auto scale = static_cast<std::int64_t>(std::lcm(m, n));
  const std::vector<std::int64_t> supply(m, scale / static_cast<std::int64_t>(m));
  const std::vector<std::int64_t> demand(n, scale / static_cast<std::int64_t>(n));
  const auto flow = solve_transport(supply, demand, cost);

  TransportSolution solution{0.0, m, n, std::vector<double>(m * n)};
  double total = 0.0;
  for (std::size_t k = 0; k < flow.size(); ++k) {
    if (flow[k] == 0) continue;
    solution.plan[k] = static_cast<double>(flow[k]) / static_cast<double>(scale);
    total += static_cast<double>(flow[k]) * cost[k];
  }
  solution.distance = root(total / static_cast<double>(scale), p);
  return solution;
}

}  // namespace

PointCloud::PointCloud(std::size_t dim, std::vector<double> coords) : dim_(dim), coords_(std::move(coords)) {
  if (dim_ == 0 ? !coords_.empty() : coords_.size() % dim_ != 0) {
    throw UsageError("point coordinates are not a multiple of the dimension");
  }
}

PointCloud PointCloud::from_basket(const Basket& basket, const EmbeddingTable& table) {
  PointCloud cloud(table.dim());
  cloud.coords_.reserve(basket.size() * table.dim());
  for (ItemId id : basket) cloud.push_back(table.row(id));
  return cloud;
}

void PointCloud::push_back(std::span<const double> point) {
  if (point.size() != dim_) throw UsageError("point has the wrong dimension");
  coords_.insert(coords_.end(), point.begin(), point.end());
}

double ground_distance(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw UsageError("ground distance between vectors of different dimension");
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - y[i];
    sum += diff * diff;
  }
  return std::sqrt(sum);
}

TransportSolution optimal_transport(const PointCloud& x, const PointCloud& y, double p) {
  check_order(p);
  if (x.empty() || y.empty()) throw UsageError("optimal transport needs two non-empty point clouds");
  return solve_from_costs(cost_matrix(x, y, p), x.size(), y.size(), p);
}

double exact_wasserstein(const PointCloud& x, const PointCloud& y, double p) {
  check_order(p);
  if (x.empty() || y.empty()) return kInf;
  return solve_from_costs(cost_matrix(x, y, p), x.size(), y.size(), p).distance;
}

double lower_bound_one(const PointCloud& x, const PointCloud& y, double p) {
  check_order(p);
  check_non_empty(x, y);
  const auto cost = cost_matrix(x, y, p);
  return root(bound_powers(cost, x.size(), y.size()).one, p);
}

double lower_bound_two(const PointCloud& x, const PointCloud& y, double p) {
  check_order(p);
  check_non_empty(x, y);
  const auto cost = cost_matrix(x, y, p);
  return root(bound_powers(cost, x.size(), y.size()).two, p);
}

double lower_bound_star(const PointCloud& x, const PointCloud& y, double p) {
  check_order(p);
  check_non_empty(x, y);
  const auto cost = cost_matrix(x, y, p);
  const auto b = bound_powers(cost, x.size(), y.size());
  return root(std::max(b.one, b.two), p);
}

std::optional<double> pruned_wasserstein(const PointCloud& x, const PointCloud& y, double p, double cutoff) {
  check_order(p);
  if (std::isnan(cutoff) || cutoff < 0.0) throw UsageError("pruning cutoff must be >= 0");
  if (x.empty() || y.empty()) {
    if (cutoff == kInf) return kInf;
    return std::nullopt;
  }
  const auto cost = cost_matrix(x, y, p);
  const auto b = bound_powers(cost, x.size(), y.size());
  const double bound = root(std::max(b.one, b.two), p);
  if (bound > cutoff + kLowerBoundSlack * (1.0 + cutoff)) return std::nullopt;
  return solve_from_costs(cost, x.size(), y.size(), p).distance;
}

}  // namespace nextbasket
