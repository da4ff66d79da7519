#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "nextbasket/core.hpp"
#include "nextbasket/embeddings.hpp"

namespace nextbasket {

/// Embedded basket: one dim-dimensional point per distinct item, each carrying
/// mass 1/size.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::size_t dim) : dim_(dim) {}
  PointCloud(std::size_t dim, std::vector<double> coords);

  static PointCloud from_basket(const Basket& basket, const EmbeddingTable& table);

  [[nodiscard]] std::size_t size() const { return dim_ == 0 ? 0 : coords_.size() / dim_; }
  [[nodiscard]] std::size_t dim() const { return dim_; }
  [[nodiscard]] bool empty() const { return coords_.empty(); }
  [[nodiscard]] std::span<const double> point(std::size_t i) const { return {coords_.data() + i * dim_, dim_}; }

  void push_back(std::span<const double> point);

 private:
  std::size_t dim_ = 0;
  std::vector<double> coords_;
};

/// Euclidean distance. Throws UsageError on a dimension mismatch.
double ground_distance(std::span<const double> x, std::span<const double> y);

/// Optimal plan between two non-empty clouds.
struct TransportSolution {
  double distance = 0.0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> plan;  // rows x cols, row sums 1/rows, column sums 1/cols

  [[nodiscard]] double at(std::size_t i, std::size_t j) const { return plan[i * cols + j]; }
};

/// Solves the p-Wasserstein transport problem exactly. Masses are scaled to
/// integers by lcm(m, n) and the integer problem goes through the min-cost
/// transport solver. Throws UsageError for p < 1, empty clouds or non-finite
/// ground distances.
TransportSolution optimal_transport(const PointCloud& x, const PointCloud& y, double p);

/// p-Wasserstein distance; +inf when either cloud is empty.
double exact_wasserstein(const PointCloud& x, const PointCloud& y, double p);

// Relaxations of the transport problem that drop one marginal constraint.
// Each is (sum over one side of the nearest-neighbour cost^p, weighted by that
// side's mass)^(1/p) and never exceeds exact_wasserstein. All three throw on an
// empty cloud.
double lower_bound_one(const PointCloud& x, const PointCloud& y, double p);
double lower_bound_two(const PointCloud& x, const PointCloud& y, double p);
double lower_bound_star(const PointCloud& x, const PointCloud& y, double p);

/// Exact distance unless lower_bound_star already exceeds `cutoff`, in which
/// case the solve is skipped and nullopt is returned. A pair whose exact
/// distance is <= cutoff is never pruned.
std::optional<double> pruned_wasserstein(const PointCloud& x, const PointCloud& y, double p, double cutoff);

}  // namespace nextbasket
