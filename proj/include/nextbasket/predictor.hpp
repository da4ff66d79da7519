#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nextbasket/baselines.hpp"
#include "nextbasket/core.hpp"
#include "nextbasket/embeddings.hpp"
#include "nextbasket/error.hpp"
#include "nextbasket/sdtw.hpp"

namespace nextbasket {

/// Thrown when no database history can serve as a neighbour.
class NoEligibleNeighbors : public DataError {
 public:
  using DataError::DataError;
};

/// Mean embedding over every item occurrence; zeros for an empty history.
std::vector<double> history_centroid(const PurchaseHistory& history, const EmbeddingTable& table);

/// Training histories with every basket embedded once up front.
class NeighborDatabase {
 public:
  NeighborDatabase(std::vector<PurchaseHistory> histories, EmbeddingTable table);

  [[nodiscard]] std::size_t size() const { return histories_.size(); }
  [[nodiscard]] const PurchaseHistory& history(std::size_t i) const { return histories_[i]; }
  [[nodiscard]] std::span<const PurchaseHistory> histories() const { return histories_; }
  [[nodiscard]] std::span<const PointCloud> clouds(std::size_t i) const { return clouds_[i]; }
  [[nodiscard]] const EmbeddingTable& table() const { return table_; }
  /// Mean embedding over every item occurrence of history i.
  [[nodiscard]] std::span<const double> centroid(std::size_t i) const {
    return {centroids_.data() + i * table_.dim(), table_.dim()};
  }

 private:
  std::vector<PurchaseHistory> histories_;
  std::vector<EmbeddedHistory> clouds_;
  std::vector<double> centroids_;
  EmbeddingTable table_;
};

/// A matched subsequence history(customer_index).baskets[start..end]; the
/// basket at end + 1 is the successor used as evidence.
struct NeighborMatch {
  std::size_t customer_index = 0;
  std::size_t start = 0;
  std::size_t end = 0;
  double distance = 0.0;

  friend bool operator==(const NeighborMatch&, const NeighborMatch&) = default;
};

/// Counters collected during one neighbour search.
struct SearchStats {
  std::uint64_t candidates = 0;    // eligible histories scanned
  std::uint64_t abandoned = 0;     // candidates stopped early or rejected by the cutoff
  std::uint64_t cells = 0;         // basket-pair cells requested by the DTW recursion
  std::uint64_t bound_checks = 0;  // cells where the lower bound was tested against a finite budget
  std::uint64_t bound_pruned = 0;  // cells whose exact solve the lower bound skipped
  std::uint64_t exact_solves = 0;

  /// Share of lower-bound checks that skipped the exact solve; 0 when none ran.
  [[nodiscard]] double hitrate() const {
    return bound_checks == 0 ? 0.0 : static_cast<double>(bound_pruned) / static_cast<double>(bound_checks);
  }
  SearchStats& operator+=(const SearchStats& other);
};

struct SearchOptions {
  bool prune = true;  // lower-bound pruning plus early abandoning
  int threads = 0;    // 0: OpenMP default
};

struct SearchResult {
  std::vector<NeighborMatch> neighbors;  // ascending by (distance, customer_index)
  SearchStats stats;
};

/// k nearest histories by subsequence DTW, at most one match per customer.
/// Each candidate is matched over all but its last basket so a successor
/// exists; the query's own customer key is skipped. Runs the candidate scan in
/// parallel, visiting candidates by centroid distance to the query so the
/// pruning cutoff tightens early; results do not depend on `options`.
/// Throws NoEligibleNeighbors when no candidate has two or more baskets.
SearchResult find_neighbors(const PurchaseHistory& query, const NeighborDatabase& database, std::size_t k, double p,
                            const SearchOptions& options = {});

/// Serial, unpruned reference of find_neighbors.
SearchResult find_neighbors_reference(const PurchaseHistory& query, const NeighborDatabase& database, std::size_t k,
                                      double p);

/// Successor basket of a match.
const Basket& successor_basket(const NeighborMatch& match, const NeighborDatabase& database);

/// k = 1: the nearest successor verbatim. Otherwise the s most common items
/// across the successors, s being the nearest successor's size; ties by global
/// frequency, then smaller ItemId.
Basket assemble_basket(std::span<const NeighborMatch> neighbors, const NeighborDatabase& database,
                       const FrequencyTable& global_freq);

/// Customer's own n_c most purchased items, ties by global frequency then ItemId.
Basket personal_fallback(const PurchaseHistory& history, std::size_t n_c, const FrequencyTable& global_freq);

enum class PredictionSource { Neighbors, Fallback };

struct Prediction {
  Basket basket;
  PredictionSource source = PredictionSource::Fallback;
  double mean_neighbor_distance = 0.0;  // +inf when no neighbour was found
};

/// Applies the threshold rule to an already computed neighbour list (only the
/// first config.k entries are used).
Prediction predict_from_neighbors(const PurchaseHistory& query, std::span<const NeighborMatch> neighbors,
                                  const NeighborDatabase& database, const PredictionConfig& config,
                                  const FrequencyTable& global_freq);

/// Neighbour prediction when the k neighbours' mean distance is below tau,
/// personal top items otherwise or when no neighbour is eligible.
Prediction predict_next(const PurchaseHistory& query, const NeighborDatabase& database,
                        const PredictionConfig& config, const FrequencyTable& global_freq,
                        const SearchOptions& options = {});

}  // namespace nextbasket
