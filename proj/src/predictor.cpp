#include "nextbasket/predictor.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <limits>
#include <mutex>

namespace nextbasket {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool ranks_before(const NeighborMatch& a, const NeighborMatch& b) {
  if (a.distance != b.distance) return a.distance < b.distance;
  return a.customer_index < b.customer_index;
}

// Best k matches seen so far. offer() is linearizable under the mutex; cutoff()
// may lag behind, which only weakens pruning.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) { items_.reserve(k + 1); }

  [[nodiscard]] double cutoff() const { return cutoff_.load(std::memory_order_relaxed); }

  void offer(const NeighborMatch& match) {
    std::lock_guard lock(mutex_);
    if (items_.size() == k_ && !ranks_before(match, items_.back())) return;
    items_.insert(std::upper_bound(items_.begin(), items_.end(), match, ranks_before), match);
    if (items_.size() > k_) items_.pop_back();
    if (items_.size() == k_) cutoff_.store(items_.back().distance, std::memory_order_relaxed);
  }

  std::vector<NeighborMatch> take() { return std::move(items_); }

 private:
  std::size_t k_;
  std::mutex mutex_;
  std::vector<NeighborMatch> items_;
  std::atomic<double> cutoff_{kInf};
};

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) sum += (a[d] - b[d]) * (a[d] - b[d]);
  return sum;
}

std::vector<std::size_t> eligible_candidates(const PurchaseHistory& query, const NeighborDatabase& database) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < database.size(); ++i) {
    const auto& h = database.history(i);
    if (h.length() < 2) continue;
    if (!query.customer.empty() && h.customer == query.customer) continue;
    eligible.push_back(i);
  }
  if (eligible.empty()) throw NoEligibleNeighbors("no database history with a successor basket is available");
  return eligible;
}

void check_query(const PurchaseHistory& query, std::size_t k) {
  if (query.baskets.empty()) throw UsageError("cannot match an empty purchase history");
  if (k == 0) throw UsageError("k must be >= 1");
}

}  // namespace

std::vector<double> history_centroid(const PurchaseHistory& history, const EmbeddingTable& table) {
  std::vector<double> centre(table.dim(), 0.0);
  std::size_t count = 0;
  for (const auto& b : history.baskets) {
    for (ItemId id : b) {
      const auto row = table.row(id);
      for (std::size_t d = 0; d < centre.size(); ++d) centre[d] += row[d];
      ++count;
    }
  }
  if (count > 0) {
    for (auto& x : centre) x /= static_cast<double>(count);
  }
  return centre;
}

NeighborDatabase::NeighborDatabase(std::vector<PurchaseHistory> histories, EmbeddingTable table)
    : histories_(std::move(histories)), table_(std::move(table)) {
  clouds_.reserve(histories_.size());
  centroids_.reserve(histories_.size() * table_.dim());
  for (const auto& h : histories_) {
    clouds_.push_back(embed_history(h, table_));
    const auto centre = history_centroid(h, table_);
    centroids_.insert(centroids_.end(), centre.begin(), centre.end());
  }
}

SearchStats& SearchStats::operator+=(const SearchStats& other) {
  candidates += other.candidates;
  abandoned += other.abandoned;
  cells += other.cells;
  bound_checks += other.bound_checks;
  bound_pruned += other.bound_pruned;
  exact_solves += other.exact_solves;
  return *this;
}

SearchResult find_neighbors(const PurchaseHistory& query, const NeighborDatabase& database, std::size_t k, double p,
                            const SearchOptions& options) {
  check_query(query, k);
  auto eligible = eligible_candidates(query, database);
  const auto query_clouds = embed_history(query, database.table());
  if (options.prune) {
    const auto centre = history_centroid(query, database.table());
    std::vector<std::pair<double, std::size_t>> keyed;
    keyed.reserve(eligible.size());
    for (std::size_t index : eligible) keyed.emplace_back(squared_distance(centre, database.centroid(index)), index);
    std::sort(keyed.begin(), keyed.end());
    for (std::size_t e = 0; e < keyed.size(); ++e) eligible[e] = keyed[e].second;
  }

  TopK best(k);
  SearchStats stats;
  std::exception_ptr failure;
  const int threads = options.threads > 0 ? options.threads : omp_get_max_threads();
  const auto count = static_cast<std::ptrdiff_t>(eligible.size());

#pragma omp parallel num_threads(threads)
  {
    SearchStats local;
#pragma omp for schedule(dynamic, 4)
    for (std::ptrdiff_t e = 0; e < count; ++e) {
      try {
        const std::size_t index = eligible[static_cast<std::size_t>(e)];
        const auto clouds = database.clouds(index);
        const auto candidate = clouds.first(clouds.size() - 1);
        ++local.candidates;

        auto cost = [&](std::size_t i, std::size_t j, double budget) {
          ++local.cells;
          if (!options.prune || budget == kInf) {
            ++local.exact_solves;
            return exact_wasserstein(query_clouds[i], candidate[j], p);
          }
          ++local.bound_checks;
          const auto exact = pruned_wasserstein(query_clouds[i], candidate[j], p, budget);
          if (!exact) {
            ++local.bound_pruned;
            return kInf;
          }
          ++local.exact_solves;
          return *exact;
        };

        const double cutoff = options.prune ? best.cutoff() : kInf;
        const auto match = sdtw_over_costs(query_clouds.size(), candidate.size(), cost, cutoff);
        if (!match) {
          ++local.abandoned;
          continue;
        }
        best.offer({index, match->start, match->end, match->distance});
      } catch (...) {
#pragma omp critical(nextbasket_search_failure)
        if (!failure) failure = std::current_exception();
      }
    }
#pragma omp critical(nextbasket_search_stats)
    stats += local;
  }
  if (failure) std::rethrow_exception(failure);
  return {best.take(), stats};
}

SearchResult find_neighbors_reference(const PurchaseHistory& query, const NeighborDatabase& database, std::size_t k,
                                      double p) {
  check_query(query, k);
  const auto eligible = eligible_candidates(query, database);
  const auto query_clouds = embed_history(query, database.table());

  SearchResult result;
  for (std::size_t index : eligible) {
    const auto clouds = database.clouds(index);
    const auto candidate = clouds.first(clouds.size() - 1);
    ++result.stats.candidates;
    result.stats.cells += query_clouds.size() * candidate.size();
    result.stats.exact_solves += query_clouds.size() * candidate.size();
    const auto match = sdtw_match(query_clouds, candidate, p);
    result.neighbors.push_back({index, match.start, match.end, match.distance});
  }
  std::sort(result.neighbors.begin(), result.neighbors.end(), ranks_before);
  if (result.neighbors.size() > k) result.neighbors.resize(k);
  return result;
}

const Basket& successor_basket(const NeighborMatch& match, const NeighborDatabase& database) {
  const auto& h = database.history(match.customer_index);
  if (match.end + 1 >= h.length()) throw InvariantError("neighbour match has no successor basket");
  return h.baskets[match.end + 1];
}

Basket assemble_basket(std::span<const NeighborMatch> neighbors, const NeighborDatabase& database,
                       const FrequencyTable& global_freq) {
  if (neighbors.empty()) throw UsageError("cannot assemble a basket without neighbours");
  const Basket& nearest = successor_basket(neighbors.front(), database);
  if (neighbors.size() == 1) return nearest;

  std::vector<std::uint64_t> votes(database.table().size(), 0);
  for (const auto& n : neighbors) {
    for (ItemId id : successor_basket(n, database)) {
      if (id.index >= votes.size()) votes.resize(id.index + 1, 0);
      ++votes[id.index];
    }
  }
  const auto ranked = rank_items(votes, &global_freq, false);
  const std::size_t size = std::min(nearest.size(), ranked.size());
  return Basket(std::vector<ItemId>(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(size)));
}

Basket personal_fallback(const PurchaseHistory& history, std::size_t n_c, const FrequencyTable& global_freq) {
  FrequencyTable personal;
  for (const auto& b : history.baskets) personal.add(b);
  const auto ranked = rank_items(personal.counts(), &global_freq, false);
  const std::size_t size = std::min(n_c, ranked.size());
  return Basket(std::vector<ItemId>(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(size)));
}

Prediction predict_from_neighbors(const PurchaseHistory& query, std::span<const NeighborMatch> neighbors,
                                  const NeighborDatabase& database, const PredictionConfig& config,
                                  const FrequencyTable& global_freq) {
  config.validate();
  if (query.baskets.empty()) throw UsageError("cannot predict from an empty purchase history");

  const auto used = neighbors.first(std::min(config.k, neighbors.size()));
  double mean = kInf;
  if (!used.empty()) {
    double sum = 0.0;
    for (const auto& n : used) sum += n.distance;
    mean = sum / static_cast<double>(used.size());
    if (config.normalize_by_query_length) mean /= static_cast<double>(query.length());
  }

  if (mean < config.tau) {
    return {assemble_basket(used, database, global_freq), PredictionSource::Neighbors, mean};
  }
  const std::size_t n_c = config.fallback_size == FallbackSize::LastBasket ? query.baskets.back().size()
                                                                           : mean_basket_size(query);
  return {personal_fallback(query, n_c, global_freq), PredictionSource::Fallback, mean};
}

Prediction predict_next(const PurchaseHistory& query, const NeighborDatabase& database,
                        const PredictionConfig& config, const FrequencyTable& global_freq,
                        const SearchOptions& options) {
  config.validate();
  std::vector<NeighborMatch> neighbors;
  try {
    neighbors = find_neighbors(query, database, config.k, config.p, options).neighbors;
  } catch (const NoEligibleNeighbors&) {
    neighbors.clear();
  }
  return predict_from_neighbors(query, neighbors, database, config, global_freq);
}

}  // namespace nextbasket
