// Serial reference vs OpenMP kernels on a synthetic archetype corpus.
// Usage: bench_kernels [customers] [threads]
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>

#include "nextbasket/baselines.hpp"
#include "nextbasket/data_io.hpp"
#include "nextbasket/evaluation.hpp"
#include "nextbasket/predictor.hpp"
#include "synthetic.hpp"

using namespace nextbasket;

namespace {

double time_ms(const std::function<void()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  nextbasket::testing::SyntheticOptions o;
  o.customers = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 500;
  const int threads = argc > 2 ? std::atoi(argv[2]) : omp_get_max_threads();
  const auto corpus = nextbasket::testing::make_archetype_corpus(o);
  const auto split = split_customers(corpus.histories, 42);
  const auto train = select_partition(corpus.histories, split, Partition::Train);
  const auto test = select_partition(corpus.histories, split, Partition::Test);
  const NeighborDatabase db(train, corpus.planted);
  const std::size_t k = 5;
  std::printf("customers=%zu train=%zu queries=%zu threads=%d\n", corpus.histories.size(), train.size(), test.size(),
              threads);

  std::vector<SearchResult> reference(test.size());
  std::vector<SearchResult> pruned(test.size());
  std::vector<SearchResult> unpruned(test.size());
  const double t_ref = time_ms([&] {
    for (std::size_t i = 0; i < test.size(); ++i) reference[i] = find_neighbors_reference(without_last(test[i]), db, k, 1.0);
  });
  const double t_unpruned = time_ms([&] {
    for (std::size_t i = 0; i < test.size(); ++i) {
      unpruned[i] = find_neighbors(without_last(test[i]), db, k, 1.0, {false, threads});
    }
  });
  const double t_pruned = time_ms([&] {
    for (std::size_t i = 0; i < test.size(); ++i) {
      pruned[i] = find_neighbors(without_last(test[i]), db, k, 1.0, {true, threads});
    }
  });
  std::size_t mismatches = 0;
  SearchStats stats;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (pruned[i].neighbors != reference[i].neighbors) ++mismatches;
    if (unpruned[i].neighbors != reference[i].neighbors) ++mismatches;
    stats += pruned[i].stats;
  }
  std::printf("knn serial reference      %9.1f ms\n", t_ref);
  std::printf("knn parallel, no pruning  %9.1f ms  (%.2fx)\n", t_unpruned, t_ref / t_unpruned);
  std::printf("knn parallel, pruned      %9.1f ms  (%.2fx)  hitrate %.3f  exact solves %llu of %llu cells\n", t_pruned,
              t_ref / t_pruned, stats.hitrate(), static_cast<unsigned long long>(stats.exact_solves),
              static_cast<unsigned long long>(stats.cells));

  // Leave-last-out evaluation: one thread vs the full team.
  const auto freq = FrequencyTable::from_histories(train, corpus.vocab.size());
  PredictionConfig cfg;
  cfg.k = k;
  const BasketModel model = [&](const PurchaseHistory& q) { return predict_next(q, db, cfg, freq, {true, 1}).basket; };
  EvalReport serial;
  EvalReport parallel;
  const double t_eval1 = time_ms([&] { serial = evaluate_model("knn", model, test, corpus.planted, 1.0, 1); });
  const double t_evaln = time_ms([&] { parallel = evaluate_model("knn", model, test, corpus.planted, 1.0, threads); });
  if (serial.mean_f1 != parallel.mean_f1) ++mismatches;
  std::printf("evaluate 1 thread         %9.1f ms\n", t_eval1);
  std::printf("evaluate %2d threads       %9.1f ms  (%.2fx)\n", threads, t_evaln, t_eval1 / t_evaln);

  // Per-pair exact transport vs the lower bound.
  std::vector<PointCloud> clouds;
  for (const auto& h : train) {
    for (const auto& b : h.baskets) clouds.push_back(PointCloud::from_basket(b, corpus.planted));
  }
  Rng rng(1);
  const std::size_t pairs = 10000;
  std::vector<std::pair<std::size_t, std::size_t>> sample(pairs);
  for (auto& [a, b] : sample) a = uniform_index(rng, clouds.size()), b = uniform_index(rng, clouds.size());
  double exact_sum = 0.0;
  double bound_sum = 0.0;
  const double t_exact = time_ms([&] {
    for (const auto& [a, b] : sample) exact_sum += exact_wasserstein(clouds[a], clouds[b], 1.0);
  });
  const double t_bound = time_ms([&] {
    for (const auto& [a, b] : sample) bound_sum += lower_bound_star(clouds[a], clouds[b], 1.0);
  });
  std::printf("exact Wasserstein         %9.2f us/pair\n", 1000.0 * t_exact / pairs);
  std::printf("LB*                       %9.2f us/pair  (%.2fx)\n", 1000.0 * t_bound / pairs, t_exact / t_bound);
  if (bound_sum > exact_sum) ++mismatches;

  std::printf("%s\n", mismatches == 0 ? "results identical" : "RESULTS DIFFER");
  return mismatches == 0 ? 0 : 1;
}
