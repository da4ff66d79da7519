// One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.
// Usage: acceptance [work_dir]. Criterion 12 runs only when NEXTBASKET_TAFENG
// names a Ta-Feng transaction file.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "nextbasket/cli.hpp"
#include "nextbasket/data_io.hpp"
#include "nextbasket/embeddings.hpp"
#include "nextbasket/evaluation.hpp"
#include "nextbasket/predictor.hpp"
#include "nextbasket/sdtw.hpp"
#include "nextbasket/wasserstein.hpp"
#include "synthetic.hpp"

using namespace nextbasket;
using nextbasket::testing::random_cloud;
namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Verdict {
  enum class State { Pass, Fail, Skip } state = State::Pass;
  std::string detail;
};

Verdict pass(std::string detail) { return {Verdict::State::Pass, std::move(detail)}; }
Verdict fail(std::string detail) { return {Verdict::State::Fail, std::move(detail)}; }
Verdict skip(std::string detail) { return {Verdict::State::Skip, std::move(detail)}; }

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Independent Euclidean distance for the oracles.
double euclid(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(s);
}

// Uniform equal-size transport is an assignment problem: try every permutation.
double assignment_oracle(const PointCloud& x, const PointCloud& y, double p) {
  std::vector<std::size_t> perm(x.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = kInf;
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) cost += std::pow(euclid(x.point(i), y.point(perm[i])), p);
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::pow(best / static_cast<double>(x.size()), 1.0 / p);
}

Verdict criterion1() {
  Rng rng(101);
  double worst = 0.0;
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = 1 + uniform_index(rng, 6);
    const auto x = random_cloud(rng, n, 5);
    const auto y = random_cloud(rng, n, 5);
    const double p = t % 2 == 0 ? 1.0 : 2.0;
    worst = std::max(worst, std::abs(exact_wasserstein(x, y, p) - assignment_oracle(x, y, p)));
  }
  return worst <= 1e-9 ? pass(fmt("max |exact - permutation oracle| = %.2e over 500 pairs", worst))
                       : fail(fmt("max deviation %.2e exceeds 1e-9", worst));
}

Verdict criterion2() {
  Rng rng(202);
  std::size_t violations = 0;
  std::size_t singleton_misses = 0;
  std::size_t singletons = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t m = 1 + uniform_index(rng, 10);
    const std::size_t n = 1 + uniform_index(rng, 10);
    const auto x = random_cloud(rng, m, 5);
    const auto y = random_cloud(rng, n, 5);
    const double p = t % 2 == 0 ? 1.0 : 2.0;
    const double exact = exact_wasserstein(x, y, p);
    const double b1 = lower_bound_one(x, y, p);
    const double b2 = lower_bound_two(x, y, p);
    const double bs = lower_bound_star(x, y, p);
    if (b1 > exact + 1e-9 || b2 > exact + 1e-9 || bs > exact + 1e-9) ++violations;
    if (m == 1 && n == 1) {
      ++singletons;
      if (b1 != exact || b2 != exact || bs != exact) ++singleton_misses;
    }
  }
  // Dedicated singleton pairs so equality is exercised regardless of sampling.
  for (int t = 0; t < 200; ++t) {
    const auto x = random_cloud(rng, 1, 5);
    const auto y = random_cloud(rng, 1, 5);
    const double p = t % 2 == 0 ? 1.0 : 2.0;
    const double exact = exact_wasserstein(x, y, p);
    ++singletons;
    if (lower_bound_one(x, y, p) != exact || lower_bound_two(x, y, p) != exact || lower_bound_star(x, y, p) != exact) {
      ++singleton_misses;
    }
  }
  if (violations > 0 || singleton_misses > 0) {
    return fail(fmt("%g bound violations, %g singleton pairs without exact equality", violations, singleton_misses));
  }
  return pass(fmt("no violations over 1000 pairs; equality on all %g singleton pairs", singletons));
}

std::vector<PurchaseHistory> random_database(Rng& rng, std::size_t customers, std::size_t n_items) {
  std::vector<PurchaseHistory> db;
  for (std::size_t i = 0; i < customers; ++i) {
    db.push_back(nextbasket::testing::random_history(rng, "d" + std::to_string(i), 1 + uniform_index(rng, 8), n_items, 1, 5));
  }
  return db;
}

Verdict criterion3() {
  Rng rng(303);
  std::size_t mismatches = 0;
  std::size_t compared = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n_items = 10 + uniform_index(rng, 20);
    const auto table = nextbasket::testing::random_table(rng, n_items, 5);
    NeighborDatabase db(random_database(rng, 2 + uniform_index(rng, 19), n_items), table);
    const auto query = nextbasket::testing::random_history(rng, "q", 1 + uniform_index(rng, 5), n_items, 1, 5);
    const std::size_t k = 1 + uniform_index(rng, 5);
    const double p = t % 2 == 0 ? 1.0 : 2.0;
    SearchResult want;
    try {
      want = find_neighbors_reference(query, db, k, p);
    } catch (const NoEligibleNeighbors&) {
      continue;
    }
    const auto got = find_neighbors(query, db, k, p, {true, 0});
    ++compared;
    bool same = got.neighbors.size() == want.neighbors.size();
    for (std::size_t i = 0; same && i < got.neighbors.size(); ++i) {
      const auto& g = got.neighbors[i];
      const auto& w = want.neighbors[i];
      same = g.customer_index == w.customer_index && g.start == w.start && g.end == w.end &&
             std::abs(g.distance - w.distance) <= 1e-9;
    }
    if (!same) ++mismatches;
  }
  if (compared < 40) return fail(fmt("only %g of 50 fixtures had eligible neighbours", compared));
  return mismatches == 0 ? pass(fmt("pruned == reference on %g fixtures", compared))
                         : fail(fmt("%g of %g fixtures differ", mismatches, compared));
}

// Full DTW over one window of the candidate, memoised bottom-up.
double window_dtw(const std::vector<std::vector<double>>& cost, std::size_t s, std::size_t e) {
  const std::size_t n = cost.size();
  const std::size_t w = e - s + 1;
  std::vector<std::vector<double>> d(n + 1, std::vector<double>(w + 1, kInf));
  d[0][0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= w; ++j) {
      d[i][j] = cost[i - 1][s + j - 1] + std::min({d[i - 1][j - 1], d[i - 1][j], d[i][j - 1]});
    }
  }
  return d[n][w];
}

// Criteria 4 and 5 share their 300 instances.
std::pair<Verdict, Verdict> criteria4and5() {
  Rng rng(404);
  std::size_t wrong = 0;
  std::size_t bad_counts = 0;
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + uniform_index(rng, 4);
    const std::size_t m = 1 + uniform_index(rng, 8);
    // A small pool of clouds repeats baskets, so exact ties and zero-cost cells occur.
    std::vector<PointCloud> pool;
    for (int i = 0; i < 4; ++i) pool.push_back(random_cloud(rng, 1 + uniform_index(rng, 3), 3));
    std::vector<PointCloud> q;
    std::vector<PointCloud> d;
    for (std::size_t i = 0; i < n; ++i) q.push_back(pool[uniform_index(rng, pool.size())]);
    for (std::size_t j = 0; j < m; ++j) d.push_back(pool[uniform_index(rng, pool.size())]);
    const double p = t % 2 == 0 ? 1.0 : 2.0;

    std::vector<std::vector<double>> cost(n, std::vector<double>(m));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) cost[i][j] = exact_wasserstein(q[i], d[j], p);
    }
    double best = kInf;
    std::size_t best_s = 0;
    std::size_t best_e = 0;
    for (std::size_t e = 0; e < m; ++e) {
      for (std::size_t s = 0; s <= e; ++s) {
        const double v = window_dtw(cost, s, e);
        if (v < best) best = v, best_s = s, best_e = e;
      }
    }

    std::size_t evaluations = 0;
    const auto counted = sdtw_over_costs(n, m, [&](std::size_t i, std::size_t j) {
      ++evaluations;
      return exact_wasserstein(q[i], d[j], p);
    });
    const auto match = sdtw_match(q, d, p);
    if (!counted || match.distance != best || match.start != best_s || match.end != best_e || !(*counted == match) ||
        window_dtw(cost, match.start, match.end) != match.distance) {
      ++wrong;
    }
    if (evaluations != n * m) ++bad_counts;
  }
  Verdict v4 = wrong == 0 ? pass("distance and endpoints equal the exhaustive window oracle on 300 instances")
                          : fail(fmt("%g of 300 instances disagree with the oracle", wrong));
  Verdict v5 = bad_counts == 0 ? pass("Wasserstein evaluations == n*m on all 300 instances")
                               : fail(fmt("%g instances with a cell count other than n*m", bad_counts));
  return {v4, v5};
}

Verdict criterion6() {
  Rng rng(606);
  const std::size_t pairs = 10000;
  std::vector<PointCloud> xs;
  std::vector<PointCloud> ys;
  for (std::size_t i = 0; i < pairs; ++i) {
    xs.push_back(random_cloud(rng, 5 + uniform_index(rng, 6), 50));
    ys.push_back(random_cloud(rng, 5 + uniform_index(rng, 6), 50));
  }
  double exact_sum = 0.0;
  auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < pairs; ++i) exact_sum += exact_wasserstein(xs[i], ys[i], 1.0);
  const double exact_us = seconds_since(t0) * 1e6 / pairs;
  double bound_sum = 0.0;
  t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < pairs; ++i) bound_sum += lower_bound_star(xs[i], ys[i], 1.0);
  const double bound_us = seconds_since(t0) * 1e6 / pairs;
  if (bound_sum > exact_sum) return fail("lower bounds summed above the exact distances");
  const double ratio = exact_us / bound_us;
  const std::string detail = fmt("exact %.2f us, LB* %.2f us, ratio %.2f (bar 1.5)", exact_us, bound_us, ratio);
  return ratio >= 1.5 ? pass(detail) : fail(detail);
}

Verdict criterion7() {
  nextbasket::testing::SyntheticOptions o;
  o.customers = 500;
  o.archetypes = 20;
  o.trajectory_length = 1;  // every archetype repeats one basket template
  o.template_pool = 20;
  const auto corpus = nextbasket::testing::make_archetype_corpus(o);
  const auto split = split_customers(corpus.histories, 42);
  NeighborDatabase db(select_partition(corpus.histories, split, Partition::Train), corpus.planted);
  SearchStats stats;
  for (const auto& h : select_partition(corpus.histories, split, Partition::Test)) {
    stats += find_neighbors(without_last(h), db, 5, 1.0).stats;
  }
  const std::string detail = fmt("hitrate %.3f over %g lower-bound checks (bar 0.5)", stats.hitrate(),
                                 static_cast<double>(stats.bound_checks));
  return stats.hitrate() >= 0.5 ? pass(detail) : fail(detail);
}

Verdict criterion8() {
  Rng rng(808);
  double worst = 0.0;
  for (int t = 0; t < 10000; ++t) {
    const auto a = nextbasket::testing::random_basket(rng, 20, 1, 10);
    const auto b = nextbasket::testing::random_basket(rng, 20, 1, 10);
    const double j = jaccard(a, b);
    worst = std::max(worst, std::abs(f1_score(a, b) - 2.0 * j / (1.0 + j)));
  }
  const Basket pred{ItemId{0}, ItemId{1}};
  const Basket truth{ItemId{1}, ItemId{2}};
  const bool hand = f1_score(pred, truth) == 0.5 && jaccard(pred, truth) == 1.0 / 3.0;
  if (worst > 1e-12 || !hand) return fail(fmt("max |F1 - 2J/(1+J)| = %.2e, hand rows %s", worst) + (hand ? "ok" : "wrong"));
  return pass(fmt("max |F1 - 2J/(1+J)| = %.2e over 10000 pairs; hand rows exact", worst));
}

Verdict criterion9() {
  Rng rng(909);
  const double h = 1e-6;
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    TrainState s = init_train_state(5, 3, rng());
    for (auto& x : s.target) x = uniform_real(rng, -1, 1);
    for (auto& x : s.context) x = uniform_real(rng, -1, 1);
    const ItemId p{static_cast<std::uint32_t>(uniform_index(rng, 5))};
    const ItemId q{static_cast<std::uint32_t>(uniform_index(rng, 5))};
    const auto g = log_prob_gradient(s, p, q);
    auto check = [&](double& x, double analytic) {
      const double keep = x;
      x = keep + h;
      const double up = log_prob(s, p, q);
      x = keep - h;
      const double down = log_prob(s, p, q);
      x = keep;
      const double numeric = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(analytic - numeric) / std::max({1e-8, std::abs(analytic), std::abs(numeric)}));
    };
    for (std::size_t d = 0; d < 3; ++d) check(s.target[p.index * 3 + d], g.target[d]);
    for (std::size_t e = 0; e < s.context.size(); ++e) check(s.context[e], g.context[e]);
  }
  const std::string detail = fmt("max relative error %.2e over 20 instances (bar 1e-5)", worst);
  return worst <= 1e-5 ? pass(detail) : fail(detail);
}

int run_cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, out, err);
  if (code != 0) std::fprintf(stderr, "nextbasket %s failed (%d): %s\n", args[0].c_str(), code, err.str().c_str());
  return code;
}

// ingest -> embed -> tune -> evaluate into `dir`; false when a step fails.
bool run_pipeline(const fs::path& data, const std::string& format, const fs::path& dir,
                  const std::vector<std::string>& ingest_extra) {
  fs::remove_all(dir);
  std::vector<std::string> ingest{"ingest", "--data", data.string(), "--format", format, "--out-dir", dir.string()};
  ingest.insert(ingest.end(), ingest_extra.begin(), ingest_extra.end());
  return run_cli(ingest) == 0 && run_cli({"embed", "--out-dir", dir.string()}) == 0 &&
         run_cli({"tune", "--out-dir", dir.string()}) == 0 && run_cli({"evaluate", "--out-dir", dir.string()}) == 0;
}

std::map<std::string, double> comparison_f1(const fs::path& dir) {
  std::ifstream in(dir / "comparison.csv");
  std::map<std::string, double> f1;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto fields = split_csv_line(line);
    if (fields.size() == 4) f1[fields[0]] = std::stod(fields[2]);
  }
  return f1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Criterion 10 runs the pipeline once; criterion 11 runs it again and compares.
std::pair<Verdict, Verdict> criteria10and11(const fs::path& work) {
  nextbasket::testing::SyntheticOptions o;
  const auto synthetic = nextbasket::testing::make_archetype_corpus(o);
  fs::create_directories(work);
  const fs::path data = work / "synthetic.csv";
  {
    Corpus corpus{synthetic.vocab, synthetic.histories, synthetic.item_category};
    std::ofstream f(data);
    write_generic_csv(corpus, f);
  }
  // Noise can merge two concepts into one item, so baskets of four occur.
  const std::vector<std::string> filters{"--min-basket-size", "4"};
  const fs::path first = work / "run_a";
  const fs::path second = work / "run_b";
  if (!run_pipeline(data, "generic", first, filters)) {
    return {fail("pipeline failed"), fail("pipeline failed")};
  }
  const auto f1 = comparison_f1(first);
  double best_baseline = -1.0;
  std::string best_name;
  for (const auto& [model, value] : f1) {
    if (model != "knn_sdtw" && value > best_baseline) best_baseline = value, best_name = model;
  }
  Verdict v10;
  if (!f1.count("knn_sdtw") || f1.size() != 5) {
    v10 = fail("comparison.csv is incomplete");
  } else {
    const double margin = f1.at("knn_sdtw") - best_baseline;
    const std::string detail =
        fmt("knn_sdtw F1 %.3f vs best baseline %.3f, margin %.3f (bar 0.10)", f1.at("knn_sdtw"), best_baseline, margin) +
        " [" + best_name + "]";
    v10 = margin >= 0.10 ? pass(detail) : fail(detail);
  }

  if (!run_pipeline(data, "generic", second, filters)) return {v10, fail("second pipeline run failed")};
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const auto& entry : fs::directory_iterator(first)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("manifest_", 0) == 0) continue;  // manifests carry wall-clock timestamps
    ++compared;
    if (slurp(entry.path()) != slurp(second / name)) differing.push_back(name);
  }
  Verdict v11;
  if (differing.empty()) {
    v11 = pass(fmt("%g artifacts byte-identical across two runs (reports, tuning, embeddings, split)", compared));
  } else {
    std::string names;
    for (const auto& n : differing) names += " " + n;
    v11 = fail("differing artifacts:" + names);
  }
  return {v10, v11};
}

Verdict criterion12(const fs::path& work) {
  const char* path = std::getenv("NEXTBASKET_TAFENG");
  if (path == nullptr || *path == '\0') return skip("set NEXTBASKET_TAFENG to a Ta-Feng file to run");
  const fs::path dir = work / "tafeng";
  if (!run_pipeline(path, "tafeng", dir, {})) return fail("pipeline failed on " + std::string(path));
  const auto f1 = comparison_f1(dir);
  if (!f1.count("knn_sdtw")) return fail("comparison.csv is incomplete");
  std::string detail = fmt("knn_sdtw F1 %.4f;", f1.at("knn_sdtw"));
  bool ok = true;
  for (const auto& [model, value] : f1) {
    if (model == "knn_sdtw") continue;
    detail += " " + model + " " + fmt("%.4f", value);
    ok = ok && f1.at("knn_sdtw") > value;
  }
  return ok ? pass(detail) : fail(detail);
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "nextbasket_acceptance";
  std::vector<std::pair<int, std::function<Verdict()>>> plain = {
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {6, criterion6}, {7, criterion7}, {8, criterion8},
      {9, criterion9}};
  std::map<int, Verdict> verdicts;
  std::map<int, double> elapsed;
  for (auto& [id, fn] : plain) {
    const auto t0 = std::chrono::steady_clock::now();
    verdicts[id] = fn();
    elapsed[id] = seconds_since(t0);
  }
  {
    const auto t0 = std::chrono::steady_clock::now();
    auto [v4, v5] = criteria4and5();
    verdicts[4] = v4;
    verdicts[5] = v5;
    elapsed[4] = elapsed[5] = seconds_since(t0);
  }
  {
    const auto t0 = std::chrono::steady_clock::now();
    auto [v10, v11] = criteria10and11(work);
    verdicts[10] = v10;
    verdicts[11] = v11;
    elapsed[10] = elapsed[11] = seconds_since(t0);
  }
  {
    const auto t0 = std::chrono::steady_clock::now();
    verdicts[12] = criterion12(work);
    elapsed[12] = seconds_since(t0);
  }

  int failures = 0;
  for (const auto& [id, v] : verdicts) {
    const char* label = v.state == Verdict::State::Pass ? "PASS" : v.state == Verdict::State::Fail ? "FAIL" : "SKIP";
    if (v.state == Verdict::State::Fail) ++failures;
    std::printf("criterion %2d: %s  %s  (%.1fs)\n", id, label, v.detail.c_str(), elapsed[id]);
  }
  std::fflush(stdout);
  return failures == 0 ? 0 : 1;
}
