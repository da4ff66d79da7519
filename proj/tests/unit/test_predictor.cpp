#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "nextbasket/error.hpp"
#include "nextbasket/predictor.hpp"
#include "synthetic.hpp"

using namespace nextbasket;
using nextbasket::testing::random_history;
using nextbasket::testing::random_table;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<PurchaseHistory> random_database(Rng& rng, std::size_t customers, std::size_t n_items) {
  std::vector<PurchaseHistory> db;
  for (std::size_t i = 0; i < customers; ++i) {
    db.push_back(random_history(rng, "d" + std::to_string(i), 1 + uniform_index(rng, 8), n_items, 1, 4));
  }
  // A duplicated customer produces exact distance ties across indices.
  if (customers > 2) {
    db.back().baskets = db.front().baskets;
  }
  return db;
}

void check_same(const SearchResult& got, const SearchResult& want) {
  REQUIRE(got.neighbors.size() == want.neighbors.size());
  for (std::size_t i = 0; i < got.neighbors.size(); ++i) {
    CHECK(got.neighbors[i].customer_index == want.neighbors[i].customer_index);
    CHECK(got.neighbors[i].start == want.neighbors[i].start);
    CHECK(got.neighbors[i].end == want.neighbors[i].end);
    CHECK(std::abs(got.neighbors[i].distance - want.neighbors[i].distance) <= 1e-9);
  }
}

}  // namespace

TEST_SUITE("predictor") {
  TEST_CASE("pruned search equals the serial reference") {
    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
      const std::size_t n_items = 6 + uniform_index(rng, 10);
      NeighborDatabase db(random_database(rng, 2 + uniform_index(rng, 19), n_items), random_table(rng, n_items, 3));
      const auto query = random_history(rng, "q", 1 + uniform_index(rng, 4), n_items, 1, 4);
      const std::size_t k = 1 + uniform_index(rng, 6);
      const double p = t % 2 == 0 ? 1.0 : 2.0;
      SearchResult want;
      try {
        want = find_neighbors_reference(query, db, k, p);
      } catch (const NoEligibleNeighbors&) {
        CHECK_THROWS_AS(find_neighbors(query, db, k, p), NoEligibleNeighbors);
        continue;
      }
      const auto pruned = find_neighbors(query, db, k, p, {true, 0});
      check_same(pruned, want);
      check_same(find_neighbors(query, db, k, p, {false, 1}), want);
      CHECK(pruned.stats.hitrate() >= 0.0);
      CHECK(pruned.stats.hitrate() <= 1.0);
      for (const auto& n : pruned.neighbors) {
        CHECK(n.end + 1 < db.history(n.customer_index).length());
        CHECK(n.start <= n.end);
      }
    }
  }

  TEST_CASE("unpruned search never counts bound hits") {
    Rng rng(2);
    NeighborDatabase db(random_database(rng, 10, 8), random_table(rng, 8, 3));
    const auto query = random_history(rng, "q", 3, 8, 1, 4);
    const auto r = find_neighbors(query, db, 3, 1, {false, 0});
    CHECK(r.stats.hitrate() == 0.0);
    CHECK(r.stats.bound_pruned == 0);
  }

  TEST_CASE("an exact copy ranks first at distance zero") {
    Rng rng(3);
    auto histories = random_database(rng, 8, 10);
    const auto query = random_history(rng, "q", 3, 10, 2, 4);
    PurchaseHistory copy{"copy", query.baskets};
    copy.baskets.push_back(Basket{ItemId{1}});
    copy.baskets.push_back(Basket{ItemId{2}});
    histories.insert(histories.begin() + 4, copy);
    NeighborDatabase db(histories, random_table(rng, 10, 4));
    const auto r = find_neighbors(query, db, 3, 1);
    REQUIRE_FALSE(r.neighbors.empty());
    CHECK(r.neighbors[0].customer_index == 4);
    CHECK(r.neighbors[0].distance == 0.0);
    CHECK(r.neighbors[0].start == 0);
    CHECK(r.neighbors[0].end == 2);
  }

  TEST_CASE("k beyond the eligible count returns every eligible candidate") {
    Rng rng(4);
    std::vector<PurchaseHistory> histories;
    for (int i = 0; i < 5; ++i) histories.push_back(random_history(rng, "d" + std::to_string(i), i < 3 ? 3 : 1, 6, 1, 3));
    NeighborDatabase db(histories, random_table(rng, 6, 2));
    const auto query = random_history(rng, "q", 2, 6, 1, 3);
    const auto r = find_neighbors(query, db, 20, 1);
    CHECK(r.neighbors.size() == 3);
    CHECK(std::is_sorted(r.neighbors.begin(), r.neighbors.end(),
                         [](const NeighborMatch& l, const NeighborMatch& m) { return l.distance < m.distance; }));
  }

  TEST_CASE("no eligible neighbours") {
    Rng rng(5);
    const auto table = random_table(rng, 4, 2);
    const auto query = random_history(rng, "q", 2, 4, 1, 2);
    NeighborDatabase empty({}, table);
    CHECK_THROWS_AS(find_neighbors(query, empty, 1, 1), NoEligibleNeighbors);
    NeighborDatabase shorts({random_history(rng, "s", 1, 4, 1, 2)}, table);
    CHECK_THROWS_AS(find_neighbors(query, shorts, 1, 1), NoEligibleNeighbors);
    // The query's own key is never a candidate.
    NeighborDatabase self({PurchaseHistory{"q", {Basket{ItemId{0}}, Basket{ItemId{1}}}}}, table);
    CHECK_THROWS_AS(find_neighbors(query, self, 1, 1), NoEligibleNeighbors);

    const FrequencyTable freq(std::vector<std::uint64_t>{1, 1, 1, 1});
    PredictionConfig config;
    const auto pred = predict_next(query, shorts, config, freq);
    CHECK(pred.source == PredictionSource::Fallback);
    CHECK(std::isinf(pred.mean_neighbor_distance));
  }

  TEST_CASE("assembly examples") {
    // Three neighbours, each [{0}, successor].
    std::vector<PurchaseHistory> histories{
        {"n0", {Basket{ItemId{0}}, Basket{ItemId{4}, ItemId{9}}}},
        {"n1", {Basket{ItemId{0}}, Basket{ItemId{1}, ItemId{3}}}},
        {"n2", {Basket{ItemId{0}}, Basket{ItemId{1}, ItemId{5}}}},
        {"n3", {Basket{ItemId{0}}, Basket{ItemId{1}, ItemId{6}}}},
    };
    NeighborDatabase db(histories, EmbeddingTable(10, 1));
    FrequencyTable freq(std::vector<std::uint64_t>{0, 0, 0, 1, 0, 7, 2, 0, 0, 0});
    const std::vector<NeighborMatch> one{{0, 0, 0, 0.5}};
    CHECK(assemble_basket(one, db, freq) == Basket{ItemId{4}, ItemId{9}});
    const std::vector<NeighborMatch> three{{1, 0, 0, 0.1}, {2, 0, 0, 0.2}, {3, 0, 0, 0.3}};
    CHECK(assemble_basket(three, db, freq) == Basket{ItemId{1}, ItemId{5}});
    CHECK_THROWS_AS(assemble_basket({}, db, freq), UsageError);
  }

  TEST_CASE("assembly matches a count-sort-truncate oracle") {
    Rng rng(6);
    for (int t = 0; t < 100; ++t) {
      std::vector<PurchaseHistory> histories;
      for (int i = 0; i < 8; ++i) histories.push_back(random_history(rng, "d" + std::to_string(i), 2 + uniform_index(rng, 4), 10, 1, 5));
      NeighborDatabase db(histories, EmbeddingTable(10, 1));
      std::vector<std::uint64_t> global(10);
      for (auto& v : global) v = uniform_index(rng, 3);
      const FrequencyTable freq(global);

      std::vector<std::size_t> order{0, 1, 2, 3, 4, 5, 6, 7};
      shuffle(std::span(order), rng);
      std::vector<NeighborMatch> matches;
      for (std::size_t i = 0; i < 5; ++i) {
        const std::size_t len = histories[order[i]].length();
        const std::size_t end = uniform_index(rng, len - 1);
        matches.push_back({order[i], uniform_index(rng, end + 1), end, static_cast<double>(i)});
      }

      std::vector<int> votes(10, 0);
      for (const auto& m : matches) {
        for (ItemId id : histories[m.customer_index].baskets[m.end + 1]) ++votes[id.index];
      }
      std::vector<std::uint32_t> ids;
      for (std::uint32_t i = 0; i < 10; ++i) {
        if (votes[i] > 0) ids.push_back(i);
      }
      std::sort(ids.begin(), ids.end(), [&](std::uint32_t l, std::uint32_t r) {
        return std::make_tuple(-votes[l], -static_cast<int>(global[l]), l) <
               std::make_tuple(-votes[r], -static_cast<int>(global[r]), r);
      });
      const std::size_t s = histories[matches[0].customer_index].baskets[matches[0].end + 1].size();
      std::vector<ItemId> want;
      for (std::size_t i = 0; i < s; ++i) want.push_back(ItemId{ids[i]});
      CHECK(assemble_basket(matches, db, freq) == Basket(want));
    }
  }

  TEST_CASE("threshold edges") {
    Rng rng(7);
    NeighborDatabase db(random_database(rng, 10, 8), random_table(rng, 8, 3));
    const auto query = random_history(rng, "q", 3, 8, 2, 4);
    const FrequencyTable freq = FrequencyTable::from_histories(db.histories(), 8);
    PredictionConfig config;
    config.k = 3;
    config.tau = 0.0;
    const auto never = predict_next(query, db, config, freq);
    CHECK(never.source == PredictionSource::Fallback);
    CHECK(never.basket.size() == std::min(query.baskets.back().size(), personal_fallback(query, 100, freq).size()));
    config.tau = kInf;
    const auto always = predict_next(query, db, config, freq);
    CHECK(always.source == PredictionSource::Neighbors);
    const auto r = find_neighbors(query, db, 3, 1);
    CHECK(always.basket.size() == successor_basket(r.neighbors[0], db).size());
    // Deterministic across runs and thread counts.
    CHECK(predict_next(query, db, config, freq, {true, 1}).basket == always.basket);
  }

  TEST_CASE("a clone of the query predicts the clone's next basket") {
    nextbasket::testing::SyntheticOptions o;
    o.customers = 40;
    const auto corpus = nextbasket::testing::make_archetype_corpus(o);
    auto histories = corpus.histories;
    const PurchaseHistory query = without_last(histories[0]);
    PurchaseHistory clone = histories[0];
    clone.customer = "clone";
    histories.push_back(clone);
    histories.erase(histories.begin());
    NeighborDatabase db(histories, corpus.planted);
    const FrequencyTable freq = FrequencyTable::from_histories(db.histories(), corpus.vocab.size());
    PredictionConfig config;
    config.k = 1;
    config.tau = 1e-9;
    const auto pred = predict_next(query, db, config, freq);
    CHECK(pred.source == PredictionSource::Neighbors);
    CHECK(pred.mean_neighbor_distance == 0.0);
    CHECK(pred.basket == clone.baskets.back());
  }

  TEST_CASE("centroids average item occurrences") {
    const EmbeddingTable table(3, 1, {0, 3, 9});
    const PurchaseHistory h{"c", {Basket{ItemId{0}, ItemId{1}}, Basket{ItemId{1}}}};
    CHECK(history_centroid(h, table) == std::vector<double>{2.0});
    CHECK(history_centroid(PurchaseHistory{}, table) == std::vector<double>{0.0});
  }
}
