#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>

#include "nextbasket/baselines.hpp"
#include "nextbasket/error.hpp"
#include "synthetic.hpp"

using namespace nextbasket;
using nextbasket::testing::random_history;

namespace {

constexpr ItemId a{0}, b{1}, c{2}, d{3}, x{4}, y{5};

PurchaseHistory history(std::string key, std::vector<Basket> baskets) { return {std::move(key), std::move(baskets)}; }

// Sort (-primary, -secondary, id) and keep the first n, skipping zero primaries.
Basket sort_truncate(const std::vector<std::uint64_t>& primary, const std::vector<std::uint64_t>& secondary,
                     std::size_t n, bool include_zero) {
  std::vector<std::uint32_t> ids;
  for (std::uint32_t i = 0; i < primary.size(); ++i) {
    if (include_zero || primary[i] > 0) ids.push_back(i);
  }
  std::sort(ids.begin(), ids.end(), [&](std::uint32_t l, std::uint32_t r) {
    if (primary[l] != primary[r]) return primary[l] > primary[r];
    if (secondary[l] != secondary[r]) return secondary[l] > secondary[r];
    return l < r;
  });
  std::vector<ItemId> kept;
  for (std::size_t i = 0; i < std::min(n, ids.size()); ++i) kept.push_back(ItemId{ids[i]});
  return Basket(kept);
}

}  // namespace

TEST_SUITE("baselines") {
  TEST_CASE("global top items") {
    const FrequencyTable freq(std::vector<std::uint64_t>{5, 3, 1});
    CHECK(global_top(freq, 2) == Basket{a, b});
    CHECK(global_top(freq, 10) == Basket{a, b, c});
    CHECK_THROWS_AS(global_top(freq, 0), UsageError);

    Rng rng(1);
    for (int t = 0; t < 200; ++t) {
      std::vector<std::uint64_t> counts(1 + uniform_index(rng, 12));
      for (auto& v : counts) v = uniform_index(rng, 4);
      const std::size_t n = 1 + uniform_index(rng, counts.size() + 2);
      const std::vector<std::uint64_t> zeros(counts.size(), 0);
      CHECK(global_top(FrequencyTable(counts), n) == sort_truncate(counts, zeros, n, true));
    }
  }

  TEST_CASE("personal top items") {
    const auto h = history("c", {Basket{a, b}, Basket{a, c}});
    CHECK(personal_top(h, 2) == Basket{a, b});
    CHECK(personal_top(h) == Basket{a, b});
    CHECK(personal_top(history("s", {Basket{b, c, d}})) == Basket{b, c, d});

    Rng rng(2);
    for (int t = 0; t < 200; ++t) {
      const auto r = random_history(rng, "r", 1 + uniform_index(rng, 6), 10, 1, 5);
      std::vector<std::uint64_t> counts(10, 0);
      for (const auto& basket : r.baskets) {
        for (ItemId id : basket) ++counts[id.index];
      }
      const std::vector<std::uint64_t> zeros(10, 0);
      const std::size_t n = mean_basket_size(r);
      CHECK(personal_top(r) == sort_truncate(counts, zeros, n, false));
    }
  }

  TEST_CASE("personal and global top agree for a single customer") {
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
      const auto r = random_history(rng, "r", 1 + uniform_index(rng, 6), 8, 1, 5);
      const auto freq = FrequencyTable::from_histories(std::span(&r, 1), 8);
      const std::size_t n = mean_basket_size(r);
      // Global top may pad with zero-count items, personal top never does.
      const Basket personal = personal_top(r, n);
      const Basket global = global_top(freq, n);
      CHECK(intersection_size(personal, global) == personal.size());
    }
  }

  TEST_CASE("repurchase copies the last basket") {
    CHECK(repurchase_last(history("c", {Basket{a}, Basket{b, c}})) == Basket{b, c});
    const auto single = history("c", {Basket{x}});
    CHECK(repurchase_last(single) == Basket{x});
    CHECK(repurchase_last(single) == repurchase_last(single));
    CHECK_THROWS_AS(repurchase_last(history("e", {})), UsageError);
  }

  TEST_CASE("association support counts") {
    const std::vector<PurchaseHistory> one{history("c", {Basket{a}, Basket{b}})};
    const auto s1 = fit_association(one, 6);
    CHECK(s1.count(a, b) == 1);
    CHECK(s1.total() == 1);

    const std::vector<PurchaseHistory> two{history("c", {Basket{a, b}, Basket{c}})};
    const auto s2 = fit_association(two, 6);
    CHECK(s2.count(a, c) == 1);
    CHECK(s2.count(b, c) == 1);
    CHECK(s2.total() == 2);

    const std::vector<PurchaseHistory> flat{history("p", {Basket{a, b}}), history("q", {Basket{c}})};
    CHECK(fit_association(flat, 6).total() == 0);
  }

  TEST_CASE("association support matches a nested-loop recount") {
    Rng rng(4);
    std::vector<PurchaseHistory> corpus;
    for (int i = 0; i < 30; ++i) corpus.push_back(random_history(rng, "u" + std::to_string(i), 1 + uniform_index(rng, 6), 9, 1, 4));
    const auto s = fit_association(corpus, 9);
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> oracle;
    std::uint64_t total = 0;
    for (const auto& h : corpus) {
      for (std::size_t i = 0; i + 1 < h.length(); ++i) {
        for (ItemId from : h.baskets[i]) {
          for (ItemId to : h.baskets[i + 1]) ++oracle[{from.index, to.index}];
        }
        total += h.baskets[i].size() * h.baskets[i + 1].size();
      }
    }
    for (std::uint32_t i = 0; i < 9; ++i) {
      for (std::uint32_t j = 0; j < 9; ++j) {
        const auto it = oracle.find({i, j});
        CHECK(s.count(ItemId{i}, ItemId{j}) == (it == oracle.end() ? 0 : it->second));
      }
    }
    CHECK(s.total() == total);
  }

  TEST_CASE("association prediction") {
    SupportMatrix s(6);
    s.add(a, x, 3);
    s.add(a, y, 1);
    const FrequencyTable freq(std::vector<std::uint64_t>{1, 1, 1, 1, 1, 9});
    CHECK(predict_association(s, Basket{a}, 1, freq) == Basket{x});
    CHECK(predict_association(s, Basket{a}, 3, freq) == Basket{x, y, a});

    const SupportMatrix zero(6);
    const FrequencyTable ranked(std::vector<std::uint64_t>{1, 7, 3, 0, 0, 5});
    CHECK(predict_association(zero, Basket{a}, 2, ranked) == Basket{b, y});
  }

  TEST_CASE("association prediction matches a score-sort oracle") {
    Rng rng(5);
    for (int t = 0; t < 200; ++t) {
      const std::size_t n = 2 + uniform_index(rng, 8);
      SupportMatrix s(n);
      std::vector<std::vector<std::uint64_t>> dense(n, std::vector<std::uint64_t>(n, 0));
      for (int e = 0; e < 10; ++e) {
        const auto i = static_cast<std::uint32_t>(uniform_index(rng, n));
        const auto j = static_cast<std::uint32_t>(uniform_index(rng, n));
        const auto v = 1 + uniform_index(rng, 3);
        s.add(ItemId{i}, ItemId{j}, v);
        dense[i][j] += v;
      }
      std::vector<std::uint64_t> global(n);
      for (auto& v : global) v = uniform_index(rng, 4);
      const auto last = nextbasket::testing::random_basket(rng, n, 1, std::min<std::size_t>(n, 3));
      std::vector<std::uint64_t> score(n, 0);
      for (ItemId from : last) {
        for (std::size_t j = 0; j < n; ++j) score[j] += dense[from.index][j];
      }
      const std::size_t k = 1 + uniform_index(rng, n);
      CHECK(predict_association(s, last, k, FrequencyTable(global)) == sort_truncate(score, global, k, true));
    }
  }

  TEST_CASE("rank items orders and filters") {
    const std::vector<std::uint64_t> primary{2, 0, 2, 1};
    const FrequencyTable secondary(std::vector<std::uint64_t>{0, 0, 5, 0});
    CHECK(rank_items(primary, &secondary, false) == std::vector<ItemId>{c, a, d});
    CHECK(rank_items(primary, nullptr, true) == std::vector<ItemId>{a, c, d, b});
  }

  TEST_CASE("support file round trips") {
    const auto dir = std::filesystem::temp_directory_path() / "nextbasket_support_test";
    std::filesystem::create_directories(dir);
    Rng rng(6);
    std::vector<PurchaseHistory> corpus;
    for (int i = 0; i < 10; ++i) corpus.push_back(random_history(rng, "u" + std::to_string(i), 4, 7, 1, 3));
    const auto s = fit_association(corpus, 7);
    save_support(s, dir / "support.txt");
    CHECK(load_support(dir / "support.txt", 7) == s);
    std::filesystem::remove_all(dir);
  }
}
