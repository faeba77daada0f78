#include "shine/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "shine/rng.hpp"

using namespace shine;

namespace {

using Matrix = std::vector<std::vector<double>>;
using Pairs = std::vector<std::pair<int, int>>;

// Exhaustive assignment oracle: tries every injection of the smaller side
// into the larger and keeps the (cost, lexicographic pair list) minimum.
struct OracleResult {
  double cost = 0.0;
  Pairs pairs;
};

OracleResult enumerate_best(const Matrix& cost) {
  const int n = static_cast<int>(cost.size());
  const int m = static_cast<int>(cost[0].size());
  OracleResult best;
  bool first = true;
  auto consider = [&](double c, Pairs p) {
    std::sort(p.begin(), p.end());
    if (first || c < best.cost - 1e-12 ||
        (std::abs(c - best.cost) <= 1e-12 && p < best.pairs)) {
      best.cost = c;
      best.pairs = std::move(p);
      first = false;
    }
  };
  if (n <= m) {
    std::vector<int> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    std::sort(perm.begin(), perm.end());
    do {
      double c = 0.0;
      Pairs p;
      for (int i = 0; i < n; ++i) {
        c += cost[i][perm[i]];
        p.emplace_back(i, perm[i]);
      }
      consider(c, std::move(p));
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    do {
      double c = 0.0;
      Pairs p;
      for (int j = 0; j < m; ++j) {
        c += cost[perm[j]][j];
        p.emplace_back(perm[j], j);
      }
      consider(c, std::move(p));
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  return best;
}

}  // namespace

TEST_CASE("match_cost fixture values") {
  BaseLossConfig cfg;
  SUBCASE("perfect confident prediction costs -lambda_cls") {
    std::vector<MomentPrediction> preds = {{{0.5, 0.4}, 1.0, 0.0}};
    std::vector<MomentSpan> gts = {{0.3, 0.7}};
    Matrix c = match_cost(preds, gts, cfg);
    REQUIRE(c.size() == 1);
    REQUIRE(c[0].size() == 1);
    CHECK(c[0][0] == doctest::Approx(-cfg.lambda_cls));
  }
  SUBCASE("identical predictions give identical rows") {
    std::vector<MomentPrediction> preds = {{{0.4, 0.2}, 0.7, 0.3},
                                           {{0.4, 0.2}, 0.7, 0.3}};
    std::vector<MomentSpan> gts = {{0.1, 0.5}, {0.6, 0.9}};
    Matrix c = match_cost(preds, gts, cfg);
    CHECK(c[0] == c[1]);
  }
  SUBCASE("raising foreground probability lowers the whole row") {
    std::vector<MomentPrediction> low = {{{0.4, 0.2}, 0.2, 0.8}};
    std::vector<MomentPrediction> high = {{{0.4, 0.2}, 0.9, 0.1}};
    std::vector<MomentSpan> gts = {{0.1, 0.5}, {0.6, 0.9}};
    Matrix a = match_cost(low, gts, cfg);
    Matrix b = match_cost(high, gts, cfg);
    for (std::size_t j = 0; j < gts.size(); ++j) {
      CHECK(b[0][j] < a[0][j]);
    }
  }
  SUBCASE("all terms contribute") {
    std::vector<MomentPrediction> preds = {{{0.6, 0.2}, 1.0, 0.0}};
    std::vector<MomentSpan> gts = {{0.3, 0.7}};
    Matrix c = match_cost(preds, gts, cfg);
    // L1 = |0.6-0.5| + |0.2-0.4| = 0.3; GIoU = 0.5 (hand value).
    CHECK(c[0][0] == doctest::Approx(-4.0 + 10.0 * 0.3 + 1.0 * 0.5));
  }
  SUBCASE("validation") {
    std::vector<MomentSpan> gts = {{0.3, 0.7}};
    std::vector<MomentPrediction> ok = {{{0.5, 0.4}, 1.0, 0.0}};
    CHECK_THROWS_AS((void)match_cost({}, gts, cfg), Error);
    CHECK_THROWS_AS((void)match_cost(ok, {}, cfg), Error);
    std::vector<MomentPrediction> bad_prob = {{{0.5, 0.4}, 0.7, 0.7}};
    CHECK_THROWS_AS((void)match_cost(bad_prob, gts, cfg), Error);
    std::vector<MomentPrediction> neg_prob = {{{0.5, 0.4}, -0.1, 1.1}};
    CHECK_THROWS_AS((void)match_cost(neg_prob, gts, cfg), Error);
    std::vector<MomentPrediction> flat = {{{0.5, 0.0}, 1.0, 0.0}};
    CHECK_THROWS_AS((void)match_cost(flat, gts, cfg), Error);
    std::vector<MomentSpan> inverted = {{0.7, 0.3}};
    CHECK_THROWS_AS((void)match_cost(ok, inverted, cfg), Error);
  }
}

TEST_CASE("solve fixtures") {
  SUBCASE("two-by-two hand case") {
    Assignment a = solve({{1, 2}, {3, 0}});
    CHECK(a.pairs == Pairs{{0, 0}, {1, 1}});
    CHECK(a.total_cost == doctest::Approx(1.0));
  }
  SUBCASE("dominant diagonal") {
    Assignment a = solve({{0, 9, 9}, {9, 0, 9}, {9, 9, 0}});
    CHECK(a.pairs == Pairs{{0, 0}, {1, 1}, {2, 2}});
    CHECK(a.total_cost == doctest::Approx(0.0));
  }
  SUBCASE("all-equal matrix takes the lexicographically smallest pairs") {
    Assignment sq = solve({{5, 5, 5}, {5, 5, 5}, {5, 5, 5}});
    CHECK(sq.pairs == Pairs{{0, 0}, {1, 1}, {2, 2}});
    Assignment wide = solve({{5, 5, 5}, {5, 5, 5}});
    CHECK(wide.pairs == Pairs{{0, 0}, {1, 1}});
    Assignment tall = solve({{5}, {5}, {5}});
    CHECK(tall.pairs == Pairs{{0, 0}});
  }
  SUBCASE("rectangular picks the cheapest rows") {
    Assignment a = solve({{5}, {1}, {3}});
    CHECK(a.pairs == Pairs{{1, 0}});
    CHECK(a.total_cost == doctest::Approx(1.0));
  }
  SUBCASE("negative entries are fine") {
    Assignment a = solve({{-3, 0}, {0, -4}});
    CHECK(a.pairs == Pairs{{0, 0}, {1, 1}});
    CHECK(a.total_cost == doctest::Approx(-7.0));
  }
  SUBCASE("validation") {
    CHECK_THROWS_AS((void)solve({}), Error);
    CHECK_THROWS_AS((void)solve({{}}), Error);
    CHECK_THROWS_AS((void)solve({{1, 2}, {3}}), Error);
    CHECK_THROWS_AS(
        (void)solve({{1, std::numeric_limits<double>::quiet_NaN()}}), Error);
  }
}

TEST_CASE("solve matches exhaustive enumeration on random matrices") {
  Rng rng(20240);
  for (int trial = 0; trial < 1000; ++trial) {
    int n = 1 + static_cast<int>(rng.below(6));
    int m = 1 + static_cast<int>(rng.below(6));
    Matrix cost(n, std::vector<double>(m));
    bool tie_rich = trial % 3 == 0;
    for (auto& row : cost) {
      for (double& v : row) {
        v = tie_rich ? static_cast<double>(rng.below(3))
                     : -5.0 + 10.0 * rng.uniform();
      }
    }
    Assignment got = solve(cost);
    OracleResult want = enumerate_best(cost);
    CAPTURE(trial);
    CAPTURE(n);
    CAPTURE(m);
    REQUIRE(got.total_cost == doctest::Approx(want.cost).epsilon(1e-9));
    REQUIRE(static_cast<int>(got.pairs.size()) == std::min(n, m));
    if (tie_rich) {
      REQUIRE(got.pairs == want.pairs);  // exact tie-break agreement
    }
  }
}

TEST_CASE("row permutation permutes the assignment consistently") {
  Rng rng(31337);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 2 + static_cast<int>(rng.below(5));
    int m = 2 + static_cast<int>(rng.below(5));
    Matrix cost(n, std::vector<double>(m));
    for (auto& row : cost) {
      for (double& v : row) v = -5.0 + 10.0 * rng.uniform();
    }
    std::vector<int> sigma(n);
    std::iota(sigma.begin(), sigma.end(), 0);
    rng.shuffle(sigma);
    Matrix permuted(n);
    for (int r = 0; r < n; ++r) permuted[r] = cost[sigma[r]];

    Assignment a = solve(cost);
    Assignment b = solve(permuted);
    CHECK(a.total_cost == doctest::Approx(b.total_cost).epsilon(1e-9));

    // Map B's rows back through sigma and compare as sets.
    Pairs mapped;
    for (auto [i, j] : b.pairs) mapped.emplace_back(sigma[i], j);
    std::sort(mapped.begin(), mapped.end());
    Pairs original = a.pairs;
    std::sort(original.begin(), original.end());
    CHECK(mapped == original);
  }
}

TEST_CASE("match_cost feeds solve end to end") {
  BaseLossConfig cfg;
  std::vector<MomentPrediction> preds = {
      {{0.2, 0.2}, 0.9, 0.1},
      {{0.7, 0.3}, 0.8, 0.2},
      {{0.5, 0.1}, 0.1, 0.9},
  };
  std::vector<MomentSpan> gts = {{0.1, 0.3}, {0.55, 0.85}};
  Assignment a = solve(match_cost(preds, gts, cfg));
  REQUIRE(a.pairs.size() == 2);
  CHECK(a.pairs == Pairs{{0, 0}, {1, 1}});
}
