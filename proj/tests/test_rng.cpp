#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "shine/rng.hpp"

using namespace shine;

TEST_CASE("same seed reproduces the stream, different seeds diverge") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 1000; ++i) {
    auto va = a.next();
    all_equal = all_equal && (va == b.next());
    any_diff = any_diff || (va != c.next());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("below stays in range and is roughly uniform") {
  Rng rng(7);
  std::array<int, 10> buckets{};
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    auto v = rng.below(10);
    REQUIRE(v < 10);
    ++buckets[static_cast<std::size_t>(v)];
  }
  for (int count : buckets) {
    CHECK(count > draws / 10 - 600);
    CHECK(count < draws / 10 + 600);
  }
  CHECK(rng.below(1) == 0);
  CHECK(rng.below(0) == 0);
}

TEST_CASE("uniform lies in [0,1) and respects bounds") {
  Rng rng(11);
  double mn = 1.0, mx = 0.0, acc = 0.0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    mn = std::min(mn, u);
    mx = std::max(mx, u);
    acc += u;
  }
  CHECK(acc / draws == doctest::Approx(0.5).epsilon(0.01));
  CHECK(mn < 0.01);
  CHECK(mx > 0.99);
  for (int i = 0; i < 1000; ++i) {
    double u = rng.uniform(-3.0, 5.0);
    REQUIRE(u >= -3.0);
    REQUIRE(u < 5.0);
  }
}

TEST_CASE("normal has unit variance and zero mean") {
  Rng rng(13);
  const int draws = 200000;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < draws; ++i) {
    double z = rng.normal();
    s1 += z;
    s2 += z * z;
  }
  double mean = s1 / draws;
  double var = s2 / draws - mean * mean;
  CHECK(mean == doctest::Approx(0.0).epsilon(0.02));
  CHECK(std::abs(mean) < 0.02);
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("fork gives independent substreams without advancing the parent") {
  Rng parent(99);
  auto c0 = parent.fork(0);
  auto c1 = parent.fork(1);
  auto c0b = parent.fork(0);
  CHECK(c0.next() == c0b.next());
  CHECK(c0.next() != c1.next());

  Rng untouched(99);
  CHECK(parent.next() == untouched.next());
}

TEST_CASE("shuffle permutes deterministically") {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  Rng a(3), b(3);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  CHECK(v != std::vector<int>(v.size(), 0));
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> expect(50);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(sorted == expect);
}

TEST_CASE("fnv1a64 matches the published test vectors") {
  CHECK(fnv1a64("") == 0xCBF29CE484222325ULL);
  CHECK(fnv1a64("a") == 0xAF63DC4C8601EC8CULL);
  CHECK(fnv1a64("foobar") == 0x85944171F73967E8ULL);
}
