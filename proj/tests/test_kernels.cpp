#include <cmath>
#include <vector>

#include "doctest.h"
#include "shine/kernels.hpp"
#include "shine/rng.hpp"

using namespace shine;
namespace ks = shine::simd;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 2.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return v;
}

double rel_err(double got, double want) {
  double denom = std::max(1.0, std::abs(want));
  return std::abs(got - want) / denom;
}

// Sizes chosen to cover the vector remainder lanes (0..3 tail elements).
const std::size_t kSizes[] = {1, 2, 3, 4, 5, 7, 8, 15, 16, 17, 31, 64, 257};

struct BackendGuard {
  ks::Backend saved;
  BackendGuard() : saved(ks::active_backend()) {}
  ~BackendGuard() { ks::set_backend(saved); }
};

}  // namespace

TEST_CASE("scalar kernels match hand-computed fixtures") {
  BackendGuard guard;
  ks::set_backend(ks::Backend::scalar);

  double a[3] = {1.0, 2.0, 3.0};
  double b[3] = {4.0, -5.0, 6.0};
  CHECK(ks::dot(a, b, 3) == doctest::Approx(12.0).epsilon(1e-15));
  CHECK(ks::sum(a, 3) == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(ks::max_value(b, 3) == doctest::Approx(6.0).epsilon(1e-15));

  double y[3] = {1.0, 1.0, 1.0};
  ks::axpy(2.0, a, y, 3);
  CHECK(y[0] == doctest::Approx(3.0));
  CHECK(y[1] == doctest::Approx(5.0));
  CHECK(y[2] == doctest::Approx(7.0));

  // A = [[1,2],[3,4]], x = [1,-1], b = [10,20] -> y = [9, 19]
  double A[4] = {1.0, 2.0, 3.0, 4.0};
  double x2[2] = {1.0, -1.0};
  double bias[2] = {10.0, 20.0};
  double out[2];
  ks::matvec(A, 2, 2, x2, bias, out);
  CHECK(out[0] == doctest::Approx(9.0));
  CHECK(out[1] == doctest::Approx(19.0));
  ks::matvec(A, 2, 2, x2, nullptr, out);
  CHECK(out[0] == doctest::Approx(-1.0));
  CHECK(out[1] == doctest::Approx(-1.0));

  // x += A^T y with y = [1,1]: columns sums [4, 6]
  double xt[2] = {0.5, 0.5};
  double ones[2] = {1.0, 1.0};
  ks::matvec_t_acc(A, 2, 2, ones, xt);
  CHECK(xt[0] == doctest::Approx(4.5));
  CHECK(xt[1] == doctest::Approx(6.5));

  // A += 2 * u v^T, u = [1,2], v = [3,4]
  double G[4] = {0.0, 0.0, 0.0, 0.0};
  double u[2] = {1.0, 2.0};
  double v[2] = {3.0, 4.0};
  ks::ger_acc(2.0, u, 2, v, 2, G);
  CHECK(G[0] == doctest::Approx(6.0));
  CHECK(G[1] == doctest::Approx(8.0));
  CHECK(G[2] == doctest::Approx(12.0));
  CHECK(G[3] == doctest::Approx(16.0));
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  if (!ks::backend_supported(ks::Backend::avx2)) {
    MESSAGE("avx2 unavailable on this host; equivalence not exercised");
    return;
  }
  BackendGuard guard;
  Rng rng(20240601);

  for (std::size_t n : kSizes) {
    auto a = random_vec(rng, n);
    auto b = random_vec(rng, n);

    ks::set_backend(ks::Backend::scalar);
    double dot_s = ks::dot(a.data(), b.data(), n);
    double sum_s = ks::sum(a.data(), n);
    double max_s = ks::max_value(a.data(), n);
    auto axpy_s = b;
    ks::axpy(0.37, a.data(), axpy_s.data(), n);

    ks::set_backend(ks::Backend::avx2);
    double dot_v = ks::dot(a.data(), b.data(), n);
    double sum_v = ks::sum(a.data(), n);
    double max_v = ks::max_value(a.data(), n);
    auto axpy_v = b;
    ks::axpy(0.37, a.data(), axpy_v.data(), n);

    CHECK(rel_err(dot_v, dot_s) < 1e-12);
    CHECK(rel_err(sum_v, sum_s) < 1e-12);
    CHECK(max_v == max_s);  // max is order-independent, exact
    for (std::size_t i = 0; i < n; ++i)
      CHECK(rel_err(axpy_v[i], axpy_s[i]) < 1e-12);
  }
}

TEST_CASE("avx2 matrix kernels agree with the scalar reference") {
  if (!ks::backend_supported(ks::Backend::avx2)) return;
  BackendGuard guard;
  Rng rng(77);

  const std::size_t shapes[][2] = {{1, 1}, {2, 3}, {4, 4}, {5, 7},
                                   {8, 8}, {3, 17}, {16, 33}, {64, 65}};
  for (auto& sh : shapes) {
    std::size_t rows = sh[0], cols = sh[1];
    auto A = random_vec(rng, rows * cols);
    auto x = random_vec(rng, cols);
    auto bvec = random_vec(rng, rows);
    auto yin = random_vec(rng, rows);
    auto u = random_vec(rng, rows);
    auto v = random_vec(rng, cols);

    ks::set_backend(ks::Backend::scalar);
    std::vector<double> y_s(rows), xt_s(x), Ag_s(A);
    ks::matvec(A.data(), rows, cols, x.data(), bvec.data(), y_s.data());
    ks::matvec_t_acc(A.data(), rows, cols, yin.data(), xt_s.data());
    ks::ger_acc(-1.3, u.data(), rows, v.data(), cols, Ag_s.data());

    ks::set_backend(ks::Backend::avx2);
    std::vector<double> y_v(rows), xt_v(x), Ag_v(A);
    ks::matvec(A.data(), rows, cols, x.data(), bvec.data(), y_v.data());
    ks::matvec_t_acc(A.data(), rows, cols, yin.data(), xt_v.data());
    ks::ger_acc(-1.3, u.data(), rows, v.data(), cols, Ag_v.data());

    for (std::size_t i = 0; i < rows; ++i) CHECK(rel_err(y_v[i], y_s[i]) < 1e-12);
    for (std::size_t i = 0; i < cols; ++i)
      CHECK(rel_err(xt_v[i], xt_s[i]) < 1e-12);
    for (std::size_t i = 0; i < rows * cols; ++i)
      CHECK(rel_err(Ag_v[i], Ag_s[i]) < 1e-12);
  }
}

TEST_CASE("transcendental maps are bit-identical across backends") {
  BackendGuard guard;
  Rng rng(5);
  auto x = random_vec(rng, 129, 4.0);
  std::vector<double> t_s(x.size()), l_s(x.size());

  ks::set_backend(ks::Backend::scalar);
  ks::tanh_map(x.data(), t_s.data(), x.size());
  ks::logistic_map(x.data(), l_s.data(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(t_s[i] == std::tanh(x[i]));
    CHECK(l_s[i] == 1.0 / (1.0 + std::exp(-x[i])));
  }

  if (!ks::backend_supported(ks::Backend::avx2)) return;
  std::vector<double> t_v(x.size()), l_v(x.size());
  ks::set_backend(ks::Backend::avx2);
  ks::tanh_map(x.data(), t_v.data(), x.size());
  ks::logistic_map(x.data(), l_v.data(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(t_v[i] == t_s[i]);
    CHECK(l_v[i] == l_s[i]);
  }
}

TEST_CASE("backend selection is sticky and reports support") {
  BackendGuard guard;
  CHECK(ks::backend_supported(ks::Backend::scalar));
  ks::set_backend(ks::Backend::scalar);
  CHECK(ks::active_backend() == ks::Backend::scalar);
  CHECK(ks::backend_name() == "scalar");
  if (ks::backend_supported(ks::Backend::avx2)) {
    ks::set_backend(ks::Backend::avx2);
    CHECK(ks::active_backend() == ks::Backend::avx2);
    CHECK(ks::backend_name() == "avx2");
  } else {
    CHECK_THROWS(ks::set_backend(ks::Backend::avx2));
  }
}
