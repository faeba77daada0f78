// AVX2+FMA variants of the dense kernels. Compiled with -mavx2 -mfma and
// only ever called after a runtime CPU check.

#include <immintrin.h>

#include <cstddef>

namespace shine::simd::avx2 {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double r = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double r = hsum(acc);
  for (; i < n; ++i) r += x[i];
  return r;
}

double max_value(const double* x, std::size_t n) {
  std::size_t i = 0;
  double r = x[0];
  if (n >= 4) {
    __m256d acc = _mm256_loadu_pd(x);
    for (i = 4; i + 4 <= n; i += 4)
      acc = _mm256_max_pd(acc, _mm256_loadu_pd(x + i));
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    r = lanes[0];
    for (int k = 1; k < 4; ++k)
      if (lanes[k] > r) r = lanes[k];
  }
  for (; i < n; ++i)
    if (x[i] > r) r = x[i];
  return r;
}

void matvec(const double* A, std::size_t rows, std::size_t cols,
            const double* x, const double* b, double* y) {
  for (std::size_t r = 0; r < rows; ++r)
    y[r] = dot(A + r * cols, x, cols) + (b ? b[r] : 0.0);
}

void matvec_t_acc(const double* A, std::size_t rows, std::size_t cols,
                  const double* y, double* x) {
  for (std::size_t r = 0; r < rows; ++r) axpy(y[r], A + r * cols, x, cols);
}

void ger_acc(double alpha, const double* u, std::size_t m,
             const double* v, std::size_t n, double* A) {
  for (std::size_t r = 0; r < m; ++r) axpy(alpha * u[r], v, A + r * n, n);
}

}  // namespace shine::simd::avx2
