#include "shine/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace shine::simd {

namespace scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sum(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double max_value(const double* x, std::size_t n) {
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
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

}  // namespace scalar

#if SHINE_HAVE_AVX2
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double sum(const double* x, std::size_t n);
double max_value(const double* x, std::size_t n);
void matvec(const double* A, std::size_t rows, std::size_t cols,
            const double* x, const double* b, double* y);
void matvec_t_acc(const double* A, std::size_t rows, std::size_t cols,
                  const double* y, double* x);
void ger_acc(double alpha, const double* u, std::size_t m,
             const double* v, std::size_t n, double* A);
}  // namespace avx2
#endif

namespace {

struct Ops {
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  double (*max_value)(const double*, std::size_t);
  void (*matvec)(const double*, std::size_t, std::size_t, const double*,
                 const double*, double*);
  void (*matvec_t_acc)(const double*, std::size_t, std::size_t, const double*,
                       double*);
  void (*ger_acc)(double, const double*, std::size_t, const double*,
                  std::size_t, double*);
};

constexpr Ops kScalarOps = {scalar::dot,    scalar::axpy,
                            scalar::sum,    scalar::max_value,
                            scalar::matvec, scalar::matvec_t_acc,
                            scalar::ger_acc};

#if SHINE_HAVE_AVX2
constexpr Ops kAvx2Ops = {avx2::dot,    avx2::axpy,         avx2::sum,
                          avx2::max_value, avx2::matvec,
                          avx2::matvec_t_acc, avx2::ger_acc};
#endif

bool cpu_has_avx2() {
#if SHINE_HAVE_AVX2
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend resolve_initial_backend() {
  if (const char* env = std::getenv("SHINE_SIMD")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
    if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2()) return Backend::avx2;
    if (std::strcmp(env, "avx2") == 0)
      throw std::runtime_error("SHINE_SIMD=avx2 but CPU lacks AVX2/FMA");
    // "auto" or anything else falls through to detection
  }
  return cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
}

struct Dispatch {
  Backend backend;
  const Ops* ops;
  Dispatch() : backend(resolve_initial_backend()), ops(table(backend)) {}
  static const Ops* table(Backend b) {
#if SHINE_HAVE_AVX2
    if (b == Backend::avx2) return &kAvx2Ops;
#endif
    (void)b;
    return &kScalarOps;
  }
};

Dispatch& dispatch() {
  static Dispatch d;
  return d;
}

}  // namespace

Backend active_backend() { return dispatch().backend; }

std::string backend_name() {
  return dispatch().backend == Backend::avx2 ? "avx2" : "scalar";
}

bool backend_supported(Backend b) {
  return b == Backend::scalar || cpu_has_avx2();
}

void set_backend(Backend b) {
  if (!backend_supported(b))
    throw std::runtime_error("requested SIMD backend not supported on this CPU");
  dispatch().backend = b;
  dispatch().ops = Dispatch::table(b);
}

double dot(const double* a, const double* b, std::size_t n) {
  return dispatch().ops->dot(a, b, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  dispatch().ops->axpy(alpha, x, y, n);
}

double sum(const double* x, std::size_t n) { return dispatch().ops->sum(x, n); }

double max_value(const double* x, std::size_t n) {
  return dispatch().ops->max_value(x, n);
}

void matvec(const double* A, std::size_t rows, std::size_t cols,
            const double* x, const double* b, double* y) {
  dispatch().ops->matvec(A, rows, cols, x, b, y);
}

void matvec_t_acc(const double* A, std::size_t rows, std::size_t cols,
                  const double* y, double* x) {
  dispatch().ops->matvec_t_acc(A, rows, cols, y, x);
}

void ger_acc(double alpha, const double* u, std::size_t m,
             const double* v, std::size_t n, double* A) {
  dispatch().ops->ger_acc(alpha, u, m, v, n, A);
}

void tanh_map(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

void logistic_map(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

}  // namespace shine::simd
