#pragma once
// Dense double-precision kernels behind the numeric core.
//
// Every kernel has a scalar reference implementation and, on x86-64 with
// AVX2+FMA, a vectorized variant. The backend is picked once at startup
// (overridable with SHINE_SIMD=scalar|avx2 or set_backend) and the two
// variants are equivalence-tested against each other.
//
// Transcendental maps (tanh_map, logistic_map) always evaluate through
// libm so results are bit-identical across backends; vectorization is
// reserved for the linear-algebra inner loops where the time goes.

#include <cstddef>
#include <string>

namespace shine::simd {

enum class Backend { scalar, avx2 };

// Backend in effect. Resolved on first use from CPU features and the
// SHINE_SIMD environment variable.
Backend active_backend();
std::string backend_name();

// Force a backend (tests). Throws std::runtime_error if unsupported here.
void set_backend(Backend b);
bool backend_supported(Backend b);

double dot(const double* a, const double* b, std::size_t n);

// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);

double sum(const double* x, std::size_t n);

// Maximum element; n must be >= 1.
double max_value(const double* x, std::size_t n);

// y = A x + b with A row-major (rows x cols); pass b = nullptr for no bias.
void matvec(const double* A, std::size_t rows, std::size_t cols,
            const double* x, const double* b, double* y);

// x += A^T y
void matvec_t_acc(const double* A, std::size_t rows, std::size_t cols,
                  const double* y, double* x);

// A += alpha * u v^T  (A row-major m x n)
void ger_acc(double alpha, const double* u, std::size_t m,
             const double* v, std::size_t n, double* A);

// Scalar libm in every backend.
void tanh_map(const double* x, double* y, std::size_t n);
void logistic_map(const double* x, double* y, std::size_t n);

}  // namespace shine::simd
