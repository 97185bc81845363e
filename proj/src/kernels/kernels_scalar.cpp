// Scalar reference kernels. Compiled with -ffp-contract=off (project-wide)
// so the reduction order and rounding are the plain IEEE double semantics
// the SIMD variants are tested against.

#include <cstddef>

namespace ipl::kern::scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

double nrm2sq(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

void matvec(const double* mat, std::size_t m, std::size_t d, const double* v,
            double* out) {
  for (std::size_t r = 0; r < m; ++r) out[r] = dot(mat + r * d, v, d);
}

}  // namespace ipl::kern::scalar
