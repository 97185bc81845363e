#pragma once

// Dense double-precision kernels used by the training and retrieval hot
// loops. Each kernel has a scalar reference implementation and, on x86-64
// with AVX2+FMA, a vectorized variant selected at runtime. The scalar path
// is the semantic reference; the SIMD paths may reassociate reductions and
// are equivalence-tested against it under tolerance.

#include <cstddef>
#include <string>

namespace ipl::kern {

enum class Isa { scalar, avx2 };

// Active instruction set. Defaults to the best supported one; can be forced
// (tests, IPL_KERNELS=scalar|avx2 environment override) before first use or
// at any point between kernel calls.
Isa active();
void force(Isa isa);
bool supported(Isa isa);
const char* name(Isa isa);

// sum_i a[i]*b[i]
double dot(const double* a, const double* b, std::size_t n);

// y[i] += alpha * x[i]
void axpy(double alpha, const double* x, double* y, std::size_t n);

// x[i] *= alpha
void scale(double alpha, double* x, std::size_t n);

// sum_i x[i]^2
double nrm2sq(const double* x, std::size_t n);

// out[r] = dot(mat row r, v) for an m x d row-major matrix.
void matvec(const double* mat, std::size_t m, std::size_t d, const double* v,
            double* out);

}  // namespace ipl::kern
