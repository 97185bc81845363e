#include "ipl/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace ipl::kern {

namespace scalar {
double dot(const double*, const double*, std::size_t);
void axpy(double, const double*, double*, std::size_t);
void scale(double, double*, std::size_t);
double nrm2sq(const double*, std::size_t);
void matvec(const double*, std::size_t, std::size_t, const double*, double*);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define IPL_HAVE_AVX2_TU 1
namespace avx2 {
double dot(const double*, const double*, std::size_t);
void axpy(double, const double*, double*, std::size_t);
void scale(double, double*, std::size_t);
double nrm2sq(const double*, std::size_t);
void matvec(const double*, std::size_t, std::size_t, const double*, double*);
}  // namespace avx2
#else
#define IPL_HAVE_AVX2_TU 0
#endif

namespace {

struct Vtable {
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scale)(double, double*, std::size_t);
  double (*nrm2sq)(const double*, std::size_t);
  void (*matvec)(const double*, std::size_t, std::size_t, const double*, double*);
};

constexpr Vtable kScalar{scalar::dot, scalar::axpy, scalar::scale,
                         scalar::nrm2sq, scalar::matvec};

#if IPL_HAVE_AVX2_TU
constexpr Vtable kAvx2{avx2::dot, avx2::axpy, avx2::scale, avx2::nrm2sq,
                       avx2::matvec};
#endif

bool cpu_has_avx2() {
#if IPL_HAVE_AVX2_TU
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa pick_default() {
  if (const char* env = std::getenv("IPL_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Isa::scalar;
    if (std::strcmp(env, "avx2") == 0) {
      if (!cpu_has_avx2()) throw std::runtime_error("IPL_KERNELS=avx2 but CPU lacks AVX2/FMA");
      return Isa::avx2;
    }
  }
  return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

struct State {
  Isa isa;
  const Vtable* vt;
  State() : isa(pick_default()), vt(select(isa)) {}
  static const Vtable* select(Isa isa) {
#if IPL_HAVE_AVX2_TU
    if (isa == Isa::avx2) return &kAvx2;
#endif
    return &kScalar;
  }
};

State& state() {
  static State s;
  return s;
}

}  // namespace

Isa active() { return state().isa; }

bool supported(Isa isa) {
  return isa == Isa::scalar || (isa == Isa::avx2 && cpu_has_avx2());
}

void force(Isa isa) {
  if (!supported(isa)) throw std::runtime_error("requested kernel ISA not supported on this CPU");
  state().isa = isa;
  state().vt = State::select(isa);
}

const char* name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

double dot(const double* a, const double* b, std::size_t n) { return state().vt->dot(a, b, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { state().vt->axpy(alpha, x, y, n); }
void scale(double alpha, double* x, std::size_t n) { state().vt->scale(alpha, x, n); }
double nrm2sq(const double* x, std::size_t n) { return state().vt->nrm2sq(x, n); }
void matvec(const double* mat, std::size_t m, std::size_t d, const double* v, double* out) {
  state().vt->matvec(mat, m, d, v, out);
}

}  // namespace ipl::kern
