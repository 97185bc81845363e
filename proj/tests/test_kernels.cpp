#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "ipl/kernels.hpp"
#include "ipl/math.hpp"

using namespace ipl;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = 2.0 * draw_unit(rng) - 1.0;
  return v;
}

const std::vector<std::size_t> kSizes{0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 63, 64, 65, 100, 257};

}  // namespace

TEST_CASE("scalar dot matches a plain loop") {
  kern::force(kern::Isa::scalar);
  std::vector<double> a{1.0, 2.0, 3.0};
  std::vector<double> b{4.0, -5.0, 6.0};
  CHECK(kern::dot(a.data(), b.data(), 3) == doctest::Approx(12.0));
  CHECK(kern::dot(a.data(), b.data(), 0) == 0.0);
  CHECK(kern::nrm2sq(a.data(), 3) == doctest::Approx(14.0));
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  if (!kern::supported(kern::Isa::avx2)) {
    MESSAGE("AVX2 not available; dispatch stays scalar");
    return;
  }
  Rng rng(2024);
  for (std::size_t n : kSizes) {
    auto a = random_vec(n, rng);
    auto b = random_vec(n, rng);

    kern::force(kern::Isa::scalar);
    const double dot_s = kern::dot(a.data(), b.data(), n);
    const double nrm_s = kern::nrm2sq(a.data(), n);
    kern::force(kern::Isa::avx2);
    const double dot_v = kern::dot(a.data(), b.data(), n);
    const double nrm_v = kern::nrm2sq(a.data(), n);

    // Reductions may reassociate; bound the drift by a scaled epsilon.
    const double tol = 1e-13 * (1.0 + static_cast<double>(n));
    CHECK(std::abs(dot_s - dot_v) <= tol * (1.0 + std::abs(dot_s)));
    CHECK(std::abs(nrm_s - nrm_v) <= tol * (1.0 + nrm_s));

    auto y_s = random_vec(n, rng);
    auto y_v = y_s;
    kern::force(kern::Isa::scalar);
    kern::axpy(0.37, a.data(), y_s.data(), n);
    kern::scale(1.7, y_s.data(), n);
    kern::force(kern::Isa::avx2);
    kern::axpy(0.37, a.data(), y_v.data(), n);
    kern::scale(1.7, y_v.data(), n);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(y_s[i] == doctest::Approx(y_v[i]).epsilon(1e-15));
  }
  kern::force(kern::Isa::scalar);
}

TEST_CASE("matvec equals per-row dot on both paths") {
  Rng rng(7);
  const std::size_t m = 37, d = 64;
  auto mat = random_vec(m * d, rng);
  auto v = random_vec(d, rng);
  std::vector<double> out_s(m), out_v(m);

  kern::force(kern::Isa::scalar);
  kern::matvec(mat.data(), m, d, v.data(), out_s.data());
  for (std::size_t r = 0; r < m; ++r)
    CHECK(out_s[r] == doctest::Approx(kern::dot(mat.data() + r * d, v.data(), d)));

  if (kern::supported(kern::Isa::avx2)) {
    kern::force(kern::Isa::avx2);
    kern::matvec(mat.data(), m, d, v.data(), out_v.data());
    for (std::size_t r = 0; r < m; ++r)
      CHECK(out_s[r] == doctest::Approx(out_v[r]).epsilon(1e-12));
    kern::force(kern::Isa::scalar);
  }
}

TEST_CASE("odd tail dimensions are handled") {
  Rng rng(11);
  for (std::size_t d : {1, 2, 3, 5, 6, 7}) {
    auto mat = random_vec(3 * d, rng);
    auto v = random_vec(d, rng);
    std::vector<double> out(3);
    for (auto isa : {kern::Isa::scalar, kern::Isa::avx2}) {
      if (!kern::supported(isa)) continue;
      kern::force(isa);
      kern::matvec(mat.data(), 3, d, v.data(), out.data());
      for (std::size_t r = 0; r < 3; ++r) {
        double ref = 0.0;
        for (std::size_t f = 0; f < d; ++f) ref += mat[r * d + f] * v[f];
        CHECK(out[r] == doctest::Approx(ref).epsilon(1e-12));
      }
    }
    kern::force(kern::Isa::scalar);
  }
}

TEST_CASE("sigmoid and softplus are stable on the tails") {
  CHECK(sigmoid(0.0) == doctest::Approx(0.5));
  CHECK(sigmoid(800.0) == doctest::Approx(1.0));
  CHECK(sigmoid(-800.0) == doctest::Approx(0.0));
  CHECK(std::isfinite(softplus(800.0)));
  CHECK(softplus(-800.0) == doctest::Approx(0.0));
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
  // -ln sigmoid(s) == softplus(-s)
  for (double s : {-30.0, -2.0, -0.1, 0.0, 0.1, 2.0, 30.0})
    CHECK(softplus(-s) == doctest::Approx(-std::log(sigmoid(s))).epsilon(1e-12));
}
