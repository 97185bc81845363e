#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ipl {

// logistic function, stable on both tails
inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

// ln(1 + e^x) without overflow; -ln(sigmoid(s)) == softplus(-s)
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

using Rng = std::mt19937_64;

// Bounded draws and gaussians are hand-rolled instead of using
// std::*_distribution: the standard leaves those sequences
// implementation-defined, and split/init/sampling reproducibility is part of
// this toolkit's contract. The modulo bias is ~n/2^64, irrelevant here.
inline std::uint64_t draw_index(Rng& rng, std::uint64_t n) { return rng() % n; }

inline double draw_unit(Rng& rng) {
  // 53-bit mantissa in [0, 1)
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box-Muller; one value per call, pair cached.
class Gaussian {
 public:
  double operator()(Rng& rng) {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = draw_unit(rng);
    } while (u1 <= 0.0);
    double u2 = draw_unit(rng);
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  double spare_ = 0.0;
  bool has_spare_ = false;
};

template <typename T>
void fisher_yates(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(draw_index(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace ipl
