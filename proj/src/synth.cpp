#include "ipl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ipl/math.hpp"

namespace ipl {

SynthData generate_biased_log(const SynthConfig& cfg) {
  if (cfg.n_users < 2 || cfg.n_items < 2) throw std::invalid_argument("synth sizes too small");
  if (cfg.q_star_min < 1 || cfg.q_star_cap < cfg.q_star_min)
    throw std::invalid_argument("bad q* range");
  if (!(cfg.e_max > 0.0 && cfg.e_max <= 1.0)) throw std::invalid_argument("e_max in (0,1]");

  const int m = cfg.n_items;
  std::vector<double> weight(m);
  for (int i = 0; i < m; ++i)
    weight[i] = std::pow(static_cast<double>(i + 1), -cfg.popularity_exponent);

  // Scale the profile so the clamped total roughly hits the target.
  auto total_for = [&](double scale) {
    std::int64_t t = 0;
    for (int i = 0; i < m; ++i) {
      auto q = static_cast<std::int64_t>(std::llround(scale * weight[i]));
      t += std::clamp<std::int64_t>(q, cfg.q_star_min, cfg.q_star_cap);
    }
    return t;
  };
  double lo = 1.0, hi = 1.0;
  while (total_for(hi) < cfg.target_interactions && hi < 1e12) hi *= 2.0;
  for (int it = 0; it < 60; ++it) {
    double mid = 0.5 * (lo + hi);
    (total_for(mid) < cfg.target_interactions ? lo : hi) = mid;
  }

  SynthData out;
  out.gamma = cfg.gamma;
  out.q_star.resize(m);
  out.q_true.resize(m);
  out.exposure.resize(m);

  Rng rng(cfg.seed);
  Gaussian gauss;
  const double qmax = static_cast<double>(cfg.q_star_cap);

  std::vector<std::pair<int, int>> pairs;
  std::vector<int> window;
  for (int i = 0; i < m; ++i) {
    auto q = static_cast<std::int64_t>(std::llround(hi * weight[i]));
    std::int64_t q_star = std::clamp<std::int64_t>(q, cfg.q_star_min, cfg.q_star_cap);

    double e = cfg.e_max * std::pow(static_cast<double>(q_star) / qmax, cfg.gamma);
    if (cfg.exposure_noise > 0.0) e *= std::exp(cfg.exposure_noise * gauss(rng));
    e = std::min(e, 1.0);
    std::int64_t q_true =
        std::clamp<std::int64_t>(std::llround(static_cast<double>(q_star) / e), q_star,
                                 cfg.n_users);

    const int start = static_cast<int>(draw_index(rng, cfg.n_users));
    window.resize(q_true);
    for (std::int64_t w = 0; w < q_true; ++w)
      window[w] = static_cast<int>((start + w) % cfg.n_users);
    // Partial Fisher-Yates: first q_star entries become the observed users.
    for (std::int64_t w = 0; w < q_star; ++w) {
      std::int64_t j = w + static_cast<std::int64_t>(draw_index(rng, q_true - w));
      std::swap(window[w], window[j]);
      pairs.emplace_back(window[w], i);
    }

    out.q_star[i] = q_star;
    out.q_true[i] = q_true;
    out.exposure[i] = static_cast<double>(q_star) / static_cast<double>(q_true);
  }

  out.log = InteractionLog(cfg.n_users, cfg.n_items, std::move(pairs));
  return out;
}

}  // namespace ipl
