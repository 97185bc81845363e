#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ipl/estimator.hpp"
#include "ipl/math.hpp"
#include "ipl/synth.hpp"

using namespace ipl;

TEST_CASE("interaction rate: exponent corners and direct values") {
  // gamma = 2: r equals C* exactly
  InteractionRate r2 = interaction_rate({3.0, 7.0}, {10, 100}, 2.0);
  CHECK(r2.r[0] == 3.0);
  CHECK(r2.r[1] == 7.0);

  // gamma = 1: plain ratio
  InteractionRate r1 = interaction_rate({5.0}, {10}, 1.0);
  CHECK(r1.r[0] == doctest::Approx(0.5).epsilon(1e-15));

  // gamma = 1.5: C/sqrt(Q)
  InteractionRate r15 = interaction_rate({10.0}, {100}, 1.5);
  CHECK(r15.r[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("interaction rate: zero C gives exact zero, zero Q is skipped") {
  InteractionRate r = interaction_rate({0.0, 2.0, 1.0}, {4, 0, 5}, 1.3);
  CHECK(r.r[0] == 0.0);
  CHECK(r.included[0]);
  CHECK_FALSE(r.included[1]);
  CHECK(r.skipped == std::vector<int>{1});
  CHECK(r.included[2]);

  CHECK_THROWS_AS(interaction_rate({-1.0}, {3}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(interaction_rate({1.0}, {-3}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(interaction_rate({1.0, 2.0}, {3}, 1.0), std::invalid_argument);
}

TEST_CASE("interaction rate is linear in C*") {
  std::vector<double> c{1.0, 2.0, 5.0};
  std::vector<std::int64_t> q{3, 9, 27};
  InteractionRate base = interaction_rate(c, q, 1.7);
  std::vector<double> scaled{3.5, 7.0, 17.5};
  InteractionRate out = interaction_rate(scaled, q, 1.7);
  for (int i = 0; i < 3; ++i) CHECK(out.r[i] == doctest::Approx(3.5 * base.r[i]).epsilon(1e-12));
}

TEST_CASE("criterion consistency: C = c*Q with Q ~ (Q*)^(1-gamma) flattens r") {
  const double gamma = 1.6;
  const double c_rate = 0.4;
  std::vector<std::int64_t> q_star{2, 7, 19, 55, 140, 500};
  std::vector<double> c_star(q_star.size());
  for (std::size_t i = 0; i < q_star.size(); ++i) {
    const double q_true = std::pow(static_cast<double>(q_star[i]), 1.0 - gamma);
    // observed recommended interactions scale with the item propensity,
    // itself proportional to Q*: C* = c * Q * Q*
    c_star[i] = c_rate * q_true * static_cast<double>(q_star[i]);
  }
  InteractionRate r = interaction_rate(c_star, q_star, gamma);
  for (std::size_t i = 1; i < r.r.size(); ++i)
    CHECK(r.r[i] == doctest::Approx(r.r[0]).epsilon(1e-9));
}

TEST_CASE("snips weights: eta corners") {
  SnipsWeights w0 = snips_weights({0, 1, 4}, 0.0);
  CHECK(w0.w == std::vector<double>{1.0, 1.0, 1.0});
  CHECK(w0.zero_popularity.empty());

  SnipsWeights w1 = snips_weights({1, 4}, 1.0);
  CHECK(w1.w[0] == doctest::Approx(1.0));
  CHECK(w1.w[1] == doctest::Approx(0.25));

  SnipsWeights wh = snips_weights({9}, 0.5);
  CHECK(wh.w[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  SnipsWeights wz = snips_weights({0, 9}, 0.5);
  CHECK(wz.w[0] == 0.0);
  CHECK(wz.zero_popularity == std::vector<int>{0});
}

TEST_CASE("config-supplied gamma table") {
  InteractionLog dummy(1, 1, {{0, 0}});
  GammaConfig cfg;
  cfg.dataset_name = "movielens-1m";
  CHECK(estimate_gamma(dummy, GammaMethod::config_supplied, cfg).value == doctest::Approx(1.826));
  cfg.dataset_name = "gowalla";
  CHECK(estimate_gamma(dummy, GammaMethod::config_supplied, cfg).value == doctest::Approx(1.285));
  cfg.dataset_name = "yelp";
  CHECK(estimate_gamma(dummy, GammaMethod::config_supplied, cfg).value == doctest::Approx(1.552));
  cfg.dataset_name = "amazon-book";
  CHECK(estimate_gamma(dummy, GammaMethod::config_supplied, cfg).value == doctest::Approx(1.446));

  GammaEstimate est = estimate_gamma(dummy, GammaMethod::config_supplied, cfg);
  CHECK(est.method == GammaMethod::config_supplied);
  CHECK_FALSE(est.fit_residual.has_value());

  cfg.dataset_name = "unknown-set";
  CHECK_THROWS_AS(estimate_gamma(dummy, GammaMethod::config_supplied, cfg), std::runtime_error);
  cfg.value = 1.9;
  CHECK(estimate_gamma(dummy, GammaMethod::config_supplied, cfg).value == doctest::Approx(1.9));
}

TEST_CASE("powerlaw fit recovers a planted exponent from the generator") {
  SynthConfig sc;
  sc.n_users = 3000;
  sc.n_items = 400;
  sc.target_interactions = 20000;
  sc.q_star_min = 10;
  sc.q_star_cap = 220;
  sc.gamma = 1.5;
  sc.exposure_noise = 0.08;
  sc.seed = 31;
  SynthData data = generate_biased_log(sc);

  GammaConfig cfg;
  cfg.exposure_proxy = data.exposure;
  GammaEstimate est = estimate_gamma(data.log, GammaMethod::powerlaw_fit, cfg);
  CHECK(est.method == GammaMethod::powerlaw_fit);
  CHECK_FALSE(est.degenerate);
  CHECK(est.fit_residual.has_value());
  CHECK(est.value == doctest::Approx(1.5).epsilon(0.1 / 1.5));
}

TEST_CASE("powerlaw fit on constant popularity degenerates to the fallback") {
  // every item equally popular: regressor variance is zero
  std::vector<std::pair<int, int>> pairs;
  for (int u = 0; u < 6; ++u)
    for (int i = 0; i < 4; ++i) pairs.emplace_back(u, i);
  InteractionLog log(6, 4, std::move(pairs));
  GammaConfig cfg;
  cfg.value = 1.7;
  cfg.exposure_proxy = std::vector<double>{0.5, 0.4, 0.6, 0.5};
  GammaEstimate est = estimate_gamma(log, GammaMethod::powerlaw_fit, cfg);
  CHECK(est.degenerate);
  CHECK(est.value == doctest::Approx(1.7));
}

TEST_CASE("mf-backed proxy path runs and returns a finite slope") {
  SynthConfig sc;
  sc.n_users = 120;
  sc.n_items = 60;
  sc.target_interactions = 1500;
  sc.q_star_min = 4;
  sc.q_star_cap = 60;
  sc.gamma = 1.3;
  sc.seed = 5;
  SynthData data = generate_biased_log(sc);
  GammaConfig cfg;
  cfg.proxy_epochs = 8;
  cfg.proxy_dim = 8;
  GammaEstimate est = estimate_gamma(data.log, GammaMethod::powerlaw_fit, cfg);
  CHECK(std::isfinite(est.value));
  CHECK(est.fit_residual.has_value());
}
