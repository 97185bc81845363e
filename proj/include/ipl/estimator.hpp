#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ipl/dataset.hpp"

namespace ipl {

enum class RateSource { model_expected, run_observed };

/// Per-item interaction rate r_i = C*_i / (Q*_i)^(2-gamma). Items with
/// Q* = 0 have an undefined denominator: they carry r = 0 here, are not
/// `included`, and their indices are listed in `skipped`.
struct InteractionRate {
  std::vector<double> r;
  std::vector<bool> included;
  std::vector<int> skipped;
  double gamma = 0.0;
  RateSource source = RateSource::run_observed;
};

InteractionRate interaction_rate(const std::vector<double>& c_star,
                                 const std::vector<std::int64_t>& q_star, double gamma,
                                 RateSource source = RateSource::run_observed);

/// Inverse-propensity weights w_i = (Q*_i)^-eta. eta = 0 gives weight 1
/// for every item (including Q* = 0), so SNIPS recall collapses to plain
/// recall; with eta > 0, Q* = 0 items get weight 0 and are flagged.
struct SnipsWeights {
  std::vector<double> w;
  std::vector<int> zero_popularity;  // unweighted items
  double eta = 0.0;
};

SnipsWeights snips_weights(const std::vector<std::int64_t>& q_star, double eta);

enum class GammaMethod { config_supplied, powerlaw_fit };

struct GammaEstimate {
  double value = 0.0;
  GammaMethod method = GammaMethod::config_supplied;
  std::optional<double> fit_residual;  // RMS log-space residual when fitted
  bool degenerate = false;             // fit fell back to the config value
};

struct GammaConfig {
  std::optional<double> value;       // explicit constant (wins)
  std::string dataset_name;          // lookup key for the published table
  /// Per-item exposure proxy for the power-law fit. When absent the fit
  /// trains a plain BPR-MF model on the log and uses the per-item sum of
  /// sigmoid(score) over all users.
  std::optional<std::vector<double>> exposure_proxy;
  int proxy_dim = 32;
  int proxy_epochs = 20;
  double proxy_lr = 0.05;
  std::uint64_t proxy_seed = 17;
};

/// Published per-dataset exponents: movielens-1m 1.826, gowalla 1.285,
/// yelp 1.552, amazon-book 1.446. Empty optional for unknown names.
std::optional<double> gamma_table(const std::string& dataset_name);

/// config_supplied returns the explicit value or the table entry for
/// dataset_name. powerlaw_fit regresses log(exposure proxy) on log(Q*)
/// over items with Q* >= 1 and positive proxy; a degenerate regressor
/// (constant popularity) falls back to the config value with the
/// degenerate flag set.
GammaEstimate estimate_gamma(const InteractionLog& log, GammaMethod method,
                             const GammaConfig& config);

}  // namespace ipl
