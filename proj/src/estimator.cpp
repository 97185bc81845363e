#include "ipl/estimator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include "ipl/kernels.hpp"
#include "ipl/math.hpp"
#include "ipl/model.hpp"
#include "ipl/train.hpp"

namespace ipl {

InteractionRate interaction_rate(const std::vector<double>& c_star,
                                 const std::vector<std::int64_t>& q_star, double gamma,
                                 RateSource source) {
  if (c_star.size() != q_star.size())
    throw std::invalid_argument("c_star and q_star differ in length");
  InteractionRate out;
  out.gamma = gamma;
  out.source = source;
  out.r.assign(c_star.size(), 0.0);
  out.included.assign(c_star.size(), false);
  for (std::size_t i = 0; i < c_star.size(); ++i) {
    if (c_star[i] < 0.0 || q_star[i] < 0)
      throw std::invalid_argument("interaction counts must be non-negative");
    if (q_star[i] == 0) {
      out.skipped.push_back(static_cast<int>(i));
      continue;
    }
    out.included[i] = true;
    if (c_star[i] == 0.0) continue;  // r exactly 0
    out.r[i] = c_star[i] / std::pow(static_cast<double>(q_star[i]), 2.0 - gamma);
  }
  return out;
}

SnipsWeights snips_weights(const std::vector<std::int64_t>& q_star, double eta) {
  SnipsWeights out;
  out.eta = eta;
  out.w.assign(q_star.size(), 0.0);
  for (std::size_t i = 0; i < q_star.size(); ++i) {
    if (q_star[i] < 0) throw std::invalid_argument("q_star must be non-negative");
    if (eta == 0.0) {
      out.w[i] = 1.0;
    } else if (q_star[i] == 0) {
      out.zero_popularity.push_back(static_cast<int>(i));
    } else {
      out.w[i] = std::pow(static_cast<double>(q_star[i]), -eta);
    }
  }
  return out;
}

std::optional<double> gamma_table(const std::string& dataset_name) {
  std::string key;
  key.reserve(dataset_name.size());
  for (char c : dataset_name) {
    if (c == '_' || c == ' ') c = '-';
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (key == "movielens-1m" || key == "ml-1m") return 1.826;
  if (key == "gowalla") return 1.285;
  if (key == "yelp" || key == "yelp2018") return 1.552;
  if (key == "amazon-book" || key == "amazon-books") return 1.446;
  return std::nullopt;
}

namespace {

double resolve_config_gamma(const GammaConfig& config) {
  if (config.value) return *config.value;
  if (auto v = gamma_table(config.dataset_name)) return *v;
  throw std::runtime_error("no gamma available: unknown dataset '" + config.dataset_name +
                           "' and no explicit value configured");
}

// Per-item sum of sigmoid(score) over all users under a plain BPR-MF model
// trained on the log; the heuristic stand-in when no proxy is supplied.
std::vector<double> mf_exposure_proxy(const InteractionLog& log, const GammaConfig& config) {
  Model model = init_model(ModelKind::mf, log.n_users(), log.n_items(), config.proxy_dim, 0,
                           -1.0, config.proxy_seed);
  SplitBundle pseudo;
  pseudo.train = log;
  TrainConfig tc;
  tc.epochs = config.proxy_epochs;
  tc.batch_size = 512;
  tc.learning_rate = config.proxy_lr;
  tc.l2_coeff = 1e-4;
  tc.lambda_f = 0.0;
  tc.seed = config.proxy_seed;
  train(model, pseudo, tc);

  // Exposure counts every user, not just an item's observed ones.
  std::vector<double> proxy(log.n_items(), 0.0);
  std::vector<double> scores(log.n_items());
  for (int u = 0; u < log.n_users(); ++u) {
    kern::matvec(model.item_emb.values.data(), static_cast<std::size_t>(log.n_items()),
                 static_cast<std::size_t>(model.dim()), model.user_emb.row(u), scores.data());
    for (int i = 0; i < log.n_items(); ++i) proxy[i] += sigmoid(scores[i]);
  }
  return proxy;
}

}  // namespace

GammaEstimate estimate_gamma(const InteractionLog& log, GammaMethod method,
                             const GammaConfig& config) {
  GammaEstimate est;
  if (method == GammaMethod::config_supplied) {
    est.value = resolve_config_gamma(config);
    est.method = GammaMethod::config_supplied;
    return est;
  }

  PopularityStats stats = popularity(log);
  std::vector<double> proxy =
      config.exposure_proxy ? *config.exposure_proxy : mf_exposure_proxy(log, config);
  if (proxy.size() != static_cast<std::size_t>(log.n_items()))
    throw std::invalid_argument("exposure proxy does not cover the item space");

  // log-log least squares: slope of log(proxy) on log(Q*).
  std::vector<double> lx, ly;
  for (int i = 0; i < log.n_items(); ++i) {
    if (stats.q_star[i] < 1 || proxy[i] <= 0.0) continue;
    lx.push_back(std::log(static_cast<double>(stats.q_star[i])));
    ly.push_back(std::log(proxy[i]));
  }
  const std::size_t n = lx.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }

  if (n < 2 || sxx < 1e-12) {
    // constant-popularity regressor: fall back to the configured constant
    est.value = resolve_config_gamma(config);
    est.method = GammaMethod::powerlaw_fit;
    est.degenerate = true;
    return est;
  }

  const double slope = sxy / sxx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pred = my + slope * (lx[i] - mx);
    ss_res += (ly[i] - pred) * (ly[i] - pred);
  }
  est.value = slope;
  est.method = GammaMethod::powerlaw_fit;
  est.fit_residual = std::sqrt(ss_res / static_cast<double>(n));
  return est;
}

}  // namespace ipl
