#include "ipl/theory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

namespace ipl::theory {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

ParetoFit fit_pareto_beta(const std::vector<std::int64_t>& user_degrees, double x_min) {
  if (x_min < 1.0) throw std::invalid_argument("x_min must be >= 1");
  ParetoFit fit;
  fit.x_min = x_min;
  double log_sum = 0.0;
  for (std::int64_t x : user_degrees) {
    if (x < static_cast<std::int64_t>(x_min)) {
      ++fit.n_dropped;
      continue;
    }
    log_sum += std::log(static_cast<double>(x) / x_min);
    ++fit.n_used;
  }
  if (fit.n_used == 0) throw std::invalid_argument("no degrees at or above x_min");
  if (log_sum <= 0.0) {
    // every degree sits at x_min: the likelihood pushes beta to infinity
    fit.degenerate = true;
    fit.beta = std::numeric_limits<double>::infinity();
    return fit;
  }
  fit.beta = 1.0 + static_cast<double>(fit.n_used) / log_sum;
  return fit;
}

double heavy_user_probability(int k, double beta) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  return std::pow(static_cast<double>(k), 1.0 - beta);
}

MembershipBound membership_bound_q(double c, double p) {
  MembershipBound out;
  if (!(c > 0.0 && c < 1.0) || !(p > 0.0 && p < 1.0)) return out;  // vacuous 1
  const double a = 1.0 - c;
  const double kl = a * std::log(a / p) + c * std::log(c / (1.0 - p));
  out.q = std::exp(-std::max(0.0, kl));  // KL >= 0; guard rounding
  out.tail_valid = a > p;
  return out;
}

double log_inner_tail(std::int64_t n, int k, double log_q) {
  if (n <= k) return kNegInf;
  if (log_q == kNegInf) return kNegInf;
  const double lg_n = std::lgamma(static_cast<double>(n) + 1.0);
  double max_term = kNegInf;
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(n - k));
  for (std::int64_t j = k + 1; j <= n; ++j) {
    const double log_choose = lg_n - std::lgamma(static_cast<double>(j) + 1.0) -
                              std::lgamma(static_cast<double>(n - j) + 1.0);
    const double t = log_choose + static_cast<double>(j) * log_q;
    terms.push_back(t);
    max_term = std::max(max_term, t);
  }
  if (max_term == kNegInf) return kNegInf;
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - max_term);
  return max_term + std::log(sum);
}

BoundReport condition1_bound_with_q(const std::vector<std::int64_t>& user_degrees, int k,
                                    double q) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  BoundReport rep;
  rep.q = q;
  if (!(q >= 0.0)) throw std::invalid_argument("q must be non-negative");

  // Degrees repeat heavily; evaluate each distinct degree once.
  std::map<std::int64_t, std::int64_t> histogram;
  for (std::int64_t x : user_degrees)
    if (x > k) ++histogram[x];
  rep.n_heavy_users = 0;
  for (auto& [deg, count] : histogram) rep.n_heavy_users += count;

  if (histogram.empty()) {
    rep.bound = 0.0;  // empty product
    return rep;
  }
  if (q >= 1.0) {
    rep.bound = 1.0;
    rep.vacuous = true;
    return rep;
  }

  const double log_q = q == 0.0 ? kNegInf : std::log(q);
  double log_product = 0.0;  // sum of log(1 - inner_u)
  for (const auto& [deg, count] : histogram) {
    const double log_inner = log_inner_tail(deg, k, log_q);
    if (log_inner >= 0.0) {  // inner tail clamped to 1: the product dies
      rep.bound = 1.0;
      rep.vacuous = true;
      return rep;
    }
    const double inner = std::exp(log_inner);  // in [0, 1)
    log_product += static_cast<double>(count) * std::log1p(-inner);
  }
  rep.bound = std::clamp(-std::expm1(log_product), 0.0, 1.0);
  return rep;
}

BoundReport condition1_bound(const BoundInputs& inputs) {
  if (!(inputs.c > 0.0 && inputs.c < 1.0)) throw std::invalid_argument("c must be in (0,1)");
  if (!(inputs.beta > 1.0)) {
    BoundReport rep;
    rep.vacuous = true;  // degenerate or unfitted beta
    return rep;
  }
  const double p = heavy_user_probability(inputs.k, inputs.beta);
  MembershipBound mb = membership_bound_q(inputs.c, p);
  BoundReport rep = condition1_bound_with_q(inputs.user_degrees, inputs.k, mb.q);
  rep.p = p;
  rep.tail_valid = mb.tail_valid;
  if (!mb.tail_valid) rep.vacuous = true;
  return rep;
}

std::vector<std::int64_t> load_degree_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open degree file: " + path);
  std::vector<std::int64_t> degrees;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::size_t comma = line.find(',');
    if (comma == std::string::npos) {
      degrees.push_back(std::stoll(line));
    } else {
      const std::int64_t deg = std::stoll(line.substr(0, comma));
      const std::int64_t count = std::stoll(line.substr(comma + 1));
      if (count < 0) throw std::runtime_error("negative count in degree histogram");
      for (std::int64_t c = 0; c < count; ++c) degrees.push_back(deg);
    }
  }
  if (degrees.empty()) throw std::runtime_error("degree file has no entries: " + path);
  return degrees;
}

}  // namespace ipl::theory
