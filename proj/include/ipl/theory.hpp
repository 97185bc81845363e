#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ipl::theory {

struct ParetoFit {
  double beta = 0.0;
  std::size_t n_used = 0;       // degrees >= x_min that entered the fit
  std::size_t n_dropped = 0;    // degrees below x_min
  double x_min = 1.0;
  bool degenerate = false;      // all degrees equal x_min: beta diverges
};

/// Continuous-Pareto maximum likelihood for Pr(X = x) ~ (beta-1) x^-beta:
/// beta = 1 + n / sum(ln(x_i / x_min)). Degrees below x_min are dropped
/// and counted; needs at least two distinct values to be non-degenerate.
ParetoFit fit_pareto_beta(const std::vector<std::int64_t>& user_degrees, double x_min = 1.0);

/// Pr(|I_u| > k) under the fitted Pareto: k^(1-beta).
double heavy_user_probability(int k, double beta);

struct MembershipBound {
  double q = 1.0;
  /// The Chernoff expression only upper-bounds the at-risk tail when
  /// (1-c) > p; outside that regime q is reported as computed but the
  /// downstream verdict must be treated as vacuous.
  bool tail_valid = false;
};

/// q = exp(-((1-c) ln((1-c)/p) + c ln(c/(1-p)))), evaluated in log space.
/// This is exp(-KL(Bern(1-c) || Bern(p))), so q is always in (0, 1];
/// parameter corners (p or c outside (0,1)) return the vacuous 1.
MembershipBound membership_bound_q(double c, double p);

struct BoundInputs {
  std::vector<std::int64_t> user_degrees;
  int k = 20;
  double c = 0.99;
  double beta = 0.0;  // from fit_pareto_beta
};

struct BoundReport {
  double p = 1.0;      // Pr(|I_u| > k)
  double q = 1.0;      // per-item membership bound
  double bound = 1.0;  // Pr(condition-1) upper bound
  bool tail_valid = false;
  bool vacuous = false;  // bound pinned at 1 (clamped or invalid inputs)
  std::size_t n_heavy_users = 0;
};

/// 1 - prod_{u: |I_u| > k} (1 - sum_{j=k+1}^{|I_u|} C(|I_u|, j) q^j).
/// Inner tails use log-gamma binomial coefficients with log-sum-exp
/// accumulation and are clamped to [0, 1]; the outer product accumulates
/// log1p terms, so the result is exact in [0, 1] without overflow.
BoundReport condition1_bound(const BoundInputs& inputs);

/// Same, with q supplied directly (monotonicity checks, sensitivity grids).
BoundReport condition1_bound_with_q(const std::vector<std::int64_t>& user_degrees, int k,
                                    double q);

/// log of sum_{j=k+1}^{n} C(n, j) q^j, or -inf when empty/zero.
double log_inner_tail(std::int64_t n, int k, double log_q);

/// Degree file: one degree per line, or "degree,count" histogram rows;
/// '#' comments allowed.
std::vector<std::int64_t> load_degree_file(const std::string& path);

}  // namespace ipl::theory
