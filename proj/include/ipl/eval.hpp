#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ipl/dataset.hpp"
#include "ipl/estimator.hpp"
#include "ipl/model.hpp"

namespace ipl {

struct AccuracyMetrics {
  double precision = 0.0;  // x100
  double recall = 0.0;     // x100
  double ndcg = 0.0;       // x100
  int n_users_evaluated = 0;
};

/// Macro-averaged Precision/Recall/NDCG@k over users with a nonempty test
/// set, times 100. NDCG uses binary gains, log2 discounts, and an ideal
/// DCG over min(k, |test_u|) positions.
AccuracyMetrics precision_recall_ndcg(const RecommendationRun& run,
                                      const InteractionLog& test, int k);

struct SnipsResult {
  double recall = 0.0;  // x100
  int n_users_evaluated = 0;
  int n_users_unweighted = 0;  // all test items carried weight 0
};

/// Self-normalized IPS recall: per user, the weight of hit test items over
/// the weight of all test items, macro-averaged, times 100. With uniform
/// weights this equals plain recall bit for bit.
SnipsResult snips_recall(const RecommendationRun& run, const InteractionLog& test,
                         const std::vector<double>& weights, int k);

/// C*_i: users u with i in u's top-k list and (u, i) in test.
std::vector<double> recommended_interactions(const RecommendationRun& run,
                                             const InteractionLog& test, int k);

struct DiResult {
  double value = 0.0;
  bool defined = false;  // false when no included item received a hit
  int skipped_items = 0;
};

/// Deviation of the interaction distribution: population std over mean of
/// r_i across items with Q* > 0.
DiResult di(const RecommendationRun& run, const InteractionLog& test,
            const std::vector<std::int64_t>& q_star, double gamma, int k);

/// Mutual information (nats) between r and Q* after equal-mass quantile
/// binning into `bins` bins; values tied with a bin edge go to the lower
/// bin. A constant variable yields 0.
double mi(const std::vector<double>& r, const std::vector<double>& q_star, int bins);
/// Same, restricted to indices marked included.
double mi_included(const std::vector<double>& r, const std::vector<std::int64_t>& q_star,
                   const std::vector<bool>& included, int bins);

struct MetricsReport {
  double precision_at_k = 0.0;
  double recall_at_k = 0.0;
  double ndcg_at_k = 0.0;
  double snips_recall = 0.0;
  double mi = 0.0;
  double di = 0.0;
  bool di_defined = false;
  int k = 0;
  int mi_bins = 0;
  double gamma = 0.0;
  double snips_eta = 0.0;
  int n_users_evaluated = 0;
  int skipped_items = 0;
};

/// Full bias-aware evaluation of one run against a test split, with Q*
/// taken from the given popularity source (normally the training split).
MetricsReport evaluate_run(const RecommendationRun& run, const InteractionLog& test,
                           const std::vector<std::int64_t>& q_star, double gamma, int k,
                           int mi_bins, double snips_eta);

std::string metrics_to_json(const MetricsReport& report);
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& report, double lambda_f,
                            const std::string& status = "ok");

}  // namespace ipl
