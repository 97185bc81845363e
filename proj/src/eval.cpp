#include "ipl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "json.hpp"

namespace ipl {

AccuracyMetrics precision_recall_ndcg(const RecommendationRun& run,
                                      const InteractionLog& test, int k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (k > run.k) throw std::invalid_argument("k exceeds the run's list length");

  double sum_p = 0.0, sum_r = 0.0, sum_n = 0.0;
  int evaluated = 0;
  for (int u = 0; u < test.n_users(); ++u) {
    const auto& test_items = test.items_of(u);
    if (test_items.empty()) continue;
    ++evaluated;
    const auto& list = run.lists[u];
    const int depth = std::min<int>(k, static_cast<int>(list.size()));

    int hits = 0;
    double dcg = 0.0;
    for (int r = 0; r < depth; ++r) {
      if (std::binary_search(test_items.begin(), test_items.end(), list[r])) {
        ++hits;
        dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
      }
    }
    double idcg = 0.0;
    const int ideal = std::min<int>(k, static_cast<int>(test_items.size()));
    for (int r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);

    sum_p += 100.0 * static_cast<double>(hits) / static_cast<double>(k);
    sum_r += 100.0 * static_cast<double>(hits) / static_cast<double>(test_items.size());
    sum_n += idcg > 0.0 ? 100.0 * dcg / idcg : 0.0;
  }

  AccuracyMetrics m;
  m.n_users_evaluated = evaluated;
  if (evaluated > 0) {
    m.precision = sum_p / evaluated;
    m.recall = sum_r / evaluated;
    m.ndcg = sum_n / evaluated;
  }
  return m;
}

SnipsResult snips_recall(const RecommendationRun& run, const InteractionLog& test,
                         const std::vector<double>& weights, int k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (k > run.k) throw std::invalid_argument("k exceeds the run's list length");
  if (static_cast<int>(weights.size()) != test.n_items())
    throw std::invalid_argument("weight vector does not cover the item space");

  double sum = 0.0;
  int evaluated = 0, unweighted = 0;
  for (int u = 0; u < test.n_users(); ++u) {
    const auto& test_items = test.items_of(u);
    if (test_items.empty()) continue;

    double denom = 0.0;
    for (int i : test_items) denom += weights[i];
    if (denom == 0.0) {
      ++unweighted;
      continue;
    }
    double num = 0.0;
    const auto& list = run.lists[u];
    const int depth = std::min<int>(k, static_cast<int>(list.size()));
    for (int r = 0; r < depth; ++r) {
      int item = list[r];
      if (std::binary_search(test_items.begin(), test_items.end(), item)) num += weights[item];
    }
    ++evaluated;
    sum += 100.0 * num / denom;
  }

  SnipsResult s;
  s.n_users_evaluated = evaluated;
  s.n_users_unweighted = unweighted;
  if (evaluated > 0) s.recall = sum / evaluated;
  return s;
}

std::vector<double> recommended_interactions(const RecommendationRun& run,
                                             const InteractionLog& test, int k) {
  std::vector<double> c_star(test.n_items(), 0.0);
  for (int u = 0; u < test.n_users(); ++u) {
    const auto& test_items = test.items_of(u);
    if (test_items.empty()) continue;
    const auto& list = run.lists[u];
    const int depth = std::min<int>(k, static_cast<int>(list.size()));
    for (int r = 0; r < depth; ++r) {
      int item = list[r];
      if (std::binary_search(test_items.begin(), test_items.end(), item)) c_star[item] += 1.0;
    }
  }
  return c_star;
}

DiResult di(const RecommendationRun& run, const InteractionLog& test,
            const std::vector<std::int64_t>& q_star, double gamma, int k) {
  std::vector<double> c_star = recommended_interactions(run, test, k);
  InteractionRate rate = interaction_rate(c_star, q_star, gamma);

  double sum = 0.0;
  std::int64_t n = 0;
  for (std::size_t i = 0; i < rate.r.size(); ++i) {
    if (!rate.included[i]) continue;
    sum += rate.r[i];
    ++n;
  }
  DiResult out;
  out.skipped_items = static_cast<int>(rate.skipped.size());
  if (n == 0) return out;
  const double mean = sum / static_cast<double>(n);
  if (mean == 0.0) return out;  // no hits at all: std/mean undefined

  double var = 0.0;
  for (std::size_t i = 0; i < rate.r.size(); ++i) {
    if (!rate.included[i]) continue;
    var += (rate.r[i] - mean) * (rate.r[i] - mean);
  }
  var /= static_cast<double>(n);
  out.value = std::sqrt(var) / mean;
  out.defined = true;
  return out;
}

namespace {

// Equal-mass edges: edge j is the value at sorted position ceil(j*n/B)-1;
// bin(v) = #edges strictly below v, so edge-tied values take the lower bin.
std::vector<int> quantile_bins(const std::vector<double>& x, int bins) {
  const std::size_t n = x.size();
  std::vector<double> sorted(x);
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> edges;
  edges.reserve(bins - 1);
  for (int j = 1; j < bins; ++j) {
    std::size_t pos = static_cast<std::size_t>(
        std::ceil(static_cast<double>(j) * static_cast<double>(n) / bins));
    edges.push_back(sorted[std::min(n - 1, pos == 0 ? 0 : pos - 1)]);
  }
  std::vector<int> assignment(n);
  for (std::size_t i = 0; i < n; ++i) {
    int b = 0;
    for (int j = 0; j < bins - 1; ++j)
      if (x[i] > edges[j]) b = j + 1;
    assignment[i] = b;
  }
  return assignment;
}

double mi_from_bins(const std::vector<int>& bx, const std::vector<int>& by, int bins) {
  const std::size_t n = bx.size();
  std::vector<double> joint(static_cast<std::size_t>(bins) * bins, 0.0);
  std::vector<double> px(bins, 0.0), py(bins, 0.0);
  const double w = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    joint[static_cast<std::size_t>(bx[i]) * bins + by[i]] += w;
    px[bx[i]] += w;
    py[by[i]] += w;
  }
  double mi = 0.0;
  for (int a = 0; a < bins; ++a) {
    for (int b = 0; b < bins; ++b) {
      const double p = joint[static_cast<std::size_t>(a) * bins + b];
      if (p > 0.0) mi += p * std::log(p / (px[a] * py[b]));
    }
  }
  return std::max(0.0, mi);
}

}  // namespace

double mi(const std::vector<double>& r, const std::vector<double>& q_star, int bins) {
  if (bins < 2) throw std::invalid_argument("mi needs at least 2 bins");
  if (r.size() != q_star.size()) throw std::invalid_argument("mi inputs differ in length");
  if (r.size() < 2) throw std::invalid_argument("mi needs at least 2 items");
  return mi_from_bins(quantile_bins(r, bins), quantile_bins(q_star, bins), bins);
}

double mi_included(const std::vector<double>& r, const std::vector<std::int64_t>& q_star,
                   const std::vector<bool>& included, int bins) {
  std::vector<double> rr, qq;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!included[i]) continue;
    rr.push_back(r[i]);
    qq.push_back(static_cast<double>(q_star[i]));
  }
  return mi(rr, qq, bins);
}

MetricsReport evaluate_run(const RecommendationRun& run, const InteractionLog& test,
                           const std::vector<std::int64_t>& q_star, double gamma, int k,
                           int mi_bins, double snips_eta) {
  MetricsReport rep;
  rep.k = k;
  rep.mi_bins = mi_bins;
  rep.gamma = gamma;
  rep.snips_eta = snips_eta;

  AccuracyMetrics acc = precision_recall_ndcg(run, test, k);
  rep.precision_at_k = acc.precision;
  rep.recall_at_k = acc.recall;
  rep.ndcg_at_k = acc.ndcg;
  rep.n_users_evaluated = acc.n_users_evaluated;

  SnipsWeights w = snips_weights(q_star, snips_eta);
  rep.snips_recall = snips_recall(run, test, w.w, k).recall;

  std::vector<double> c_star = recommended_interactions(run, test, k);
  InteractionRate rate = interaction_rate(c_star, q_star, gamma);
  rep.mi = mi_included(rate.r, q_star, rate.included, mi_bins);

  DiResult d = di(run, test, q_star, gamma, k);
  rep.di = d.value;
  rep.di_defined = d.defined;
  rep.skipped_items = d.skipped_items;
  return rep;
}

std::string metrics_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["precision_at_k"] = r.precision_at_k;
  j["recall_at_k"] = r.recall_at_k;
  j["ndcg_at_k"] = r.ndcg_at_k;
  j["snips_recall"] = r.snips_recall;
  j["mi"] = r.mi;
  if (r.di_defined)
    j["di"] = r.di;
  else
    j["di"] = nullptr;
  j["k"] = r.k;
  j["mi_bins"] = r.mi_bins;
  j["gamma"] = r.gamma;
  j["snips_eta"] = r.snips_eta;
  j["n_users_evaluated"] = r.n_users_evaluated;
  j["skipped_items"] = r.skipped_items;
  return j.dump(2);
}

std::string metrics_csv_header() {
  return "lambda_f,precision_at_k,recall_at_k,ndcg_at_k,snips_recall,mi,di,inv_di,status";
}

std::string metrics_csv_row(const MetricsReport& r, double lambda_f, const std::string& status) {
  char buf[320];
  if (status != "ok") {
    std::snprintf(buf, sizeof(buf), "%.10g,,,,,,,,", lambda_f);
    return std::string(buf) + status;
  }
  std::string di_s = "", inv_di_s = "";
  if (r.di_defined) {
    char tmp[48];
    std::snprintf(tmp, sizeof(tmp), "%.10g", r.di);
    di_s = tmp;
    if (r.di > 0.0) {
      std::snprintf(tmp, sizeof(tmp), "%.10g", 1.0 / r.di);
      inv_di_s = tmp;
    }
  }
  std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%s,%s,ok", lambda_f,
                r.precision_at_k, r.recall_at_k, r.ndcg_at_k, r.snips_recall, r.mi,
                di_s.c_str(), inv_di_s.c_str());
  return std::string(buf);
}

}  // namespace ipl
