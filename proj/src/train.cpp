#include "ipl/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "ipl/eval.hpp"
#include "ipl/kernels.hpp"

namespace ipl {

GradientBuffer::GradientBuffer(int dim) : dim(dim) {}

void GradientBuffer::clear() {
  touched_users.clear();
  touched_items.clear();
  user_slots.clear();
  item_slots.clear();
  user_grads.clear();
  item_grads.clear();
}

double* GradientBuffer::user_slot(int u) {
  auto [it, fresh] = user_slots.try_emplace(u, touched_users.size());
  if (fresh) {
    touched_users.push_back(u);
    user_grads.resize(user_grads.size() + dim, 0.0);
  }
  return user_grads.data() + it->second * dim;
}

double* GradientBuffer::item_slot(int i) {
  auto [it, fresh] = item_slots.try_emplace(i, touched_items.size());
  if (fresh) {
    touched_items.push_back(i);
    item_grads.resize(item_grads.size() + dim, 0.0);
  }
  return item_grads.data() + it->second * dim;
}

void GradientBuffer::for_each_user(const std::function<void(int, const double*)>& fn) const {
  for (std::size_t s = 0; s < touched_users.size(); ++s)
    fn(touched_users[s], user_grads.data() + s * dim);
}

void GradientBuffer::for_each_item(const std::function<void(int, const double*)>& fn) const {
  for (std::size_t s = 0; s < touched_items.size(); ++s)
    fn(touched_items[s], item_grads.data() + s * dim);
}

double GradientBuffer::squared_norm() const {
  return kern::nrm2sq(user_grads.data(), user_grads.size()) +
         kern::nrm2sq(item_grads.data(), item_grads.size());
}

std::vector<BprTriple> sample_bpr_batch(const InteractionLog& train, int batch_size,
                                        Rng& rng, const std::function<void(int)>& on_skip) {
  if (train.empty()) throw std::invalid_argument("cannot sample from an empty training log");
  const auto& pairs = train.pairs();
  const std::uint64_t total = pairs.size();
  const int m = train.n_items();

  std::vector<BprTriple> batch;
  batch.reserve(batch_size);
  while (static_cast<int>(batch.size()) < batch_size) {
    auto [u, pos] = pairs[draw_index(rng, total)];
    if (static_cast<int>(train.items_of(u).size()) >= m) {
      if (on_skip) on_skip(u);
      // A log where every user covers the catalog cannot yield negatives.
      bool any = false;
      for (int v = 0; v < train.n_users() && !any; ++v)
        any = static_cast<int>(train.items_of(v).size()) < m;
      if (!any) throw std::runtime_error("no user has a negative item to sample");
      continue;
    }
    int neg;
    do {
      neg = static_cast<int>(draw_index(rng, m));
    } while (train.has(u, neg));
    batch.push_back({u, pos, neg});
  }
  return batch;
}

double bpr_loss_and_grads(const EmbeddingTable& user_emb, const EmbeddingTable& item_emb,
                          const std::vector<BprTriple>& batch, double l2_coeff,
                          GradientBuffer& grads) {
  if (batch.empty()) throw std::invalid_argument("bpr batch is empty");
  const int d = user_emb.dim;
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  double loss = 0.0;
  for (const BprTriple& t : batch) {
    const double* pu = user_emb.row(t.user);
    const double* pi = item_emb.row(t.item_pos);
    const double* pj = item_emb.row(t.item_neg);
    const double s = kern::dot(pu, pi, d) - kern::dot(pu, pj, d);
    loss += softplus(-s);
    // d/ds of softplus(-s) = -sigmoid(-s)
    const double coeff = -sigmoid(-s) * inv_b;
    // Slot pointers are used immediately: a later slot lookup can grow the
    // buffer and invalidate them.
    double* gu = grads.user_slot(t.user);
    for (int f = 0; f < d; ++f) gu[f] += coeff * (pi[f] - pj[f]);
    kern::axpy(coeff, pu, grads.item_slot(t.item_pos), d);
    kern::axpy(-coeff, pu, grads.item_slot(t.item_neg), d);
  }
  loss *= inv_b;

  if (l2_coeff != 0.0) {
    double sq = 0.0;
    for (int u : grads.touched_users) {
      sq += kern::nrm2sq(user_emb.row(u), d);
      kern::axpy(2.0 * l2_coeff, user_emb.row(u), grads.user_slot(u), d);
    }
    for (int i : grads.touched_items) {
      sq += kern::nrm2sq(item_emb.row(i), d);
      kern::axpy(2.0 * l2_coeff, item_emb.row(i), grads.item_slot(i), d);
    }
    loss += l2_coeff * sq;
  }
  return loss;
}

double ipl_regularizer(const EmbeddingTable& user_emb, const EmbeddingTable& item_emb,
                       const std::vector<int>& items, const InteractionLog& train,
                       double gamma, std::size_t m_effective, GradientBuffer& grads,
                       std::vector<double>* r_hat_out) {
  if (items.empty()) return 0.0;
  if (m_effective != items.size())
    throw std::invalid_argument("m_effective must equal the item set size");
  const int d = user_emb.dim;
  const double m = static_cast<double>(m_effective);

  std::vector<double> r_hat(items.size());
  std::vector<double> denom(items.size());
  for (std::size_t n = 0; n < items.size(); ++n) {
    const int i = items[n];
    const auto& users = train.users_of(i);
    if (users.empty())
      throw std::invalid_argument("ipl_regularizer: item without training users");
    denom[n] = std::pow(static_cast<double>(users.size()), 2.0 - gamma);
    double s = 0.0;
    const double* pi = item_emb.row(i);
    for (int u : users) s += sigmoid(kern::dot(user_emb.row(u), pi, d));
    r_hat[n] = s / denom[n];
  }

  double mean = 0.0;
  for (double v : r_hat) mean += v;
  mean /= m;
  double var = 0.0;
  for (double v : r_hat) var += (v - mean) * (v - mean);
  var /= m;
  const double l_ipl = std::sqrt(var);
  if (r_hat_out) *r_hat_out = r_hat;
  if (l_ipl == 0.0) return 0.0;  // all-equal point: subgradient 0

  // d l / d r_hat_n = (r_hat_n - mean) / (m * l)
  for (std::size_t n = 0; n < items.size(); ++n) {
    const int i = items[n];
    const double dl_dr = (r_hat[n] - mean) / (m * l_ipl);
    const double coeff_r = dl_dr / denom[n];
    const double* pi = item_emb.row(i);
    for (int u : train.users_of(i)) {
      const double* pu = user_emb.row(u);
      const double sig = sigmoid(kern::dot(pu, pi, d));
      const double c = coeff_r * sig * (1.0 - sig);
      kern::axpy(c, pu, grads.item_slot(i), d);
      kern::axpy(c, pi, grads.user_slot(u), d);
    }
  }
  return l_ipl;
}

std::vector<double> expected_rates(const EmbeddingTable& user_emb,
                                   const EmbeddingTable& item_emb,
                                   const std::vector<int>& items,
                                   const InteractionLog& train, double gamma) {
  const int d = user_emb.dim;
  std::vector<double> r_hat(items.size());
  for (std::size_t n = 0; n < items.size(); ++n) {
    const int i = items[n];
    const auto& users = train.users_of(i);
    if (users.empty()) {
      r_hat[n] = 0.0;
      continue;
    }
    double s = 0.0;
    const double* pi = item_emb.row(i);
    for (int u : users) s += sigmoid(kern::dot(user_emb.row(u), pi, d));
    r_hat[n] = s / std::pow(static_cast<double>(users.size()), 2.0 - gamma);
  }
  return r_hat;
}

namespace {

// Gradients collected against the propagated embeddings are pulled back to
// the base tables with the same layer-mean operator (Ahat is symmetric).
// Propagation spreads mass to neighbors, so the result is dense-ish.
void backpropagate_graph(const Model& model, GradientBuffer& grads) {
  const NormalizedGraph& g = *model.graph;
  const int d = model.dim();
  const std::size_t n = static_cast<std::size_t>(g.n_users) + g.n_items;
  std::vector<double> dense(n * d, 0.0);
  grads.for_each_user([&](int u, const double* gr) {
    std::copy(gr, gr + d, dense.begin() + static_cast<std::size_t>(u) * d);
  });
  grads.for_each_item([&](int i, const double* gr) {
    std::copy(gr, gr + d, dense.begin() + (static_cast<std::size_t>(g.n_users) + i) * d);
  });
  propagate_matrix(g, model.n_layers, d, dense);

  grads.clear();
  auto nonzero = [&](const double* row) {
    for (int f = 0; f < d; ++f)
      if (row[f] != 0.0) return true;
    return false;
  };
  for (int u = 0; u < g.n_users; ++u) {
    const double* src = dense.data() + static_cast<std::size_t>(u) * d;
    if (!nonzero(src)) continue;
    std::copy(src, src + d, grads.user_slot(u));
  }
  for (int i = 0; i < g.n_items; ++i) {
    const double* src = dense.data() + (static_cast<std::size_t>(g.n_users) + i) * d;
    if (!nonzero(src)) continue;
    std::copy(src, src + d, grads.item_slot(i));
  }
}

std::vector<int> items_with_train_users(const InteractionLog& train) {
  std::vector<int> items;
  for (int i = 0; i < train.n_items(); ++i)
    if (!train.users_of(i).empty()) items.push_back(i);
  return items;
}

std::vector<int> distinct_positive_items(const std::vector<BprTriple>& batch) {
  std::vector<int> items;
  items.reserve(batch.size());
  for (const auto& t : batch) items.push_back(t.item_pos);
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());
  return items;
}

// L2 on the base rows touched by the batch triples, each row once.
double base_l2_term(const Model& model, const std::vector<BprTriple>& batch,
                    double l2_coeff, GradientBuffer& grads) {
  if (l2_coeff == 0.0) return 0.0;
  const int d = model.dim();
  std::vector<int> users, items;
  users.reserve(batch.size());
  items.reserve(2 * batch.size());
  for (const auto& t : batch) {
    users.push_back(t.user);
    items.push_back(t.item_pos);
    items.push_back(t.item_neg);
  }
  std::sort(users.begin(), users.end());
  users.erase(std::unique(users.begin(), users.end()), users.end());
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());

  double sq = 0.0;
  for (int u : users) {
    sq += kern::nrm2sq(model.user_emb.row(u), d);
    kern::axpy(2.0 * l2_coeff, model.user_emb.row(u), grads.user_slot(u), d);
  }
  for (int i : items) {
    sq += kern::nrm2sq(model.item_emb.row(i), d);
    kern::axpy(2.0 * l2_coeff, model.item_emb.row(i), grads.item_slot(i), d);
  }
  return l2_coeff * sq;
}

class ParameterUpdater {
 public:
  ParameterUpdater(Model& model, const TrainConfig& cfg)
      : model_(model), cfg_(cfg) {
    if (cfg.optimizer == Optimizer::adagrad) {
      user_acc_.assign(model.user_emb.values.size(), 0.0);
      item_acc_.assign(model.item_emb.values.size(), 0.0);
    }
  }

  void apply(const GradientBuffer& grads) {
    const int d = model_.dim();
    const double lr = cfg_.learning_rate;
    if (cfg_.optimizer == Optimizer::sgd) {
      grads.for_each_user([&](int u, const double* g) {
        kern::axpy(-lr, g, model_.user_emb.row(u), d);
      });
      grads.for_each_item([&](int i, const double* g) {
        kern::axpy(-lr, g, model_.item_emb.row(i), d);
      });
      return;
    }
    grads.for_each_user([&](int u, const double* g) {
      double* row = model_.user_emb.row(u);
      double* acc = user_acc_.data() + static_cast<std::size_t>(u) * d;
      for (int f = 0; f < d; ++f) {
        acc[f] += g[f] * g[f];
        row[f] -= lr * g[f] / (std::sqrt(acc[f]) + 1e-10);
      }
    });
    grads.for_each_item([&](int i, const double* g) {
      double* row = model_.item_emb.row(i);
      double* acc = item_acc_.data() + static_cast<std::size_t>(i) * d;
      for (int f = 0; f < d; ++f) {
        acc[f] += g[f] * g[f];
        row[f] -= lr * g[f] / (std::sqrt(acc[f]) + 1e-10);
      }
    });
  }

 private:
  Model& model_;
  const TrainConfig& cfg_;
  std::vector<double> user_acc_, item_acc_;
};

double validation_recall(const Model& model, const SplitBundle& split, int k) {
  if (split.validation.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<int> users;
  for (int u = 0; u < split.validation.n_users(); ++u)
    if (!split.validation.items_of(u).empty()) users.push_back(u);
  RecommendationRun run = top_k(model, users, k, split.train);
  AccuracyMetrics acc = precision_recall_ndcg(run, split.validation, k);
  return acc.recall;
}

}  // namespace

StepLoss debias_step_grads(const Model& model, const std::vector<BprTriple>& batch,
                           const std::vector<int>& ipl_items, const InteractionLog& train_log,
                           const TrainConfig& config, GradientBuffer& grads) {
  const bool gcn = model.kind == ModelKind::lightgcn;
  const bool use_ipl = config.lambda_f > 0.0 && !ipl_items.empty();
  const int d = model.dim();

  EffectiveEmbeddings eff;
  const EmbeddingTable* ue = &model.user_emb;
  const EmbeddingTable* ie = &model.item_emb;
  if (gcn) {
    eff = propagate(model);
    ue = &eff.user_emb;
    ie = &eff.item_emb;
  }

  StepLoss loss;
  grads.clear();
  loss.l_bpr = bpr_loss_and_grads(*ue, *ie, batch, gcn ? 0.0 : config.l2_coeff, grads);

  if (use_ipl) {
    GradientBuffer ipl_grads(d);
    loss.l_ipl = ipl_regularizer(*ue, *ie, ipl_items, train_log, config.gamma,
                                 ipl_items.size(), ipl_grads);
    ipl_grads.for_each_user([&](int u, const double* g) {
      kern::axpy(config.lambda_f, g, grads.user_slot(u), d);
    });
    ipl_grads.for_each_item([&](int i, const double* g) {
      kern::axpy(config.lambda_f, g, grads.item_slot(i), d);
    });
  }

  if (gcn) {
    backpropagate_graph(model, grads);
    loss.l_bpr += base_l2_term(model, batch, config.l2_coeff, grads);
  }
  return loss;
}

TrainResult train(Model& model, const SplitBundle& split, const TrainConfig& config,
                  const EpochCallback& callback) {
  if (config.epochs < 0 || config.batch_size < 1)
    throw std::invalid_argument("invalid epochs/batch_size");
  if (config.lambda_f < 0) throw std::invalid_argument("lambda_f must be >= 0");
  if (model.n_users() != split.train.n_users() || model.n_items() != split.train.n_items())
    throw std::invalid_argument("model shape does not match the split");
  if (model.kind == ModelKind::lightgcn && !model.graph)
    model.graph = build_normalized_graph(split.train);

  const InteractionLog& tr = split.train;
  const std::int64_t steps_per_epoch =
      std::max<std::int64_t>(1, (tr.n_interactions() + config.batch_size - 1) / config.batch_size);
  const bool use_ipl = config.lambda_f > 0.0;
  const std::vector<int> full_items = use_ipl && config.ipl_scope == IplScope::full
                                          ? items_with_train_users(tr)
                                          : std::vector<int>{};

  Rng rng(config.seed);
  ParameterUpdater updater(model, config);
  GradientBuffer grads(model.dim());

  TrainResult result;
  double best_val = -1.0;
  int since_best = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double sum_bpr = 0.0, sum_ipl = 0.0, sum_total = 0.0, sum_gnorm = 0.0;
    for (std::int64_t step = 0; step < steps_per_epoch; ++step) {
      std::vector<BprTriple> batch = sample_bpr_batch(tr, config.batch_size, rng);
      const std::vector<int> ipl_items =
          !use_ipl ? std::vector<int>{}
                   : (config.ipl_scope == IplScope::full ? full_items
                                                         : distinct_positive_items(batch));
      StepLoss loss = debias_step_grads(model, batch, ipl_items, tr, config, grads);

      const double l_total = loss.l_bpr + config.lambda_f * loss.l_ipl;
      if (!std::isfinite(l_total))
        throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch) + " step " + std::to_string(step));
      sum_bpr += loss.l_bpr;
      sum_ipl += loss.l_ipl;
      sum_total += l_total;
      sum_gnorm += std::sqrt(grads.squared_norm());

      updater.apply(grads);
    }

    LossBreakdown entry;
    const double inv_steps = 1.0 / static_cast<double>(steps_per_epoch);
    entry.l_bpr = sum_bpr * inv_steps;
    entry.l_ipl = sum_ipl * inv_steps;
    entry.l_total = sum_total * inv_steps;
    entry.grad_norm = sum_gnorm * inv_steps;

    const bool eval_now = config.eval_every > 0 && ((epoch + 1) % config.eval_every == 0);
    if (eval_now) {
      entry.val_recall = validation_recall(model, split, config.eval_k);
      if (config.early_stop_patience > 0 && std::isfinite(entry.val_recall)) {
        if (entry.val_recall > best_val) {
          best_val = entry.val_recall;
          result.best_epoch = epoch;
          since_best = 0;
        } else if (++since_best >= config.early_stop_patience) {
          result.trace.push_back(entry);
          if (callback) callback(epoch, entry);
          break;
        }
      }
    }
    result.trace.push_back(entry);
    if (callback) callback(epoch, entry);
  }
  return result;
}

void save_loss_trace(const std::vector<LossBreakdown>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write loss trace: " + path);
  out << "epoch,l_bpr,l_ipl,l_total,val_recall\n";
  char buf[160];
  for (std::size_t e = 0; e < trace.size(); ++e) {
    const LossBreakdown& t = trace[e];
    if (std::isfinite(t.val_recall))
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g", e, t.l_bpr, t.l_ipl,
                    t.l_total, t.val_recall);
    else
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,", e, t.l_bpr, t.l_ipl, t.l_total);
    out << buf << '\n';
  }
}

}  // namespace ipl
