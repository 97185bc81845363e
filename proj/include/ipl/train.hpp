#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "ipl/dataset.hpp"
#include "ipl/math.hpp"
#include "ipl/model.hpp"

namespace ipl {

enum class Optimizer { sgd, adagrad };
enum class IplScope {
  batch,  // std over the distinct positive items of the current batch
  full    // std over every item with at least one training user
};

struct TrainConfig {
  int epochs = 50;
  int batch_size = 1024;
  double learning_rate = 0.05;
  double l2_coeff = 1e-4;    // lambda_Theta
  double lambda_f = 0.0;     // IPL strength; 0 is pure BPR
  double gamma = 1.0;
  Optimizer optimizer = Optimizer::sgd;
  IplScope ipl_scope = IplScope::batch;
  std::uint64_t seed = 42;
  int eval_every = 0;        // epochs between validation evaluations; 0 off
  int eval_k = 20;
  int early_stop_patience = 0;  // evaluations without improvement; 0 off
};

struct BprTriple {
  int user;
  int item_pos;
  int item_neg;
};

struct LossBreakdown {
  double l_bpr = 0.0;
  double l_ipl = 0.0;
  double l_total = 0.0;
  double grad_norm = 0.0;
  double val_recall = std::numeric_limits<double>::quiet_NaN();
};

/// Sparse gradient accumulator over the two embedding tables.
struct GradientBuffer {
  explicit GradientBuffer(int dim);
  void clear();
  double* user_slot(int u);
  double* item_slot(int i);
  void for_each_user(const std::function<void(int, const double*)>& fn) const;
  void for_each_item(const std::function<void(int, const double*)>& fn) const;
  double squared_norm() const;

  int dim;
  std::vector<int> touched_users, touched_items;
  std::unordered_map<int, std::size_t> user_slots, item_slots;
  std::vector<double> user_grads, item_grads;
};

/// Users are drawn by sampling training interactions uniformly, so a user
/// appears proportionally to its positive count; negatives are uniform
/// rejection draws against the user's positives. Users whose positives
/// cover the whole catalog are skipped (with a one-time warning callback).
std::vector<BprTriple> sample_bpr_batch(const InteractionLog& train, int batch_size,
                                        Rng& rng,
                                        const std::function<void(int)>& on_skip = nullptr);

/// Mean over the batch of -ln(sigmoid(y_pos - y_neg)) plus
/// l2_coeff * ||touched rows||_F^2 (each touched row counted once).
/// Gradients are accumulated into grads for the touched rows only.
/// For LightGCN pass the propagated tables and collect gradients with
/// respect to them; backprop through propagation happens in the step.
double bpr_loss_and_grads(const EmbeddingTable& user_emb, const EmbeddingTable& item_emb,
                          const std::vector<BprTriple>& batch, double l2_coeff,
                          GradientBuffer& grads);

/// r_hat_i = sum_{u in U*_i} sigmoid(y_ui) / |U*_i|^(2-gamma) and
/// l_ipl = population std of r_hat over `items` (m_effective = items.size()).
/// The gradient of the std is defined as 0 at the all-equal point.
double ipl_regularizer(const EmbeddingTable& user_emb, const EmbeddingTable& item_emb,
                       const std::vector<int>& items, const InteractionLog& train,
                       double gamma, std::size_t m_effective, GradientBuffer& grads,
                       std::vector<double>* r_hat_out = nullptr);

/// Model-expected rates for a frozen model (diagnostics / gamma proxy).
std::vector<double> expected_rates(const EmbeddingTable& user_emb,
                                   const EmbeddingTable& item_emb,
                                   const std::vector<int>& items,
                                   const InteractionLog& train, double gamma);

struct StepLoss {
  double l_bpr = 0.0;
  double l_ipl = 0.0;
};

/// One optimization step's loss and gradient with respect to the base
/// parameters: BPR over the batch (+ L2 on the batch-touched base rows),
/// plus lambda_f times the IPL term over ipl_items (skipped when empty or
/// lambda_f = 0). For LightGCN both terms are evaluated on the propagated
/// embeddings and pulled back through the graph. This is the exact path
/// train() applies, exposed for gradient verification.
StepLoss debias_step_grads(const Model& model, const std::vector<BprTriple>& batch,
                           const std::vector<int>& ipl_items, const InteractionLog& train_log,
                           const TrainConfig& config, GradientBuffer& grads);

struct TrainResult {
  std::vector<LossBreakdown> trace;  // one entry per epoch
  int best_epoch = -1;               // only meaningful with early stopping
};

using EpochCallback = std::function<void(int epoch, const LossBreakdown&)>;

/// Mini-batch optimization of L_bpr + lambda_f * L_ipl. Deterministic for
/// a fixed seed and kernel ISA. Throws on non-finite loss.
TrainResult train(Model& model, const SplitBundle& split, const TrainConfig& config,
                  const EpochCallback& callback = nullptr);

void save_loss_trace(const std::vector<LossBreakdown>& trace, const std::string& path);

}  // namespace ipl
