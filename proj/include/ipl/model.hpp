#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ipl/dataset.hpp"

namespace ipl {

/// Dense row-major parameter table.
struct EmbeddingTable {
  int rows = 0;
  int dim = 0;
  std::vector<double> values;  // rows * dim

  double* row(int r) { return values.data() + static_cast<std::size_t>(r) * dim; }
  const double* row(int r) const { return values.data() + static_cast<std::size_t>(r) * dim; }
};

enum class ModelKind { mf, lightgcn };

/// Symmetric-normalized bipartite training graph in CSR form over the
/// combined node space (users first, then items offset by n_users).
struct NormalizedGraph {
  int n_users = 0;
  int n_items = 0;
  std::vector<std::int64_t> offsets;  // size n_users + n_items + 1
  std::vector<int> columns;
  std::vector<double> weights;  // 1/sqrt(deg(a) * deg(b)) per edge
};

NormalizedGraph build_normalized_graph(const InteractionLog& train);

struct Model {
  ModelKind kind = ModelKind::mf;
  EmbeddingTable user_emb;
  EmbeddingTable item_emb;
  std::optional<NormalizedGraph> graph;  // present iff kind == lightgcn
  int n_layers = 0;                      // propagation depth; 0 == identity
  std::uint64_t seed = 0;

  int n_users() const { return user_emb.rows; }
  int n_items() const { return item_emb.rows; }
  int dim() const { return user_emb.dim; }
};

/// Propagated (layer-averaged) tables; for MF these alias the base tables.
struct EffectiveEmbeddings {
  EmbeddingTable user_emb;
  EmbeddingTable item_emb;
};

/// Gaussian init with standard deviation init_scale (0 gives zero tables).
/// Pass init_scale < 0 to use the default 0.1/sqrt(d).
Model init_model(ModelKind kind, int n_users, int n_items, int dim, int n_layers,
                 double init_scale, std::uint64_t seed);

/// Mean over propagation layers e^(0..L) of Ahat^l E, with
/// Ahat = D^-1/2 A D^-1/2 on the bipartite training graph. Rows of
/// isolated nodes stay at e^(0)'s contribution only.
EffectiveEmbeddings propagate(const Model& model);

/// In-place layer-mean propagation of an (n_users + n_items) x dim
/// row-major matrix: matrix <- mean_l Ahat^l matrix. Ahat is symmetric, so
/// this is also the adjoint, which is what gradient backpropagation needs.
void propagate_matrix(const NormalizedGraph& graph, int n_layers, int dim,
                      std::vector<double>& matrix);

/// Preference score for a single pair; uses propagated embeddings for
/// LightGCN. Prefer scoring through EffectiveEmbeddings in loops.
double score(const Model& model, int user, int item);

struct RecommendationRun {
  int k = 0;
  std::vector<std::vector<int>> lists;       // per user, descending score
  std::vector<std::vector<double>> scores;   // parallel to lists
  std::string excluded = "train-positives";
};

/// Highest-k items per user by score, skipping that user's exclusion set;
/// ties broken by ascending item index. Users absent from `users` get empty
/// lists.
RecommendationRun top_k(const Model& model, const std::vector<int>& users, int k,
                        const InteractionLog& exclude, int n_threads = 1);

void save_checkpoint(const Model& model, const std::string& path);
/// Graphs are not serialized; pass the training log to rebuild one for
/// LightGCN checkpoints.
Model load_checkpoint(const std::string& path, const InteractionLog* train = nullptr);

/// Delimited export: user, rank, item, score (external ids when available).
void save_recommendations(const RecommendationRun& run, const IdMaps* ids,
                          const std::string& path);

}  // namespace ipl
