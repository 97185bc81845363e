#include "ipl/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <future>
#include <stdexcept>

#include "ipl/kernels.hpp"
#include "ipl/math.hpp"
#include "json.hpp"

namespace ipl {

NormalizedGraph build_normalized_graph(const InteractionLog& train) {
  NormalizedGraph g;
  g.n_users = train.n_users();
  g.n_items = train.n_items();
  const int n = g.n_users + g.n_items;
  g.offsets.assign(n + 1, 0);
  for (int u = 0; u < g.n_users; ++u)
    g.offsets[u + 1] = static_cast<std::int64_t>(train.items_of(u).size());
  for (int i = 0; i < g.n_items; ++i)
    g.offsets[g.n_users + i + 1] = static_cast<std::int64_t>(train.users_of(i).size());
  for (int v = 0; v < n; ++v) g.offsets[v + 1] += g.offsets[v];

  g.columns.resize(g.offsets[n]);
  g.weights.resize(g.offsets[n]);
  auto norm = [&](int du, int di) { return 1.0 / std::sqrt(static_cast<double>(du) * di); };
  for (int u = 0; u < g.n_users; ++u) {
    std::int64_t pos = g.offsets[u];
    for (int i : train.items_of(u)) {
      g.columns[pos] = g.n_users + i;
      g.weights[pos] = norm(static_cast<int>(train.items_of(u).size()),
                            static_cast<int>(train.users_of(i).size()));
      ++pos;
    }
  }
  for (int i = 0; i < g.n_items; ++i) {
    std::int64_t pos = g.offsets[g.n_users + i];
    for (int u : train.users_of(i)) {
      g.columns[pos] = u;
      g.weights[pos] = norm(static_cast<int>(train.items_of(u).size()),
                            static_cast<int>(train.users_of(i).size()));
      ++pos;
    }
  }
  return g;
}

Model init_model(ModelKind kind, int n_users, int n_items, int dim, int n_layers,
                 double init_scale, std::uint64_t seed) {
  if (n_users <= 0 || n_items <= 0 || dim <= 0)
    throw std::invalid_argument("model dimensions must be positive");
  if (n_layers < 0) throw std::invalid_argument("n_layers must be >= 0");
  if (init_scale < 0) init_scale = 0.1 / std::sqrt(static_cast<double>(dim));

  Model m;
  m.kind = kind;
  m.n_layers = (kind == ModelKind::lightgcn) ? n_layers : 0;
  m.seed = seed;
  m.user_emb = {n_users, dim, std::vector<double>(static_cast<std::size_t>(n_users) * dim)};
  m.item_emb = {n_items, dim, std::vector<double>(static_cast<std::size_t>(n_items) * dim)};

  Rng rng(seed);
  Gaussian gauss;
  for (double& v : m.user_emb.values) v = init_scale * gauss(rng);
  for (double& v : m.item_emb.values) v = init_scale * gauss(rng);
  return m;
}

namespace {

// out = Ahat * in over the combined node space.
void spmv_embeddings(const NormalizedGraph& g, const std::vector<double>& in,
                     std::vector<double>& out, int dim) {
  const int n = g.n_users + g.n_items;
  std::fill(out.begin(), out.end(), 0.0);
  for (int v = 0; v < n; ++v) {
    double* dst = out.data() + static_cast<std::size_t>(v) * dim;
    for (std::int64_t e = g.offsets[v]; e < g.offsets[v + 1]; ++e) {
      kern::axpy(g.weights[e], in.data() + static_cast<std::size_t>(g.columns[e]) * dim,
                 dst, static_cast<std::size_t>(dim));
    }
  }
}

}  // namespace

void propagate_matrix(const NormalizedGraph& graph, int n_layers, int dim,
                      std::vector<double>& matrix) {
  std::vector<double> acc = matrix;
  std::vector<double> next(matrix.size());
  for (int l = 0; l < n_layers; ++l) {
    spmv_embeddings(graph, matrix, next, dim);
    matrix.swap(next);
    for (std::size_t j = 0; j < matrix.size(); ++j) acc[j] += matrix[j];
  }
  const double inv = 1.0 / (n_layers + 1);
  kern::scale(inv, acc.data(), acc.size());
  matrix.swap(acc);
}

EffectiveEmbeddings propagate(const Model& model) {
  if (model.kind != ModelKind::lightgcn) {
    return {model.user_emb, model.item_emb};
  }
  if (!model.graph) throw std::runtime_error("LightGCN model has no propagation graph");
  const NormalizedGraph& g = *model.graph;
  const int dim = model.dim();
  const std::size_t total = static_cast<std::size_t>(g.n_users + g.n_items) * dim;

  std::vector<double> buf(total);
  std::memcpy(buf.data(), model.user_emb.values.data(),
              model.user_emb.values.size() * sizeof(double));
  std::memcpy(buf.data() + model.user_emb.values.size(), model.item_emb.values.data(),
              model.item_emb.values.size() * sizeof(double));
  propagate_matrix(g, model.n_layers, dim, buf);

  EffectiveEmbeddings eff;
  eff.user_emb = {model.n_users(), dim, std::vector<double>(buf.begin(), buf.begin() + model.user_emb.values.size())};
  eff.item_emb = {model.n_items(), dim, std::vector<double>(buf.begin() + model.user_emb.values.size(), buf.end())};
  return eff;
}

double score(const Model& model, int user, int item) {
  if (user < 0 || user >= model.n_users() || item < 0 || item >= model.n_items())
    throw std::out_of_range("score index out of range");
  if (model.kind == ModelKind::mf) {
    return kern::dot(model.user_emb.row(user), model.item_emb.row(item),
                     static_cast<std::size_t>(model.dim()));
  }
  EffectiveEmbeddings eff = propagate(model);
  return kern::dot(eff.user_emb.row(user), eff.item_emb.row(item),
                   static_cast<std::size_t>(model.dim()));
}

namespace {

void top_k_for_user(const EffectiveEmbeddings& eff, int user, int k,
                    const std::vector<int>& excluded_items,
                    std::vector<int>& out_items, std::vector<double>& out_scores,
                    std::vector<double>& score_buf,
                    std::vector<std::pair<double, int>>& cand_buf) {
  const int m = eff.item_emb.rows;
  const int d = eff.item_emb.dim;
  score_buf.resize(m);
  kern::matvec(eff.item_emb.values.data(), static_cast<std::size_t>(m),
               static_cast<std::size_t>(d), eff.user_emb.row(user), score_buf.data());

  cand_buf.clear();
  std::size_t ex = 0;
  for (int i = 0; i < m; ++i) {
    while (ex < excluded_items.size() && excluded_items[ex] < i) ++ex;
    if (ex < excluded_items.size() && excluded_items[ex] == i) continue;
    cand_buf.emplace_back(score_buf[i], i);
  }
  const int take = std::min<int>(k, static_cast<int>(cand_buf.size()));
  auto better = [](const std::pair<double, int>& a, const std::pair<double, int>& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  };
  std::partial_sort(cand_buf.begin(), cand_buf.begin() + take, cand_buf.end(), better);
  out_items.resize(take);
  out_scores.resize(take);
  for (int r = 0; r < take; ++r) {
    out_items[r] = cand_buf[r].second;
    out_scores[r] = cand_buf[r].first;
  }
}

}  // namespace

RecommendationRun top_k(const Model& model, const std::vector<int>& users, int k,
                        const InteractionLog& exclude, int n_threads) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  EffectiveEmbeddings eff = propagate(model);

  RecommendationRun run;
  run.k = k;
  run.lists.resize(model.n_users());
  run.scores.resize(model.n_users());

  auto work = [&](std::size_t begin, std::size_t end) {
    std::vector<double> score_buf;
    std::vector<std::pair<double, int>> cand_buf;
    for (std::size_t j = begin; j < end; ++j) {
      int u = users[j];
      if (u < 0 || u >= model.n_users()) throw std::out_of_range("top_k user out of range");
      top_k_for_user(eff, u, k, exclude.items_of(u), run.lists[u], run.scores[u],
                     score_buf, cand_buf);
    }
  };

  if (n_threads <= 1 || users.size() < 64) {
    work(0, users.size());
  } else {
    // Per-user outputs land in preallocated slots, so the reduction is
    // deterministic regardless of thread completion order.
    const std::size_t chunks = std::min<std::size_t>(n_threads, users.size());
    std::vector<std::future<void>> futs;
    const std::size_t step = (users.size() + chunks - 1) / chunks;
    for (std::size_t c = 0; c < chunks; ++c) {
      std::size_t b = c * step;
      std::size_t e = std::min(users.size(), b + step);
      if (b >= e) break;
      futs.push_back(std::async(std::launch::async, work, b, e));
    }
    for (auto& f : futs) f.get();
  }
  return run;
}

void save_checkpoint(const Model& model, const std::string& path) {
  nlohmann::json header;
  header["kind"] = model.kind == ModelKind::mf ? "mf" : "lightgcn";
  header["n_users"] = model.n_users();
  header["n_items"] = model.n_items();
  header["dim"] = model.dim();
  header["n_layers"] = model.n_layers;
  header["seed"] = model.seed;
  std::string head = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  const char magic[8] = {'I', 'P', 'L', 'C', 'K', 'P', 'T', '1'};
  out.write(magic, 8);
  std::uint32_t len = static_cast<std::uint32_t>(head.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(reinterpret_cast<const char*>(model.user_emb.values.data()),
            static_cast<std::streamsize>(model.user_emb.values.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(model.item_emb.values.data()),
            static_cast<std::streamsize>(model.item_emb.values.size() * sizeof(double)));
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Model load_checkpoint(const std::string& path, const InteractionLog* train) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "IPLCKPT1", 8) != 0)
    throw std::runtime_error("not an IPL checkpoint: " + path);
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string head(len, '\0');
  in.read(head.data(), len);
  nlohmann::json header = nlohmann::json::parse(head);

  Model m;
  m.kind = header.at("kind").get<std::string>() == "lightgcn" ? ModelKind::lightgcn : ModelKind::mf;
  const int n_users = header.at("n_users").get<int>();
  const int n_items = header.at("n_items").get<int>();
  const int dim = header.at("dim").get<int>();
  m.n_layers = header.at("n_layers").get<int>();
  m.seed = header.at("seed").get<std::uint64_t>();
  m.user_emb = {n_users, dim, std::vector<double>(static_cast<std::size_t>(n_users) * dim)};
  m.item_emb = {n_items, dim, std::vector<double>(static_cast<std::size_t>(n_items) * dim)};
  in.read(reinterpret_cast<char*>(m.user_emb.values.data()),
          static_cast<std::streamsize>(m.user_emb.values.size() * sizeof(double)));
  in.read(reinterpret_cast<char*>(m.item_emb.values.data()),
          static_cast<std::streamsize>(m.item_emb.values.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  if (m.kind == ModelKind::lightgcn) {
    if (train) m.graph = build_normalized_graph(*train);
  }
  return m;
}

void save_recommendations(const RecommendationRun& run, const IdMaps* ids,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write recommendations: " + path);
  out << "user\trank\titem\tscore\n";
  char buf[64];
  for (std::size_t u = 0; u < run.lists.size(); ++u) {
    for (std::size_t r = 0; r < run.lists[u].size(); ++r) {
      int item = run.lists[u][r];
      std::snprintf(buf, sizeof(buf), "%.17g", run.scores[u][r]);
      if (ids)
        out << ids->user_ids[u] << '\t' << (r + 1) << '\t' << ids->item_ids[item] << '\t' << buf << '\n';
      else
        out << u << '\t' << (r + 1) << '\t' << item << '\t' << buf << '\n';
    }
  }
}

}  // namespace ipl
