#include "ipl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ipl/kernels.hpp"

namespace ipl {

namespace fs = std::filesystem;

namespace {

Delimiter parse_delimiter(const std::string& name) {
  if (name == "tab") return Delimiter::tab;
  if (name == "comma") return Delimiter::comma;
  if (name == "dcolon" || name == "double-colon" || name == "::") return Delimiter::double_colon;
  throw StageError("config", "unknown delimiter '" + name + "' (tab|comma|dcolon)");
}

const char* delimiter_name(Delimiter d) {
  switch (d) {
    case Delimiter::tab: return "tab";
    case Delimiter::comma: return "comma";
    case Delimiter::double_colon: return "dcolon";
  }
  return "tab";
}

std::string format_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string apply_kernel_choice(const std::string& choice) {
  if (choice == "scalar")
    kern::force(kern::Isa::scalar);
  else if (choice == "avx2")
    kern::force(kern::Isa::avx2);
  else if (choice != "auto")
    throw StageError("config", "kernels must be auto|scalar|avx2, got '" + choice + "'");
  return kern::name(kern::active());
}

ResolvedExperiment ResolvedExperiment::from_config(const KeyValueConfig& cfg) {
  ResolvedExperiment r;
  r.dataset_path = cfg.get_string("dataset.path", "");
  r.dataset_name = cfg.get_string("dataset.name", "");
  r.split_dir = cfg.get_string("dataset.split_dir", "");
  r.format.delimiter = parse_delimiter(cfg.get_string("dataset.delimiter", "tab"));
  r.format.user_col = static_cast<int>(cfg.get_int("dataset.user_col", 0));
  r.format.item_col = static_cast<int>(cfg.get_int("dataset.item_col", 1));
  r.format.rating_col = static_cast<int>(cfg.get_int("dataset.rating_col", -1));
  r.format.rating_threshold = cfg.get_double("dataset.rating_threshold", -1e300);

  auto ratios = cfg.get_doubles("split.ratios", {0.7, 0.1, 0.2});
  if (ratios.size() != 3) throw StageError("config", "split.ratios needs three values");
  r.ratios = {ratios[0], ratios[1], ratios[2]};
  if (ratios[0] <= 0 || ratios[1] <= 0 || ratios[2] <= 0 ||
      std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
    throw StageError("config", "split.ratios must be positive and sum to 1");
  r.split_seed = static_cast<std::uint64_t>(cfg.get_int("split.seed", 13));

  const std::string gm = cfg.get_string("gamma.method", "config");
  if (gm == "config")
    r.gamma_method = GammaMethod::config_supplied;
  else if (gm == "powerlaw")
    r.gamma_method = GammaMethod::powerlaw_fit;
  else
    throw StageError("config", "gamma.method must be config|powerlaw");
  if (cfg.has("gamma.value")) r.gamma_config.value = cfg.get_double("gamma.value", 0.0);
  r.gamma_config.dataset_name = r.dataset_name;
  r.gamma_config.proxy_dim = static_cast<int>(cfg.get_int("gamma.proxy_dim", 32));
  r.gamma_config.proxy_epochs = static_cast<int>(cfg.get_int("gamma.proxy_epochs", 20));
  r.gamma_config.proxy_lr = cfg.get_double("gamma.proxy_lr", 0.05);
  r.gamma_config.proxy_seed = static_cast<std::uint64_t>(cfg.get_int("gamma.proxy_seed", 17));

  const std::string kind = cfg.get_string("model.kind", "mf");
  if (kind == "mf")
    r.kind = ModelKind::mf;
  else if (kind == "lightgcn")
    r.kind = ModelKind::lightgcn;
  else
    throw StageError("config", "model.kind must be mf|lightgcn");
  r.dim = static_cast<int>(cfg.get_int("model.dim", 64));
  r.n_layers = static_cast<int>(cfg.get_int("model.layers", 3));
  r.init_scale = cfg.get_double("model.init_scale", -1.0);
  r.model_seed = static_cast<std::uint64_t>(cfg.get_int("model.seed", 1));
  if (r.dim < 1) throw StageError("config", "model.dim must be >= 1");
  if (r.n_layers < 0) throw StageError("config", "model.layers must be >= 0");

  r.train.epochs = static_cast<int>(cfg.get_int("train.epochs", 50));
  r.train.batch_size = static_cast<int>(cfg.get_int("train.batch_size", 1024));
  r.train.learning_rate = cfg.get_double("train.lr", 0.05);
  r.train.l2_coeff = cfg.get_double("train.l2", 1e-4);
  r.train.lambda_f = cfg.get_double("train.lambda_f", 0.0);
  const std::string opt = cfg.get_string("train.optimizer", "sgd");
  if (opt == "sgd")
    r.train.optimizer = Optimizer::sgd;
  else if (opt == "adagrad")
    r.train.optimizer = Optimizer::adagrad;
  else
    throw StageError("config", "train.optimizer must be sgd|adagrad");
  const std::string scope = cfg.get_string("train.ipl_scope", "batch");
  if (scope == "batch")
    r.train.ipl_scope = IplScope::batch;
  else if (scope == "full")
    r.train.ipl_scope = IplScope::full;
  else
    throw StageError("config", "train.ipl_scope must be batch|full");
  r.train.seed = static_cast<std::uint64_t>(cfg.get_int("train.seed", 42));
  r.train.eval_every = static_cast<int>(cfg.get_int("train.eval_every", 0));
  r.train.early_stop_patience = static_cast<int>(cfg.get_int("train.early_stop_patience", 0));
  if (r.train.epochs < 0 || r.train.batch_size < 1)
    throw StageError("config", "train.epochs/batch_size invalid");
  if (r.train.lambda_f < 0) throw StageError("config", "train.lambda_f must be >= 0");

  r.k = static_cast<int>(cfg.get_int("metrics.k", 20));
  if (r.k < 1) throw StageError("config", "metrics.k must be >= 1");
  r.train.eval_k = r.k;
  r.mi_bins = static_cast<int>(cfg.get_int("metrics.mi_bins", 10));
  if (r.mi_bins < 2) throw StageError("config", "metrics.mi_bins must be >= 2");
  if (cfg.has("metrics.snips_eta")) r.snips_eta = cfg.get_double("metrics.snips_eta", 0.0);
  const std::string qs = cfg.get_string("metrics.qstar_source", "train");
  if (qs == "train")
    r.qstar_from_full_log = false;
  else if (qs == "full")
    r.qstar_from_full_log = true;
  else
    throw StageError("config", "metrics.qstar_source must be train|full");

  r.sweep_points = static_cast<int>(cfg.get_int("sweep.points", 20));
  r.sweep_min = cfg.get_double("sweep.min", 1e-6);
  r.sweep_max = cfg.get_double("sweep.max", 1e-2);
  if (r.sweep_points < 1) throw StageError("config", "sweep.points must be >= 1");
  if (!(r.sweep_min > 0) || !(r.sweep_max >= r.sweep_min))
    throw StageError("config", "sweep range must satisfy 0 < min <= max");

  r.parallel = cfg.get_bool("run.parallel", false);
  r.n_threads = static_cast<int>(cfg.get_int("run.threads", 4));
  r.kernels = cfg.get_string("run.kernels", "auto");

  auto unused = cfg.unused_keys();
  if (!unused.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unused) msg += " " + k;
    throw StageError("config", msg);
  }
  return r;
}

KeyValueConfig ResolvedExperiment::to_config() const {
  KeyValueConfig cfg;
  cfg.set("dataset.path", dataset_path);
  cfg.set("dataset.name", dataset_name);
  cfg.set("dataset.split_dir", split_dir);
  cfg.set("dataset.delimiter", delimiter_name(format.delimiter));
  cfg.set("dataset.user_col", std::to_string(format.user_col));
  cfg.set("dataset.item_col", std::to_string(format.item_col));
  cfg.set("dataset.rating_col", std::to_string(format.rating_col));
  cfg.set("dataset.rating_threshold", format_double(format.rating_threshold));
  cfg.set("split.ratios", format_double(ratios.train) + "," + format_double(ratios.validation) +
                              "," + format_double(ratios.test));
  cfg.set("split.seed", std::to_string(split_seed));
  cfg.set("gamma.method", gamma_method == GammaMethod::config_supplied ? "config" : "powerlaw");
  if (gamma_config.value) cfg.set("gamma.value", format_double(*gamma_config.value));
  cfg.set("gamma.proxy_dim", std::to_string(gamma_config.proxy_dim));
  cfg.set("gamma.proxy_epochs", std::to_string(gamma_config.proxy_epochs));
  cfg.set("gamma.proxy_lr", format_double(gamma_config.proxy_lr));
  cfg.set("gamma.proxy_seed", std::to_string(gamma_config.proxy_seed));
  cfg.set("model.kind", kind == ModelKind::mf ? "mf" : "lightgcn");
  cfg.set("model.dim", std::to_string(dim));
  cfg.set("model.layers", std::to_string(n_layers));
  cfg.set("model.init_scale", format_double(init_scale));
  cfg.set("model.seed", std::to_string(model_seed));
  cfg.set("train.epochs", std::to_string(train.epochs));
  cfg.set("train.batch_size", std::to_string(train.batch_size));
  cfg.set("train.lr", format_double(train.learning_rate));
  cfg.set("train.l2", format_double(train.l2_coeff));
  cfg.set("train.lambda_f", format_double(train.lambda_f));
  cfg.set("train.optimizer", train.optimizer == Optimizer::sgd ? "sgd" : "adagrad");
  cfg.set("train.ipl_scope", train.ipl_scope == IplScope::batch ? "batch" : "full");
  cfg.set("train.seed", std::to_string(train.seed));
  cfg.set("train.eval_every", std::to_string(train.eval_every));
  cfg.set("train.early_stop_patience", std::to_string(train.early_stop_patience));
  cfg.set("metrics.k", std::to_string(k));
  cfg.set("metrics.mi_bins", std::to_string(mi_bins));
  if (std::isfinite(snips_eta)) cfg.set("metrics.snips_eta", format_double(snips_eta));
  cfg.set("metrics.qstar_source", qstar_from_full_log ? "full" : "train");
  cfg.set("sweep.points", std::to_string(sweep_points));
  cfg.set("sweep.min", format_double(sweep_min));
  cfg.set("sweep.max", format_double(sweep_max));
  cfg.set("run.parallel", parallel ? "true" : "false");
  cfg.set("run.threads", std::to_string(n_threads));
  cfg.set("run.kernels", kernels);
  return cfg;
}

namespace {

struct LoadedData {
  InteractionLog full;
  SplitBundle split;
};

LoadedData prepare_data(const ResolvedExperiment& cfg) {
  LoadedData data;
  if (!cfg.split_dir.empty()) {
    try {
      data.split = load_split(cfg.split_dir);
    } catch (const std::exception& e) {
      throw StageError("split", e.what());
    }
    // Union of members, for full-log popularity.
    std::vector<std::pair<int, int>> pairs = data.split.train.pairs();
    const auto& vp = data.split.validation.pairs();
    const auto& tp = data.split.test.pairs();
    pairs.insert(pairs.end(), vp.begin(), vp.end());
    pairs.insert(pairs.end(), tp.begin(), tp.end());
    data.full = InteractionLog(data.split.train.n_users(), data.split.train.n_items(),
                               std::move(pairs), data.split.train.id_maps());
    return data;
  }
  if (cfg.dataset_path.empty())
    throw StageError("config", "dataset.path (or dataset.split_dir) is required");
  try {
    data.full = parse_interactions_file(cfg.dataset_path, cfg.format);
  } catch (const std::exception& e) {
    throw StageError("parse", e.what());
  }
  try {
    data.split = stratified_split(data.full, cfg.ratios, cfg.split_seed);
  } catch (const std::exception& e) {
    throw StageError("split", e.what());
  }
  return data;
}

GammaEstimate resolve_gamma(const ResolvedExperiment& cfg, const LoadedData& data) {
  try {
    return estimate_gamma(data.full, cfg.gamma_method, cfg.gamma_config);
  } catch (const std::exception& e) {
    throw StageError("gamma", e.what());
  }
}

ExperimentResult run_on_data(const ResolvedExperiment& cfg, const LoadedData& data,
                             const GammaEstimate& gamma, const std::string& run_dir) {
  fs::create_directories(run_dir);
  const std::string failed_marker = run_dir + "/FAILED.txt";
  std::error_code ec;
  fs::remove(failed_marker, ec);

  auto fail = [&](const std::string& stage, const std::string& what) -> StageError {
    std::ofstream marker(failed_marker);
    marker << "[stage:" << stage << "] " << what << '\n';
    return StageError(stage, what);
  };

  ExperimentResult result;
  result.run_dir = run_dir;
  result.gamma = gamma;

  TrainConfig tc = cfg.train;
  tc.gamma = gamma.value;
  const double eta = std::isfinite(cfg.snips_eta) ? cfg.snips_eta : gamma.value / 2.0;

  // Manifest first: it reproduces the run even if a later stage dies.
  try {
    ResolvedExperiment effective = cfg;
    effective.gamma_config.value = gamma.value;
    effective.snips_eta = eta;
    effective.kernels = kern::name(kern::active());
    KeyValueConfig manifest = effective.to_config();
    std::ofstream out(run_dir + "/manifest.cfg");
    out << manifest.serialize();
  } catch (const std::exception& e) {
    throw fail("write", e.what());
  }

  Model model;
  try {
    model = init_model(cfg.kind, data.split.train.n_users(), data.split.train.n_items(),
                       cfg.dim, cfg.n_layers, cfg.init_scale, cfg.model_seed);
    TrainResult tr = train(model, data.split, tc);
    result.trace = std::move(tr.trace);
    save_loss_trace(result.trace, run_dir + "/loss_trace.csv");
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw fail("train", e.what());
  }

  RecommendationRun run;
  try {
    std::vector<int> users(static_cast<std::size_t>(model.n_users()));
    for (int u = 0; u < model.n_users(); ++u) users[u] = u;
    run = top_k(model, users, cfg.k, data.split.train, cfg.parallel ? cfg.n_threads : 1);
  } catch (const std::exception& e) {
    throw fail("rank", e.what());
  }

  try {
    const PopularityStats pop =
        popularity(cfg.qstar_from_full_log ? data.full : data.split.train);
    result.metrics =
        evaluate_run(run, data.split.test, pop.q_star, gamma.value, cfg.k, cfg.mi_bins, eta);
  } catch (const std::exception& e) {
    throw fail("metrics", e.what());
  }

  try {
    save_checkpoint(model, run_dir + "/checkpoint.bin");
    save_recommendations(run, data.split.train.id_maps().get(), run_dir + "/recommendations.tsv");
    std::ofstream mout(run_dir + "/metrics.json");
    mout << metrics_to_json(result.metrics) << '\n';
  } catch (const std::exception& e) {
    throw fail("write", e.what());
  }
  return result;
}

}  // namespace

ExperimentResult run_experiment(const ResolvedExperiment& config, const std::string& run_dir) {
  apply_kernel_choice(config.kernels);
  LoadedData data = prepare_data(config);
  GammaEstimate gamma = resolve_gamma(config, data);
  return run_on_data(config, data, gamma, run_dir);
}

SweepResult sweep_lambda(const ResolvedExperiment& config, const std::string& out_dir) {
  apply_kernel_choice(config.kernels);
  LoadedData data = prepare_data(config);
  GammaEstimate gamma = resolve_gamma(config, data);
  fs::create_directories(out_dir);

  std::vector<double> grid;
  grid.push_back(0.0);  // baseline row
  if (config.sweep_points == 1) {
    grid.push_back(config.sweep_min);
  } else {
    const double lmin = std::log(config.sweep_min);
    const double lmax = std::log(config.sweep_max);
    for (int p = 0; p < config.sweep_points; ++p)
      grid.push_back(std::exp(lmin + (lmax - lmin) * p / (config.sweep_points - 1)));
  }

  SweepResult result;
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    ResolvedExperiment point = config;
    point.train.lambda_f = grid[idx];
    char sub[64];
    std::snprintf(sub, sizeof(sub), "%s/point_%02zu_lf_%.3e", out_dir.c_str(), idx, grid[idx]);
    SweepRow row;
    row.lambda_f = grid[idx];
    try {
      ExperimentResult r = run_on_data(point, data, gamma, sub);
      row.metrics = r.metrics;
    } catch (const std::exception& e) {
      row.status = std::string("error: ") + e.what();
    }
    result.rows.push_back(std::move(row));
  }

  result.csv_path = out_dir + "/sweep.csv";
  std::ofstream csv(result.csv_path);
  csv << metrics_csv_header() << '\n';
  for (const auto& row : result.rows)
    csv << metrics_csv_row(row.metrics, row.lambda_f, row.status) << '\n';
  return result;
}

PropositionReport check_proposition(const ResolvedExperiment& config,
                                    const std::string& degrees_file,
                                    const std::vector<double>& c_values,
                                    const std::vector<int>& k_values, double x_min,
                                    double threshold) {
  std::vector<std::int64_t> degrees;
  if (!degrees_file.empty()) {
    try {
      degrees = theory::load_degree_file(degrees_file);
    } catch (const std::exception& e) {
      throw StageError("parse", e.what());
    }
  } else {
    LoadedData data = prepare_data(config);
    degrees = popularity(data.split.train).user_degree;
  }

  PropositionReport report;
  report.n_users = degrees.size();
  report.threshold = threshold;
  try {
    report.fit = theory::fit_pareto_beta(degrees, x_min);
  } catch (const std::exception& e) {
    throw StageError("theory", e.what());
  }

  for (double c : c_values) {
    for (int k : k_values) {
      PropositionRow row;
      row.c = c;
      row.k = k;
      row.beta = report.fit.beta;
      if (!report.fit.degenerate) {
        theory::BoundInputs in;
        in.user_degrees = degrees;
        in.k = k;
        in.c = c;
        in.beta = report.fit.beta;
        theory::BoundReport br = theory::condition1_bound(in);
        row.q = br.q;
        row.bound = br.bound;
        row.tail_valid = br.tail_valid;
        row.vacuous = br.vacuous;
      }
      report.rows.push_back(row);
    }
  }

  if (report.fit.degenerate)
    report.verdict = "INCONCLUSIVE";
  else
    report.verdict = report.rows.front().bound < threshold ? "PASS" : "FAIL";
  return report;
}

std::string proposition_csv(const PropositionReport& report) {
  std::string out = "c,k,beta,q,bound,tail_valid\n";
  char buf[160];
  for (const auto& row : report.rows) {
    std::snprintf(buf, sizeof(buf), "%.10g,%d,%.10g,%.10g,%.10g,%d\n", row.c, row.k, row.beta,
                  row.q, row.bound, row.tail_valid ? 1 : 0);
    out += buf;
  }
  return out;
}

}  // namespace ipl
