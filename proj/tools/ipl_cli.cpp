// Experiment runner for the IPL debiasing toolkit.
//
// Subcommands: ingest, split, train, evaluate, sweep, check-proposition,
// estimate-gamma. Every subcommand reads a flat key=value config file
// (--config) with --set key=value overrides; flags win over file values.
// Output directories default to $IPL_OUT_ROOT/<subcommand> (or
// ./runs/<subcommand>).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "ipl/experiment.hpp"
#include "ipl/synth.hpp"
#include "json.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("-c,--config", opts.config_path, "key=value config file");
  cmd->add_option("-s,--set", opts.overrides, "config override, may repeat (key=value)");
  cmd->add_option("-o,--out", opts.out_dir, "output directory");
}

ipl::KeyValueConfig load_config(const CommonOpts& opts) {
  ipl::KeyValueConfig cfg;
  if (!opts.config_path.empty()) cfg = ipl::KeyValueConfig::from_file(opts.config_path);
  for (const auto& assignment : opts.overrides) cfg.set_assignment(assignment);
  return cfg;
}

std::string resolve_out(const CommonOpts& opts, const std::string& subcommand) {
  if (!opts.out_dir.empty()) return opts.out_dir;
  const char* root = std::getenv("IPL_OUT_ROOT");
  return std::string(root ? root : "runs") + "/" + subcommand;
}

int run_guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IPL popularity-debiasing toolkit"};
  app.require_subcommand(1);

  CommonOpts ingest_opts, split_opts, train_opts, eval_opts, sweep_opts, prop_opts, gamma_opts,
      synth_opts;

  auto* ingest = app.add_subcommand("ingest", "parse a dataset and report its shape");
  add_common(ingest, ingest_opts);
  bool ingest_write = false;
  ingest->add_flag("--write-tsv", ingest_write, "write the deduplicated log as canonical TSV");

  auto* split = app.add_subcommand("split", "stratified per-item train/validation/test split");
  add_common(split, split_opts);

  auto* train = app.add_subcommand(
      "train", "full run: parse, split, train, rank, evaluate; writes a run directory");
  add_common(train, train_opts);

  auto* evaluate = app.add_subcommand("evaluate", "evaluate an existing checkpoint");
  add_common(evaluate, eval_opts);
  std::string checkpoint_path;
  evaluate->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();

  auto* sweep = app.add_subcommand("sweep", "lambda_f sweep with a lambda_f=0 baseline row");
  add_common(sweep, sweep_opts);

  auto* prop = app.add_subcommand("check-proposition",
                                  "fit Pareto beta and bound the condition-1 probability");
  add_common(prop, prop_opts);
  std::string degrees_file;
  std::vector<double> c_values{0.99};
  std::vector<int> k_values{20};
  double x_min = 1.0;
  double threshold = 1e-10;
  std::string prop_csv_path;
  prop->add_option("--degrees-file", degrees_file,
                   "degree file (one per line or degree,count rows) instead of a dataset");
  prop->add_option("--recall", c_values, "target recall values c");
  prop->add_option("-k", k_values, "list length values k");
  prop->add_option("--x-min", x_min, "Pareto fit lower cutoff");
  prop->add_option("--threshold", threshold, "verdict threshold on the bound");
  prop->add_option("--csv", prop_csv_path, "also write the (c,k) grid as CSV");

  auto* gamma = app.add_subcommand("estimate-gamma", "dataset exposure exponent");
  add_common(gamma, gamma_opts);

  auto* synth = app.add_subcommand("synth", "generate a biased synthetic dataset (TSV)");
  add_common(synth, synth_opts);

  CLI11_PARSE(app, argc, argv);

  if (ingest->parsed()) {
    return run_guarded([&] {
      auto cfg = ipl::ResolvedExperiment::from_config(load_config(ingest_opts));
      ipl::ParseReport report;
      ipl::InteractionLog log = ipl::parse_interactions_file(cfg.dataset_path, cfg.format, &report);
      nlohmann::json j;
      j["n_users"] = log.n_users();
      j["n_items"] = log.n_items();
      j["n_interactions"] = log.n_interactions();
      j["rows_read"] = report.rows_read;
      j["rows_malformed"] = report.rows_malformed;
      j["rows_below_threshold"] = report.rows_below_threshold;
      j["rows_duplicate"] = report.rows_duplicate;
      std::cout << j.dump(2) << '\n';
      if (ingest_write) {
        std::string dir = resolve_out(ingest_opts, "ingest");
        std::filesystem::create_directories(dir);
        std::ofstream out(dir + "/interactions.tsv");
        const ipl::IdMaps* ids = log.id_maps().get();
        for (auto [u, i] : log.pairs())
          out << ids->user_ids[u] << '\t' << ids->item_ids[i] << '\n';
        std::cerr << "wrote " << dir << "/interactions.tsv\n";
      }
      return 0;
    });
  }

  if (split->parsed()) {
    return run_guarded([&] {
      auto cfg = ipl::ResolvedExperiment::from_config(load_config(split_opts));
      ipl::InteractionLog log = ipl::parse_interactions_file(cfg.dataset_path, cfg.format);
      ipl::SplitBundle bundle = ipl::stratified_split(log, cfg.ratios, cfg.split_seed);
      std::string dir = resolve_out(split_opts, "split");
      std::string manifest = ipl::save_split(bundle, dir);
      std::cout << "split written to " << dir << " (" << manifest << ")\n";
      return 0;
    });
  }

  if (train->parsed()) {
    return run_guarded([&] {
      auto cfg = ipl::ResolvedExperiment::from_config(load_config(train_opts));
      std::string dir = resolve_out(train_opts, "train");
      ipl::ExperimentResult result = ipl::run_experiment(cfg, dir);
      std::cout << ipl::metrics_to_json(result.metrics) << '\n';
      std::cerr << "run directory: " << result.run_dir << '\n';
      return 0;
    });
  }

  if (evaluate->parsed()) {
    return run_guarded([&] {
      auto cfg = ipl::ResolvedExperiment::from_config(load_config(eval_opts));
      ipl::apply_kernel_choice(cfg.kernels);
      ipl::InteractionLog full = ipl::parse_interactions_file(cfg.dataset_path, cfg.format);
      ipl::SplitBundle bundle = ipl::stratified_split(full, cfg.ratios, cfg.split_seed);
      ipl::Model model = ipl::load_checkpoint(checkpoint_path, &bundle.train);
      ipl::GammaEstimate g = ipl::estimate_gamma(full, cfg.gamma_method, cfg.gamma_config);
      const double eta = std::isfinite(cfg.snips_eta) ? cfg.snips_eta : g.value / 2.0;
      std::vector<int> users(static_cast<std::size_t>(model.n_users()));
      for (int u = 0; u < model.n_users(); ++u) users[u] = u;
      ipl::RecommendationRun run =
          ipl::top_k(model, users, cfg.k, bundle.train, cfg.parallel ? cfg.n_threads : 1);
      const ipl::PopularityStats pop =
          ipl::popularity(cfg.qstar_from_full_log ? full : bundle.train);
      ipl::MetricsReport report =
          ipl::evaluate_run(run, bundle.test, pop.q_star, g.value, cfg.k, cfg.mi_bins, eta);
      std::cout << ipl::metrics_to_json(report) << '\n';
      if (!eval_opts.out_dir.empty()) {
        std::filesystem::create_directories(eval_opts.out_dir);
        std::ofstream out(eval_opts.out_dir + "/metrics.json");
        out << ipl::metrics_to_json(report) << '\n';
      }
      return 0;
    });
  }

  if (sweep->parsed()) {
    return run_guarded([&] {
      auto cfg = ipl::ResolvedExperiment::from_config(load_config(sweep_opts));
      std::string dir = resolve_out(sweep_opts, "sweep");
      ipl::SweepResult result = ipl::sweep_lambda(cfg, dir);
      int failures = 0;
      for (const auto& row : result.rows)
        if (row.status != "ok") ++failures;
      std::cout << "sweep rows: " << result.rows.size() << " (failures: " << failures
                << ")\ncsv: " << result.csv_path << '\n';
      return 0;
    });
  }

  if (prop->parsed()) {
    return run_guarded([&] {
      ipl::KeyValueConfig raw = load_config(prop_opts);
      ipl::ResolvedExperiment cfg;
      if (degrees_file.empty()) cfg = ipl::ResolvedExperiment::from_config(raw);
      ipl::PropositionReport report =
          ipl::check_proposition(cfg, degrees_file, c_values, k_values, x_min, threshold);
      std::cout << "users: " << report.n_users << "  beta: " << report.fit.beta
                << (report.fit.degenerate ? " (degenerate fit)" : "") << '\n';
      std::cout << ipl::proposition_csv(report);
      for (const auto& row : report.rows) {
        if (!row.tail_valid && !report.fit.degenerate)
          std::cout << "note: c=" << row.c << ",k=" << row.k
                    << ": (1-c) <= p, the Chernoff tail is vacuous; bound reported as computed\n";
      }
      std::cout << "verdict: " << report.verdict << " (threshold " << threshold << ")\n";
      if (!prop_csv_path.empty()) {
        std::ofstream out(prop_csv_path);
        out << ipl::proposition_csv(report);
      }
      return report.verdict == "PASS" ? 0 : 2;
    });
  }

  if (gamma->parsed()) {
    return run_guarded([&] {
      auto cfg = ipl::ResolvedExperiment::from_config(load_config(gamma_opts));
      ipl::InteractionLog full = ipl::parse_interactions_file(cfg.dataset_path, cfg.format);
      ipl::GammaEstimate est = ipl::estimate_gamma(full, cfg.gamma_method, cfg.gamma_config);
      nlohmann::json j;
      j["gamma"] = est.value;
      j["method"] = est.method == ipl::GammaMethod::config_supplied ? "config" : "powerlaw";
      j["degenerate"] = est.degenerate;
      if (est.fit_residual) j["fit_residual"] = *est.fit_residual;
      std::cout << j.dump(2) << '\n';
      return 0;
    });
  }

  if (synth->parsed()) {
    return run_guarded([&] {
      ipl::KeyValueConfig raw = load_config(synth_opts);
      ipl::SynthConfig sc;
      sc.n_users = static_cast<int>(raw.get_int("synth.users", sc.n_users));
      sc.n_items = static_cast<int>(raw.get_int("synth.items", sc.n_items));
      sc.target_interactions = raw.get_int("synth.interactions", sc.target_interactions);
      sc.q_star_min = static_cast<int>(raw.get_int("synth.qstar_min", sc.q_star_min));
      sc.q_star_cap = static_cast<int>(raw.get_int("synth.qstar_cap", sc.q_star_cap));
      sc.popularity_exponent = raw.get_double("synth.pop_exponent", sc.popularity_exponent);
      sc.gamma = raw.get_double("synth.gamma", sc.gamma);
      sc.exposure_noise = raw.get_double("synth.exposure_noise", sc.exposure_noise);
      sc.seed = static_cast<std::uint64_t>(raw.get_int("synth.seed", 7));
      ipl::SynthData data = ipl::generate_biased_log(sc);
      std::string dir = resolve_out(synth_opts, "synth");
      std::filesystem::create_directories(dir);
      std::ofstream out(dir + "/interactions.tsv");
      for (auto [u, i] : data.log.pairs()) out << "u" << u << '\t' << "i" << i << '\n';
      std::cout << "wrote " << dir << "/interactions.tsv (" << data.log.n_interactions()
                << " interactions, " << data.log.n_users() << " users, " << data.log.n_items()
                << " items, planted gamma " << data.gamma << ")\n";
      return 0;
    });
  }

  return 0;
}
