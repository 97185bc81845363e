#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ipl/config.hpp"
#include "ipl/dataset.hpp"
#include "ipl/estimator.hpp"
#include "ipl/eval.hpp"
#include "ipl/model.hpp"
#include "ipl/theory.hpp"
#include "ipl/train.hpp"

namespace ipl {

/// Error with the pipeline stage it surfaced in ("config", "parse",
/// "split", "gamma", "train", "rank", "metrics", "write").
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message)
      : std::runtime_error("[stage:" + stage + "] " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Typed view of an experiment's KeyValueConfig with every default
/// materialized. Construction validates cheap invariants (ratio sums,
/// positive dimensions) before any data is touched.
struct ResolvedExperiment {
  // dataset
  std::string dataset_path;
  std::string dataset_name;
  std::string split_dir;  // load a saved split instead of parsing
  ParseFormat format;
  // split
  SplitRatios ratios;
  std::uint64_t split_seed = 13;
  // gamma
  GammaMethod gamma_method = GammaMethod::config_supplied;
  GammaConfig gamma_config;
  // model
  ModelKind kind = ModelKind::mf;
  int dim = 64;
  int n_layers = 3;
  double init_scale = -1.0;  // <0: 0.1/sqrt(d)
  std::uint64_t model_seed = 1;
  // training
  TrainConfig train;
  // metrics
  int k = 20;
  int mi_bins = 10;
  double snips_eta = std::numeric_limits<double>::quiet_NaN();  // NaN: gamma/2
  bool qstar_from_full_log = false;
  // sweep
  int sweep_points = 20;
  double sweep_min = 1e-6;
  double sweep_max = 1e-2;
  // execution
  bool parallel = false;
  int n_threads = 4;
  std::string kernels = "auto";  // auto | scalar | avx2

  static ResolvedExperiment from_config(const KeyValueConfig& config);
  /// Full round-trippable key=value form (the manifest body).
  KeyValueConfig to_config() const;
};

struct ExperimentResult {
  std::string run_dir;
  MetricsReport metrics;
  GammaEstimate gamma;
  std::vector<LossBreakdown> trace;
};

/// parse -> split -> gamma -> train -> top-k -> metrics, writing
/// manifest.cfg, loss_trace.csv, checkpoint.bin, recommendations.tsv and
/// metrics.json into run_dir. On failure a FAILED.txt marker is left and
/// the stage-tagged error is rethrown.
ExperimentResult run_experiment(const ResolvedExperiment& config, const std::string& run_dir);

struct SweepRow {
  double lambda_f = 0.0;
  MetricsReport metrics;
  std::string status = "ok";  // or "error: ..."
};

struct SweepResult {
  std::vector<SweepRow> rows;  // baseline (lambda_f = 0) first
  std::string csv_path;
};

/// Baseline plus one run per grid point (log-spaced lambda_f values,
/// ascending). Point failures become error rows; the sweep continues.
SweepResult sweep_lambda(const ResolvedExperiment& config, const std::string& out_dir);

struct PropositionRow {
  double c = 0.0;
  int k = 0;
  double beta = 0.0;
  double q = 1.0;
  double bound = 1.0;
  bool tail_valid = false;
  bool vacuous = false;
};

struct PropositionReport {
  theory::ParetoFit fit;
  std::vector<PropositionRow> rows;
  double threshold = 1e-10;
  std::string verdict;  // PASS | FAIL | INCONCLUSIVE (per first row)
  std::size_t n_users = 0;
};

/// Fits beta on the training-split user degrees (or a degree file) and
/// evaluates the condition-1 bound over a (c, k) grid.
PropositionReport check_proposition(const ResolvedExperiment& config,
                                    const std::string& degrees_file,
                                    const std::vector<double>& c_values,
                                    const std::vector<int>& k_values, double x_min,
                                    double threshold);

std::string proposition_csv(const PropositionReport& report);

/// Applies config.kernels; returns the active ISA name.
std::string apply_kernel_choice(const std::string& choice);

}  // namespace ipl
