#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ipl/experiment.hpp"

using namespace ipl;
namespace fs = std::filesystem;

namespace {

const std::string kToy = std::string(IPL_DATA_DIR) + "/toy_interactions.tsv";

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

KeyValueConfig toy_config(double lambda_f) {
  KeyValueConfig cfg;
  cfg.set("dataset.path", kToy);
  cfg.set("gamma.value", "1.4");
  cfg.set("model.dim", "8");
  cfg.set("train.epochs", "5");
  cfg.set("train.batch_size", "64");
  cfg.set("train.lr", "0.1");
  cfg.set("train.lambda_f", std::to_string(lambda_f));
  cfg.set("metrics.k", "5");
  cfg.set("metrics.mi_bins", "4");
  return cfg;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("key-value config: parse, overrides, round-trip, diagnostics") {
  KeyValueConfig cfg = KeyValueConfig::from_string(
      "train.epochs = 3   # inline comment\n"
      "# full comment\n"
      "dataset.path = some/file.tsv\n");
  CHECK(cfg.get_int("train.epochs", 0) == 3);
  CHECK(cfg.get_string("dataset.path", "") == "some/file.tsv");

  cfg.set_assignment("train.epochs=9");
  CHECK(cfg.get_int("train.epochs", 0) == 9);  // override wins

  KeyValueConfig reparsed = KeyValueConfig::from_string(cfg.serialize());
  CHECK(reparsed.entries() == cfg.entries());

  CHECK_THROWS_AS(KeyValueConfig::from_string("not an assignment\n"), std::runtime_error);
  CHECK_THROWS_AS(cfg.get_int("dataset.path", 0), std::runtime_error);
}

TEST_CASE("config validation fires before any data is touched") {
  KeyValueConfig cfg;
  cfg.set("dataset.path", "/definitely/not/here.tsv");
  cfg.set("split.ratios", "0.7,0.1,0.1");  // sums to 0.9
  try {
    ResolvedExperiment::from_config(cfg);
    FAIL("expected a config-stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "config");
    CHECK(std::string(e.what()).find("ratios") != std::string::npos);
  }

  KeyValueConfig unknown = toy_config(0.0);
  unknown.set("train.leaning_rate", "0.1");  // typo must be rejected
  CHECK_THROWS_AS(ResolvedExperiment::from_config(unknown), StageError);
}

TEST_CASE("toy run completes with positive recall and full artifacts") {
  TempDir dir("ipl_exp_toy");
  ResolvedExperiment cfg = ResolvedExperiment::from_config(toy_config(0.0));
  ExperimentResult result = run_experiment(cfg, dir.path.string());

  CHECK(result.metrics.recall_at_k > 0.0);
  CHECK(result.metrics.n_users_evaluated > 0);
  CHECK(fs::exists(dir.path / "manifest.cfg"));
  CHECK(fs::exists(dir.path / "metrics.json"));
  CHECK(fs::exists(dir.path / "loss_trace.csv"));
  CHECK(fs::exists(dir.path / "checkpoint.bin"));
  CHECK(fs::exists(dir.path / "recommendations.tsv"));
  CHECK_FALSE(fs::exists(dir.path / "FAILED.txt"));

  const std::string trace = slurp((dir.path / "loss_trace.csv").string());
  CHECK(trace.rfind("epoch,l_bpr,l_ipl,l_total,val_recall", 0) == 0);
}

TEST_CASE("identical config and seed reproduce metrics byte for byte") {
  TempDir a("ipl_exp_det_a"), b("ipl_exp_det_b");
  ResolvedExperiment cfg = ResolvedExperiment::from_config(toy_config(1e-3));
  run_experiment(cfg, a.path.string());
  run_experiment(cfg, b.path.string());
  CHECK(slurp((a.path / "metrics.json").string()) == slurp((b.path / "metrics.json").string()));
  CHECK(slurp((a.path / "manifest.cfg").string()) == slurp((b.path / "manifest.cfg").string()));
}

TEST_CASE("a run reproduces bit-identically from its own manifest") {
  TempDir a("ipl_exp_man_a"), b("ipl_exp_man_b");
  ResolvedExperiment cfg = ResolvedExperiment::from_config(toy_config(1e-4));
  run_experiment(cfg, a.path.string());

  KeyValueConfig manifest = KeyValueConfig::from_file((a.path / "manifest.cfg").string());
  ResolvedExperiment replay = ResolvedExperiment::from_config(manifest);
  run_experiment(replay, b.path.string());
  CHECK(slurp((a.path / "metrics.json").string()) == slurp((b.path / "metrics.json").string()));
}

TEST_CASE("parse-stage failures carry the stage tag and leave a marker") {
  TempDir dir("ipl_exp_fail");
  KeyValueConfig raw = toy_config(0.0);
  raw.set("dataset.path", "/nonexistent/data.tsv");
  ResolvedExperiment cfg = ResolvedExperiment::from_config(raw);
  try {
    run_experiment(cfg, dir.path.string());
    FAIL("expected a parse-stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "parse");
    CHECK(std::string(e.what()).find("[stage:parse]") != std::string::npos);
  }
}

TEST_CASE("sweep emits baseline plus grid rows in a plot-ready csv") {
  TempDir dir("ipl_exp_sweep");
  KeyValueConfig raw = toy_config(0.0);
  raw.set("sweep.points", "3");
  raw.set("sweep.min", "1e-5");
  raw.set("sweep.max", "1e-3");
  raw.set("train.epochs", "2");
  ResolvedExperiment cfg = ResolvedExperiment::from_config(raw);
  SweepResult result = sweep_lambda(cfg, dir.path.string());

  REQUIRE(result.rows.size() == 4);  // baseline + 3 points
  CHECK(result.rows[0].lambda_f == 0.0);
  CHECK(result.rows[1].lambda_f == doctest::Approx(1e-5));
  CHECK(result.rows[3].lambda_f == doctest::Approx(1e-3));
  // constant ratio between consecutive grid points
  const double ratio = result.rows[2].lambda_f / result.rows[1].lambda_f;
  CHECK(result.rows[3].lambda_f / result.rows[2].lambda_f == doctest::Approx(ratio));
  for (const auto& row : result.rows) CHECK(row.status == "ok");

  const std::string csv = slurp(result.csv_path);
  CHECK(csv.rfind("lambda_f,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);  // header + 4 rows
}

TEST_CASE("sweep of size one still produces baseline plus one point") {
  TempDir dir("ipl_exp_sweep1");
  KeyValueConfig raw = toy_config(0.0);
  raw.set("sweep.points", "1");
  raw.set("train.epochs", "1");
  ResolvedExperiment cfg = ResolvedExperiment::from_config(raw);
  SweepResult result = sweep_lambda(cfg, dir.path.string());
  REQUIRE(result.rows.size() == 2);
  CHECK(result.rows[0].lambda_f == 0.0);
  CHECK(result.rows[1].lambda_f == doctest::Approx(1e-6));
}

TEST_CASE("default sweep grid spans 1e-6 to 1e-2 in 20 points") {
  ResolvedExperiment cfg = ResolvedExperiment::from_config(toy_config(0.0));
  CHECK(cfg.sweep_points == 20);
  CHECK(cfg.sweep_min == doctest::Approx(1e-6));
  CHECK(cfg.sweep_max == doctest::Approx(1e-2));
}

TEST_CASE("check_proposition consumes degree files and reports flags") {
  const std::string degrees = std::string(IPL_DATA_DIR) + "/ml1m_like_train_degrees.csv";
  ResolvedExperiment cfg;  // unused when a degrees file is given
  PropositionReport report = check_proposition(cfg, degrees, {0.99}, {20}, 1.0, 1e-10);
  CHECK(report.n_users == 6040);
  CHECK(report.fit.beta > 1.0);
  CHECK(report.fit.beta < 2.0);
  REQUIRE(report.rows.size() == 1);
  CHECK_FALSE(report.rows[0].tail_valid);  // realistic degrees: p >> 1-c
  CHECK(report.rows[0].vacuous);
  CHECK(report.verdict == "FAIL");
  const std::string csv = proposition_csv(report);
  CHECK(csv.rfind("c,k,beta,q,bound,tail_valid", 0) == 0);
}

TEST_CASE("parallel evaluation matches the sequential run exactly") {
  TempDir a("ipl_exp_par_a"), b("ipl_exp_par_b");
  KeyValueConfig raw = toy_config(0.0);
  ResolvedExperiment seq = ResolvedExperiment::from_config(raw);
  raw.set("run.parallel", "true");
  raw.set("run.threads", "4");
  ResolvedExperiment par = ResolvedExperiment::from_config(raw);
  run_experiment(seq, a.path.string());
  run_experiment(par, b.path.string());
  CHECK(slurp((a.path / "metrics.json").string()) == slurp((b.path / "metrics.json").string()));
}
