#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "adagauss/cli.hpp"

using namespace adagauss;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path("cli_test_out") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Tiny synthetic config that runs in well under a second.
std::string tiny_config(const std::string& out_dir, const std::string& seeds,
                        const std::string& extra_ablation = "",
                        const std::string& extra_run = "") {
  return std::string("[dataset]\n") +
         "kind = synthetic\n"
         "input_dim = 6\n"
         "classes_per_task = 3\n"
         "num_tasks = 2\n"
         "samples_per_class = 30\n"
         "cluster_spread = 1.0\n"
         "cluster_separation = 2.0\n"
         "anisotropy = 1.5\n"
         "stream_seed = 3\n"
         "\n[hyperparams]\n"
         "latent_dim = 4\n"
         "projector_hidden_factor = 2\n"
         "hidden_dims = 16\n"
         "epochs = 4\n"
         "batch_size = 24\n"
         "lr = 0.01\n"
         "lr_decay_epochs = 2,3\n"
         "adapter_epochs = 4\n"
         "adapter_lr = 0.01\n"
         "adapter_lr_decay_epochs = 2,3\n"
         "adapt_samples = 150\n"
         "\n[ablation]\n" +
         extra_ablation +
         "\n[run]\n"
         "seeds = " + seeds + "\n"
         "out_dir = " + out_dir + "\n" +
         extra_run;
}

}  // namespace

TEST_CASE("cmd_run writes the three artifacts and exits zero") {
  const fs::path dir = fresh_dir("run_basic");
  const fs::path cfg = dir / "config.ini";
  spit(cfg, tiny_config((dir / "out").string(), "1"));
  CHECK(cmd_run(cfg.string()) == 0);
  CHECK(fs::exists(dir / "out" / "metrics.csv"));
  CHECK(fs::exists(dir / "out" / "report.json"));
  CHECK(fs::exists(dir / "out" / "resolved_config.ini"));

  const std::string metrics = slurp(dir / "out" / "metrics.csv");
  CHECK(metrics.rfind("seed,task,phase,metric,value\n", 0) == 0);
  CHECK(metrics.find("a_last") != std::string::npos);
  CHECK(metrics.find("acc_task_01") != std::string::npos);
}

TEST_CASE("unknown keys are rejected, naming the key, with exit code 2") {
  const fs::path dir = fresh_dir("run_badkey");
  const fs::path cfg = dir / "config.ini";
  spit(cfg, tiny_config((dir / "out").string(), "1") + "\n[hyperparams2]\n");
  CHECK(cmd_run(cfg.string()) == 2);

  try {
    parse_run_config_text("[dataset]\nkind = synthetic\n[hyperparams]\nlamda = 10\n", "inline");
    FAIL("expected InvalidConfig");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInvalidConfig);
    CHECK(std::string(e.what()).find("lamda") != std::string::npos);
  }
}

TEST_CASE("two seeds produce per-seed results plus mean and stddev") {
  const fs::path dir = fresh_dir("run_two_seeds");
  const fs::path cfg = dir / "config.ini";
  spit(cfg, tiny_config((dir / "out").string(), "1,2"));
  REQUIRE(cmd_run(cfg.string()) == 0);
  const auto report = nlohmann::json::parse(slurp(dir / "out" / "report.json"));
  REQUIRE(report.at("per_seed").size() == 2);
  CHECK(report.at("per_seed")[0].at("seed") == 1);
  CHECK(report.at("per_seed")[1].at("seed") == 2);
  CHECK(report.at("aggregate").at("a_last").contains("mean"));
  CHECK(report.at("aggregate").at("a_last").contains("stddev"));
  const double m = report.at("aggregate").at("a_last").at("mean");
  const double a = report.at("per_seed")[0].at("a_last");
  const double b = report.at("per_seed")[1].at("a_last");
  CHECK(m == doctest::Approx(0.5 * (a + b)));
}

TEST_CASE("the resolved config reproduces metrics.csv byte for byte") {
  const fs::path dir = fresh_dir("run_resolved");
  const fs::path cfg = dir / "config.ini";
  spit(cfg, tiny_config((dir / "out1").string(), "1,2"));
  REQUIRE(cmd_run(cfg.string()) == 0);

  // Re-feed the resolved config, only changing the output directory.
  RunConfig resolved = parse_run_config((dir / "out1" / "resolved_config.ini").string());
  resolved.out_dir = (dir / "out2").string();
  spit(dir / "resolved2.ini", resolved_config_text(resolved));
  REQUIRE(cmd_run((dir / "resolved2.ini").string()) == 0);

  CHECK(slurp(dir / "out1" / "metrics.csv") == slurp(dir / "out2" / "metrics.csv"));
}

TEST_CASE("artifacts are never overwritten without the flag") {
  const fs::path dir = fresh_dir("run_overwrite");
  const fs::path cfg = dir / "config.ini";
  spit(cfg, tiny_config((dir / "out").string(), "1"));
  REQUIRE(cmd_run(cfg.string()) == 0);
  CHECK(cmd_run(cfg.string()) == 1);  // refuses to clobber
  CommandOptions options;
  options.overwrite = true;
  CHECK(cmd_run(cfg.string(), options) == 0);
}

TEST_CASE("cmd_ablate executes the Cartesian grid in deterministic order") {
  const fs::path dir = fresh_dir("ablate_grid");
  const fs::path cfg = dir / "config.ini";
  spit(cfg, tiny_config((dir / "out").string(), "1",
                        "classifier = bayes_full,nmc\nadapt = none,full\n"));
  REQUIRE(cmd_ablate(cfg.string()) == 0);
  const std::string csv = slurp(dir / "out" / "ablation.csv");
  std::vector<std::string> lines;
  std::stringstream ss(csv);
  std::string line;
  while (std::getline(ss, line)) lines.push_back(line);
  REQUIRE(lines.size() == 5);  // header + 2x2 grid
  CHECK(lines[0] ==
        "cell,classifier,adapt,anticollapse,shrink_gamma,distillation,"
        "a_last_mean,a_last_std,a_inc_mean,a_inc_std");
  CHECK(lines[1].rfind("0,bayes_full,none,", 0) == 0);
  CHECK(lines[2].rfind("1,bayes_full,full,", 0) == 0);
  CHECK(lines[3].rfind("2,nmc,none,", 0) == 0);
  CHECK(lines[4].rfind("3,nmc,full,", 0) == 0);
}

TEST_CASE("an eight-cell grid covers the classifier / adaptation / regularizer axes") {
  const fs::path dir = fresh_dir("ablate_eight");
  const fs::path cfg = dir / "config.ini";
  spit(cfg, tiny_config((dir / "out").string(), "1",
                        "classifier = nmc,bayes_full\n"
                        "adapt = none,full\n"
                        "anticollapse = on,off\n"
                        "shrink_gamma = 0.5\n"));
  REQUIRE(cmd_ablate(cfg.string()) == 0);
  const std::string csv = slurp(dir / "out" / "ablation.csv");
  int rows = -1;  // discount header
  std::stringstream ss(csv);
  std::string line;
  while (std::getline(ss, line)) ++rows;
  CHECK(rows == 8);
}

TEST_CASE("an empty grid axis is rejected with exit 2") {
  const fs::path dir = fresh_dir("ablate_empty");
  const fs::path cfg = dir / "config.ini";
  spit(cfg, tiny_config((dir / "out").string(), "1", "classifier = \n"));
  CHECK(cmd_ablate(cfg.string()) == 2);
}

TEST_CASE("cmd_diagnose emits idempotent CSV series from checkpoints") {
  const fs::path dir = fresh_dir("diagnose");
  const fs::path cfg = dir / "config.ini";
  spit(cfg, tiny_config((dir / "out").string(), "1", "", "checkpoints = true\n"));
  REQUIRE(cmd_run(cfg.string()) == 0);
  REQUIRE(cmd_diagnose((dir / "out").string()) == 0);

  const fs::path diag = dir / "out" / "diagnostics";
  for (const char* name : {"representation_strength.csv", "cov_rank.csv", "memory_fidelity.csv",
                           "recency_probe.csv", "eigen_spectrum.csv", "class_shift.csv"}) {
    CHECK(fs::exists(diag / name));
  }

  // The rank series has one block per task; spot-check the row count.
  std::stringstream ss(slurp(diag / "cov_rank.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(ss, line)) ++rows;
  CHECK(rows == 1 + 2);  // after task 1: origin 1; after task 2: origins 1, 2

  const std::string first = slurp(diag / "memory_fidelity.csv");
  REQUIRE(cmd_diagnose((dir / "out").string()) == 0);
  CHECK(slurp(diag / "memory_fidelity.csv") == first);
}

TEST_CASE("cmd_diagnose rejects tampered checkpoints") {
  const fs::path dir = fresh_dir("diagnose_tamper");
  const fs::path cfg = dir / "config.ini";
  spit(cfg, tiny_config((dir / "out").string(), "1", "", "checkpoints = true\n"));
  REQUIRE(cmd_run(cfg.string()) == 0);
  spit(dir / "out" / "seed_1" / "ckpt_task1.agnet", "JUNKMAGICjunkjunkjunkjunk");
  CHECK(cmd_diagnose((dir / "out").string()) != 0);
}

TEST_CASE("cmd_diagnose requires a checkpointed run") {
  const fs::path dir = fresh_dir("diagnose_missing");
  const fs::path cfg = dir / "config.ini";
  spit(cfg, tiny_config((dir / "out").string(), "1"));
  REQUIRE(cmd_run(cfg.string()) == 0);
  CHECK(cmd_diagnose((dir / "out").string()) == 1);
}

TEST_CASE("metric rows print 17 significant digits sorted by seed, task, metric") {
  std::vector<MetricRow> rows;
  rows.push_back({2, 1, "eval", "zz", 0.1});
  rows.push_back({1, 2, "eval", "aa", 1.0 / 3.0});
  rows.push_back({1, 1, "train", "bb", 2.0});
  rows.push_back({1, 1, "eval", "aa", 3.0});
  const std::string csv = metrics_csv_text(rows);
  const std::string want =
      "seed,task,phase,metric,value\n"
      "1,1,eval,aa,3\n"
      "1,1,train,bb,2\n"
      "1,2,eval,aa,0.33333333333333331\n"
      "2,1,eval,zz,0.10000000000000001\n";
  CHECK(csv == want);
}

TEST_CASE("the worker pool respects ADAGAUSS_THREADS and finishes all jobs") {
  setenv("ADAGAUSS_THREADS", "2", 1);
  std::vector<int> done(16, 0);
  run_jobs(16, [&](size_t i) { done[i] = static_cast<int>(i) + 1; });
  for (size_t i = 0; i < done.size(); ++i) CHECK(done[i] == static_cast<int>(i) + 1);
  unsetenv("ADAGAUSS_THREADS");
}
