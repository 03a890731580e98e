#pragma once

#include <string>
#include <vector>

#include "adagauss/config.hpp"
#include "adagauss/continual_runner.hpp"

namespace adagauss {

// Command implementations behind the `adagauss` binary; kept in the library
// so tests can drive them directly. All artifact writes happen after every
// worker finishes, in deterministic order. Exit codes: 0 success, 2 invalid
// config, 1 runtime failure.

struct CommandOptions {
  std::string out_dir_override;  // --out
  bool overwrite = false;        // --overwrite
  bool oracle_diagnostics = false;  // --oracle-diagnostics
};

int cmd_run(const std::string& config_path, const CommandOptions& options = {});
int cmd_ablate(const std::string& config_path, const CommandOptions& options = {});
int cmd_diagnose(const std::string& artifact_dir);

// Records the order of training-split reads and counts EFCIL violations:
// any train read of a task below the highest task already trained on.
class EfcilAudit {
 public:
  explicit EfcilAudit(TaskStream& stream);

  int violations() const { return violations_; }
  const std::vector<int>& train_access_sequence() const { return sequence_; }

 private:
  int max_train_task_ = -1;
  int violations_ = 0;
  std::vector<int> sequence_;
};

struct MetricRow {
  uint64_t seed = 0;
  int task = 0;
  std::string phase;
  std::string metric;
  double value = 0.0;
};

// Deterministic metric rows for one finished run (excludes wall times, which
// live in report.json so metrics.csv stays byte-reproducible).
std::vector<MetricRow> metric_rows(uint64_t seed, const RunReport& report);

// Fixed schema `seed,task,phase,metric,value`, 17 significant digits, sorted
// by (seed, task, metric).
std::string metrics_csv_text(std::vector<MetricRow> rows);

// Bounded worker pool sized by ADAGAUSS_THREADS (default: hardware
// concurrency), one job per index; the first failing job's error is rethrown
// after all workers stop.
void run_jobs(size_t job_count, const std::function<void(size_t)>& job);

}  // namespace adagauss
