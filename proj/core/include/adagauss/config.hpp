#pragma once

#include <string>
#include <vector>

#include "adagauss/continual_runner.hpp"
#include "adagauss/data_stream.hpp"

namespace adagauss {

// Declarative experiment description. The file format is flat `key = value`
// lines under [section] headers; unknown sections or keys are rejected with a
// message naming the offender, and every omitted key materializes its default
// in the resolved config.

enum class DatasetKind { kSynthetic, kCsv };

struct CsvDatasetConfig {
  std::string path;
  std::string label_column = "label";
  int num_tasks = 5;
  FirstTaskFraction first_task_fraction = FirstTaskFraction::kEqual;
  uint64_t split_seed = 1;
};

struct DatasetConfig {
  DatasetKind kind = DatasetKind::kSynthetic;
  SyntheticSpec synthetic;
  CsvDatasetConfig csv;
};

struct RunConfig {
  DatasetConfig dataset;
  HyperParams hyperparams;

  // Ablation axes; cmd_run requires singletons, cmd_ablate sweeps the
  // Cartesian product in declaration order (classifier-major).
  std::vector<ClassifierKind> classifiers = {ClassifierKind::kBayesFull};
  std::vector<AdaptMode> adapt_modes = {AdaptMode::kFull};
  std::vector<bool> anticollapse = {true};
  std::vector<double> shrink_gammas = {0.0};
  std::vector<DistillationMode> distillations = {DistillationMode::kProjected};
  bool include_logdet = true;
  int head_samples_per_class = 200;
  int head_epochs = 20;

  std::vector<uint64_t> seeds = {1};
  std::string out_dir = "out";
  bool oracle_diagnostics = false;
  bool checkpoints = false;

  size_t grid_size() const;
  AblationConfig ablation_cell(size_t index) const;
};

RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_text(const std::string& text, const std::string& origin);

// Canonical serialization with every default materialized; re-parsing the
// output yields an identical configuration.
std::string resolved_config_text(const RunConfig& config);

TaskStream build_stream(const DatasetConfig& dataset);

}  // namespace adagauss
