#pragma once

#include <optional>
#include <string>
#include <vector>

#include "adagauss/classifier.hpp"
#include "adagauss/data_stream.hpp"
#include "adagauss/gaussian_memory.hpp"
#include "adagauss/losses.hpp"
#include "adagauss/networks.hpp"

namespace adagauss {

struct LrSchedule {
  double initial = 0.1;
  std::vector<int> decay_epochs;  // epochs at which the rate drops
  double decay_factor = 0.1;

  double rate_at(int epoch) const;
};

struct HyperParams {
  double lambda = 10.0;
  double beta = 1.0;
  int adapt_samples = 10000;          // N: draws per class during adaptation
  int latent_dim = 8;                 // S
  int projector_hidden_factor = 32;   // d
  double bottleneck_init_scale = 8.0;
  bool identity_init_projector = false;
  bool identity_init_adapter = true;
  double projector_init_scale = 1.0;
  std::vector<int> hidden_dims = {64, 64};
  int epochs = 200;
  int batch_size = 64;
  LrSchedule lr{0.1, {60, 120, 180}, 0.1};
  int adapter_epochs = 100;
  LrSchedule adapter_lr{0.01, {45, 90}, 0.1};
  double weight_decay = 0.0005;
  // The adapter's own decay; with the residual architecture it biases the
  // transport toward the identity wherever the data says nothing else.
  double adapter_weight_decay = 0.002;
  double momentum = 0.9;
  // Joint gradient-norm ceiling per step; the MLP has no normalization
  // layers, so this bounds the rare spike when a batch covariance grazes
  // singularity. 0 disables.
  double clip_grad_norm = 10.0;
  Reduction reduction = Reduction::kMean;
  double logit_temperature = 2.0;
  uint64_t seed = 1;
};

struct AblationConfig {
  ClassifierKind classifier = ClassifierKind::kBayesFull;
  AdaptMode adapt = AdaptMode::kFull;
  bool anticollapse = true;
  // Added to covariance diagonals at estimation time. With anticollapse off
  // and gamma zero the first Bayes evaluation fails with NotPositiveDefinite;
  // that crash is the documented behavior, not a config error.
  double shrink_gamma = 0.0;
  DistillationMode distillation = DistillationMode::kProjected;
  bool include_logdet = true;
  int head_samples_per_class = 200;  // linear-head variant training set size
  int head_epochs = 20;
};

struct PhaseTimes {
  double train_s = 0.0;
  double adapter_s = 0.0;
  double adaptation_s = 0.0;
  double eval_s = 0.0;
};

struct TaskTrainStats {
  std::vector<double> epoch_total_loss;  // per-epoch mean of the total loss
  double final_epoch_ce = 0.0;
  double final_epoch_ac = 0.0;           // running mean of L_AC over the last epoch
  double final_epoch_kd = 0.0;
  double final_epoch_total = 0.0;
  double adapter_final_mse = 0.0;        // adapter MSE term, last epoch
  int jitter_events = 0;
  bool adapter_at_init = false;          // zero adapter epochs configured
};

struct FidelityRow {
  int after_task = 0;   // 1-based task after which this was measured
  int origin_task = 0;
  double mean_l2 = 0.0;
  double cov_l2 = 0.0;
  double sym_kl = 0.0;
};

struct RankRow {
  int after_task = 0;
  int origin_task = 0;
  double mean_rank = 0.0;
  double mean_inverse_norm = 0.0;  // +inf marks a singular entry without shrink
};

struct RunReport {
  Matrix acc_matrix;  // acc_matrix(t, s): accuracy on task s's test set after task t
  double a_last = 0.0;
  double a_inc = 0.0;
  int jitter_events = 0;
  int efcil_train_access_violations = 0;
  std::vector<PhaseTimes> times;          // per task
  std::vector<TaskTrainStats> task_stats;  // per task
  // Filled only when oracle diagnostics are enabled.
  std::vector<FidelityRow> fidelity;
  std::vector<RankRow> ranks;
  std::vector<int> representation_strength;         // per task
  std::vector<std::pair<int, double>> class_shifts;  // (class, ‖Δμ‖) per adaptation
};

double recompute_a_last(const Matrix& acc_matrix);
double recompute_a_inc(const Matrix& acc_matrix);

struct RunOptions {
  // Enables the evaluation-time oracle that re-estimates old classes from
  // held-out data through the current extractor (memory fidelity, ranks,
  // representation strength). Never feeds training.
  bool oracle_diagnostics = false;
  // When non-empty, writes ckpt_task<t>.agnet and memory_task<t>.agmem here.
  std::string checkpoint_dir;
};

// Executes the full per-task protocol: task 1 trains the extractor with
// CE + anti-collapse; later tasks add distillation, then train the adapter on
// current data only and transport every old Gaussian through it; evaluation
// after each task is task-agnostic over all seen classes.
RunReport run(const TaskStream& stream, const HyperParams& hp, const AblationConfig& ab,
              const RunOptions& options = {});

// Per-task extractor training; exposed for tests. `prev_frozen` must be the
// frozen previous extractor for tasks >= 2 with distillation enabled.
TaskTrainStats train_task(Mlp& extractor, const Mlp* prev_frozen, Mlp* projector, Mlp& head,
                          const std::vector<Mlp>& old_heads, const SampleSet& train,
                          const std::vector<int>& task_classes, int task_number,
                          const HyperParams& hp, const AblationConfig& ab, SeededRng& rng);

// Adapter training over current-task data with both extractors frozen.
// Returns the final-epoch MSE term.
double train_adapter(Mlp& adapter, const Mlp& prev_frozen, const Mlp& curr_frozen,
                     const SampleSet& train, const HyperParams& hp, const AblationConfig& ab,
                     SeededRng& rng, TaskTrainStats* stats = nullptr);

// Accuracy on each task's test split (tasks 0..upto_task inclusive), with
// classification over all classes in memory.
std::vector<double> evaluate(const Mlp& extractor, const GaussianMemory& memory,
                             const TaskStream& stream, int upto_task, const AblationConfig& ab,
                             SeededRng& rng);

}  // namespace adagauss
