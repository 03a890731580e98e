#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "adagauss/linalg.hpp"

namespace adagauss {

// A labeled batch: one input row per sample, with global class labels.
struct SampleSet {
  Matrix inputs;
  std::vector<int> labels;

  int size() const { return inputs.rows(); }
  int dim() const { return inputs.cols(); }
  // Rows of the samples carrying `label`.
  Matrix rows_with_label(int label) const;
  std::vector<int> distinct_labels() const;
};

struct TaskData {
  SampleSet train;
  SampleSet test;
  std::vector<int> classes;  // global class ids, ascending
};

struct GroundTruthGaussian {
  Vector mean;
  Matrix cov;
};

// Ordered disjoint-class tasks. Access goes through task()/train_of()/
// test_of() so an audit hook can observe every read; the EFCIL audit checks
// that train reads never return to a finished task.
class TaskStream {
 public:
  using AccessHook = std::function<void(int task_index, bool is_train)>;

  TaskStream() = default;
  explicit TaskStream(std::vector<TaskData> tasks);

  int num_tasks() const { return static_cast<int>(tasks_.size()); }
  int input_dim() const;
  int total_classes() const;
  const std::vector<int>& classes_of(int task_index) const;

  const SampleSet& train_of(int task_index) const;
  const SampleSet& test_of(int task_index) const;

  void set_access_hook(AccessHook hook) { hook_ = std::move(hook); }

  // Present only for synthetic streams: the generating input-space Gaussians.
  const std::map<int, GroundTruthGaussian>& synthetic_truth() const { return truth_; }
  void set_synthetic_truth(std::map<int, GroundTruthGaussian> truth) { truth_ = std::move(truth); }

 private:
  const TaskData& task_checked(int task_index) const;

  std::vector<TaskData> tasks_;
  std::map<int, GroundTruthGaussian> truth_;
  AccessHook hook_;
};

struct SyntheticSpec {
  int input_dim = 16;
  int classes_per_task = 4;
  int num_tasks = 5;
  int samples_per_class = 200;   // per class, split 80/20 into train/test
  double cluster_spread = 1.0;   // largest per-class standard deviation
  double cluster_separation = 6.0;
  double anisotropy = 1.0;       // ratio of largest to smallest cluster axis
  uint64_t seed = 1;
};

void validate(const SyntheticSpec& spec);

// Anisotropic Gaussian clusters with randomly oriented axes; class means are
// placed by seeded rejection sampling until all pairwise distances reach
// cluster_separation (PlacementFailure after 10^4 attempts per class).
// Deterministic in the spec seed; the generating Gaussians are retained on
// the stream for diagnostics.
TaskStream generate_synthetic(const SyntheticSpec& spec);

// Rectangular numeric CSV with a header row. Every non-label column becomes a
// feature; the label column may hold arbitrary strings, mapped to dense class
// ids in first-appearance order.
SampleSet load_csv_dataset(const std::string& path, const std::string& label_column);

enum class FirstTaskFraction { kEqual, kHalf };

// Shuffles classes by seed, partitions them into T tasks (remainder classes
// to the earliest tasks; half mode gives ⌈C/2⌉ classes to task 1), splits
// each class 80/20 into train/test, and z-scores columns with statistics
// from the union of train splits (σ floor 1e-12).
TaskStream split_incremental(const SampleSet& samples, int num_tasks,
                             FirstTaskFraction first, uint64_t seed);

// Column statistics used by the z-score step; exposed for tests.
struct ColumnStats {
  Vector mean;
  Vector scale;  // standard deviation floored at 1e-12
};
ColumnStats fit_column_stats(const Matrix& rows);
void apply_column_stats(Matrix& rows, const ColumnStats& stats);

}  // namespace adagauss
