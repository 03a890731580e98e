#include "adagauss/data_stream.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace adagauss {

Matrix SampleSet::rows_with_label(int label) const {
  std::vector<int> rows;
  for (int r = 0; r < size(); ++r)
    if (labels[static_cast<size_t>(r)] == label) rows.push_back(r);
  Matrix out(static_cast<int>(rows.size()), dim());
  for (size_t i = 0; i < rows.size(); ++i)
    std::memcpy(out.row(static_cast<int>(i)), inputs.row(rows[i]),
                sizeof(double) * static_cast<size_t>(dim()));
  return out;
}

std::vector<int> SampleSet::distinct_labels() const {
  std::set<int> s(labels.begin(), labels.end());
  return std::vector<int>(s.begin(), s.end());
}

TaskStream::TaskStream(std::vector<TaskData> tasks) : tasks_(std::move(tasks)) {
  std::set<int> seen;
  for (const TaskData& t : tasks_) {
    for (int c : t.classes) {
      if (!seen.insert(c).second) {
        fail(ErrorCode::kInvalidConfig,
             "class " + std::to_string(c) + " appears in more than one task");
      }
    }
  }
}

int TaskStream::input_dim() const {
  return tasks_.empty() ? 0 : tasks_.front().train.dim();
}

int TaskStream::total_classes() const {
  int n = 0;
  for (const TaskData& t : tasks_) n += static_cast<int>(t.classes.size());
  return n;
}

const TaskData& TaskStream::task_checked(int task_index) const {
  if (task_index < 0 || task_index >= num_tasks()) {
    fail(ErrorCode::kEmptyTask, "task index " + std::to_string(task_index) + " out of range");
  }
  return tasks_[static_cast<size_t>(task_index)];
}

const std::vector<int>& TaskStream::classes_of(int task_index) const {
  return task_checked(task_index).classes;
}

const SampleSet& TaskStream::train_of(int task_index) const {
  const TaskData& t = task_checked(task_index);
  if (hook_) hook_(task_index, true);
  return t.train;
}

const SampleSet& TaskStream::test_of(int task_index) const {
  const TaskData& t = task_checked(task_index);
  if (hook_) hook_(task_index, false);
  return t.test;
}

void validate(const SyntheticSpec& spec) {
  if (spec.input_dim < 1 || spec.classes_per_task < 1 || spec.num_tasks < 1 ||
      spec.samples_per_class < 5) {
    fail(ErrorCode::kInvalidConfig, "synthetic spec counts must be positive (>=5 samples)");
  }
  if (!(spec.cluster_spread > 0.0)) {
    fail(ErrorCode::kInvalidConfig, "cluster_spread must be positive");
  }
  if (spec.cluster_separation < 0.0) {
    fail(ErrorCode::kInvalidConfig, "cluster_separation must be non-negative");
  }
  if (spec.anisotropy < 1.0) {
    fail(ErrorCode::kInvalidConfig, "anisotropy must be at least 1");
  }
}

TaskStream generate_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  const int num_classes = spec.classes_per_task * spec.num_tasks;
  SeededRng rng(spec.seed);

  // Means by rejection sampling inside a cube wide enough to hold all
  // clusters at the requested separation.
  const double box = spec.cluster_separation *
                     std::max(2.0, std::pow(static_cast<double>(num_classes),
                                            1.0 / spec.input_dim)) +
                     4.0 * spec.cluster_spread;
  std::vector<Vector> means;
  means.reserve(static_cast<size_t>(num_classes));
  int attempts_left = 10000;  // shared budget across all classes
  for (int c = 0; c < num_classes; ++c) {
    bool placed = false;
    while (attempts_left > 0) {
      --attempts_left;
      Vector candidate(spec.input_dim);
      for (int i = 0; i < spec.input_dim; ++i) candidate[i] = rng.uniform(-box, box);
      bool ok = true;
      for (const Vector& m : means) {
        if (norm(candidate - m) < spec.cluster_separation) {
          ok = false;
          break;
        }
      }
      if (ok) {
        means.push_back(std::move(candidate));
        placed = true;
        break;
      }
    }
    if (!placed) {
      fail(ErrorCode::kPlacementFailure,
           "separation infeasible: class mean " + std::to_string(c) +
               " unplaced after 10000 total attempts");
    }
  }

  // Per-class covariance: geometric eigenvalue ladder between spread² and
  // (spread/anisotropy)², randomly oriented.
  std::map<int, GroundTruthGaussian> truth;
  for (int c = 0; c < num_classes; ++c) {
    Vector eig(spec.input_dim);
    for (int i = 0; i < spec.input_dim; ++i) {
      const double f = spec.input_dim == 1 ? 0.0 : static_cast<double>(i) / (spec.input_dim - 1);
      const double sd = spec.cluster_spread * std::pow(1.0 / spec.anisotropy, f);
      eig[i] = sd * sd;
    }
    const Matrix q = random_orthogonal(spec.input_dim, rng);
    Matrix cov = matmul(q, matmul_nt(Matrix::diag(eig), q));
    cov = symmetrize(cov);
    truth[c] = GroundTruthGaussian{means[static_cast<size_t>(c)], std::move(cov)};
  }

  const int test_count = spec.samples_per_class / 5;
  const int train_count = spec.samples_per_class - test_count;

  std::vector<TaskData> tasks;
  for (int t = 0; t < spec.num_tasks; ++t) {
    TaskData task;
    const int first_class = t * spec.classes_per_task;
    task.train.inputs = Matrix(train_count * spec.classes_per_task, spec.input_dim);
    task.test.inputs = Matrix(test_count * spec.classes_per_task, spec.input_dim);
    for (int k = 0; k < spec.classes_per_task; ++k) {
      const int c = first_class + k;
      task.classes.push_back(c);
      const GroundTruthGaussian& g = truth.at(c);
      const Matrix draws = sample_gaussian(g.mean, g.cov, spec.samples_per_class, rng);
      for (int i = 0; i < train_count; ++i) {
        const int row = k * train_count + i;
        std::memcpy(task.train.inputs.row(row), draws.row(i),
                    sizeof(double) * static_cast<size_t>(spec.input_dim));
        task.train.labels.push_back(c);
      }
      for (int i = 0; i < test_count; ++i) {
        const int row = k * test_count + i;
        std::memcpy(task.test.inputs.row(row), draws.row(train_count + i),
                    sizeof(double) * static_cast<size_t>(spec.input_dim));
        task.test.labels.push_back(c);
      }
    }
    tasks.push_back(std::move(task));
  }

  // z-score everything with statistics from the union of train splits, and
  // carry the generating Gaussians into the same coordinates so they remain
  // the exact ground truth for the emitted samples.
  int train_rows = 0;
  for (const TaskData& t : tasks) train_rows += t.train.size();
  Matrix train_union(train_rows, spec.input_dim);
  int cursor = 0;
  for (const TaskData& t : tasks) {
    std::memcpy(train_union.row(cursor), t.train.inputs.data(),
                sizeof(double) * t.train.inputs.size());
    cursor += t.train.size();
  }
  const ColumnStats stats = fit_column_stats(train_union);
  for (TaskData& t : tasks) {
    apply_column_stats(t.train.inputs, stats);
    apply_column_stats(t.test.inputs, stats);
  }
  for (auto& [cls, g] : truth) {
    for (int i = 0; i < spec.input_dim; ++i) {
      g.mean[i] = (g.mean[i] - stats.mean[i]) / stats.scale[i];
      for (int j = 0; j < spec.input_dim; ++j) {
        g.cov(i, j) /= stats.scale[i] * stats.scale[j];
      }
    }
  }

  TaskStream stream(std::move(tasks));
  stream.set_synthetic_truth(std::move(truth));
  return stream;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // Trim surrounding whitespace.
    size_t b = field.find_first_not_of(" \t\r");
    size_t e = field.find_last_not_of(" \t\r");
    fields.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

}  // namespace

SampleSet load_csv_dataset(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kParseError, "cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::kEmptyDataset, "'" + path + "' is empty");
  const std::vector<std::string> header = split_csv_line(line);
  int label_col = -1;
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == label_column) label_col = static_cast<int>(i);
  }
  if (label_col < 0) {
    fail(ErrorCode::kMissingLabelColumn, "no column named '" + label_column + "' in header");
  }
  const int feature_dim = static_cast<int>(header.size()) - 1;
  if (feature_dim < 1) fail(ErrorCode::kParseError, "need at least one feature column");

  std::vector<double> values;
  std::vector<int> labels;
  std::map<std::string, int> label_ids;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      fail(ErrorCode::kParseError,
           "line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
               " fields, got " + std::to_string(fields.size()));
    }
    for (size_t i = 0; i < fields.size(); ++i) {
      if (static_cast<int>(i) == label_col) {
        auto it = label_ids.try_emplace(fields[i], static_cast<int>(label_ids.size())).first;
        labels.push_back(it->second);
      } else {
        try {
          size_t consumed = 0;
          const double v = std::stod(fields[i], &consumed);
          if (consumed != fields[i].size()) throw std::invalid_argument(fields[i]);
          values.push_back(v);
        } catch (const std::exception&) {
          fail(ErrorCode::kNonNumericFeature,
               "line " + std::to_string(line_no) + ": '" + fields[i] + "' is not numeric");
        }
      }
    }
  }
  if (labels.empty()) fail(ErrorCode::kEmptyDataset, "'" + path + "' has a header but no rows");

  SampleSet out;
  out.inputs = Matrix(static_cast<int>(labels.size()), feature_dim);
  std::memcpy(out.inputs.data(), values.data(), sizeof(double) * values.size());
  out.labels = std::move(labels);
  return out;
}

ColumnStats fit_column_stats(const Matrix& rows) {
  const int d = rows.cols();
  ColumnStats stats{Vector(d), Vector(d)};
  for (int c = 0; c < d; ++c) {
    double mean = 0.0;
    for (int r = 0; r < rows.rows(); ++r) mean += rows(r, c);
    mean /= std::max(1, rows.rows());
    double var = 0.0;
    for (int r = 0; r < rows.rows(); ++r) {
      const double dlt = rows(r, c) - mean;
      var += dlt * dlt;
    }
    var /= std::max(1, rows.rows() - 1);
    stats.mean[c] = mean;
    stats.scale[c] = std::max(std::sqrt(var), 1e-12);
  }
  return stats;
}

void apply_column_stats(Matrix& rows, const ColumnStats& stats) {
  for (int r = 0; r < rows.rows(); ++r)
    for (int c = 0; c < rows.cols(); ++c)
      rows(r, c) = (rows(r, c) - stats.mean[c]) / stats.scale[c];
}

TaskStream split_incremental(const SampleSet& samples, int num_tasks, FirstTaskFraction first,
                             uint64_t seed) {
  if (num_tasks < 1) fail(ErrorCode::kInvalidConfig, "num_tasks must be positive");
  const std::vector<int> classes = samples.distinct_labels();
  const int c = static_cast<int>(classes.size());
  if (c < num_tasks) {
    fail(ErrorCode::kTooFewClasses,
         std::to_string(c) + " classes cannot fill " + std::to_string(num_tasks) + " tasks");
  }

  SeededRng rng(seed);
  std::vector<int> order = classes;
  rng.shuffle(order);

  // Classes per task: either near-equal with the remainder on the earliest
  // tasks, or ⌈C/2⌉ on task 1 with the rest spread the same way.
  std::vector<int> sizes(static_cast<size_t>(num_tasks), 0);
  if (first == FirstTaskFraction::kHalf && num_tasks > 1) {
    sizes[0] = (c + 1) / 2;
    const int rest = c - sizes[0];
    const int tasks_left = num_tasks - 1;
    for (int t = 0; t < tasks_left; ++t) {
      sizes[static_cast<size_t>(t + 1)] = rest / tasks_left + (t < rest % tasks_left ? 1 : 0);
    }
  } else {
    for (int t = 0; t < num_tasks; ++t) {
      sizes[static_cast<size_t>(t)] = c / num_tasks + (t < c % num_tasks ? 1 : 0);
    }
  }
  for (int size : sizes) {
    if (size < 1) fail(ErrorCode::kTooFewClasses, "a task would receive zero classes");
  }

  std::vector<TaskData> tasks(static_cast<size_t>(num_tasks));
  int cursor = 0;
  std::vector<std::vector<int>> train_rows_per_task(static_cast<size_t>(num_tasks));
  std::vector<std::vector<int>> test_rows_per_task(static_cast<size_t>(num_tasks));

  for (int t = 0; t < num_tasks; ++t) {
    std::vector<int> task_classes(order.begin() + cursor, order.begin() + cursor + sizes[t]);
    cursor += sizes[static_cast<size_t>(t)];
    std::sort(task_classes.begin(), task_classes.end());
    tasks[static_cast<size_t>(t)].classes = task_classes;

    for (int cls : task_classes) {
      std::vector<int> rows;
      for (int r = 0; r < samples.size(); ++r)
        if (samples.labels[static_cast<size_t>(r)] == cls) rows.push_back(r);
      rng.shuffle(rows);
      const int test_count = static_cast<int>(rows.size()) / 5;
      for (size_t i = 0; i < rows.size(); ++i) {
        if (static_cast<int>(i) < test_count) {
          test_rows_per_task[static_cast<size_t>(t)].push_back(rows[i]);
        } else {
          train_rows_per_task[static_cast<size_t>(t)].push_back(rows[i]);
        }
      }
    }
  }

  // z-score fitted on the union of train rows only.
  std::vector<int> all_train;
  for (const auto& rows : train_rows_per_task)
    all_train.insert(all_train.end(), rows.begin(), rows.end());
  Matrix train_union(static_cast<int>(all_train.size()), samples.dim());
  for (size_t i = 0; i < all_train.size(); ++i)
    std::memcpy(train_union.row(static_cast<int>(i)), samples.inputs.row(all_train[i]),
                sizeof(double) * static_cast<size_t>(samples.dim()));
  const ColumnStats stats = fit_column_stats(train_union);

  auto build_set = [&](const std::vector<int>& rows) {
    SampleSet set;
    set.inputs = Matrix(static_cast<int>(rows.size()), samples.dim());
    for (size_t i = 0; i < rows.size(); ++i) {
      std::memcpy(set.inputs.row(static_cast<int>(i)), samples.inputs.row(rows[i]),
                  sizeof(double) * static_cast<size_t>(samples.dim()));
      set.labels.push_back(samples.labels[static_cast<size_t>(rows[i])]);
    }
    apply_column_stats(set.inputs, stats);
    return set;
  };

  for (int t = 0; t < num_tasks; ++t) {
    tasks[static_cast<size_t>(t)].train = build_set(train_rows_per_task[static_cast<size_t>(t)]);
    tasks[static_cast<size_t>(t)].test = build_set(test_rows_per_task[static_cast<size_t>(t)]);
  }
  return TaskStream(std::move(tasks));
}

}  // namespace adagauss
