#include "adagauss/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "adagauss/autodiff.hpp"

namespace adagauss {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454836;
}

const char* classifier_kind_name(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::kBayesFull: return "bayes_full";
    case ClassifierKind::kBayesDiag: return "bayes_diag";
    case ClassifierKind::kNmc: return "nmc";
    case ClassifierKind::kLinearHead: return "linear_head";
  }
  return "unknown";
}

ClassifierKind parse_classifier_kind(const std::string& text) {
  if (text == "bayes_full") return ClassifierKind::kBayesFull;
  if (text == "bayes_diag") return ClassifierKind::kBayesDiag;
  if (text == "nmc") return ClassifierKind::kNmc;
  if (text == "linear_head") return ClassifierKind::kLinearHead;
  fail(ErrorCode::kInvalidConfig, "unknown classifier kind '" + text + "'");
}

Classifier::Classifier(const GaussianMemory& memory, ClassifierConfig config)
    : memory_(memory), config_(config) {
  if (memory_.empty()) fail(ErrorCode::kEmptyMemory, "cannot classify with an empty memory");
}

void Classifier::refresh_cache() const {
  if (cached_version_ == memory_.version()) return;
  ids_ = memory_.class_ids();
  factors_.clear();
  diag_vars_.clear();
  diag_log_dets_.clear();
  if (config_.kind == ClassifierKind::kBayesFull) {
    factors_.reserve(ids_.size());
    for (int id : ids_) factors_.push_back(cholesky(memory_.entry(id).cov));
  } else if (config_.kind == ClassifierKind::kBayesDiag) {
    for (int id : ids_) {
      const ClassGaussian& g = memory_.entry(id);
      Vector vars = g.cov.diagonal();
      double log_det = 0.0;
      for (int i = 0; i < vars.dim(); ++i) {
        if (!(vars[i] > 1e-12)) {
          fail(ErrorCode::kNotPositiveDefinite,
               "class " + std::to_string(id) + " has a non-positive diagonal variance");
        }
        log_det += std::log(vars[i]);
      }
      diag_vars_.push_back(std::move(vars));
      diag_log_dets_.push_back(log_det);
    }
  }
  cached_version_ = memory_.version();
}

std::vector<double> Classifier::scores(const Vector& features) const {
  refresh_cache();
  std::vector<double> out(ids_.size());
  switch (config_.kind) {
    case ClassifierKind::kBayesFull: {
      for (size_t k = 0; k < ids_.size(); ++k) {
        const ClassGaussian& g = memory_.entry(ids_[k]);
        const double maha = mahalanobis_sq(features, g.mean, factors_[k]);
        double score = -0.5 * maha;
        if (config_.include_logdet) {
          score += -0.5 * factors_[k].log_det() - 0.5 * features.dim() * kLogTwoPi;
        }
        out[k] = score;
      }
      break;
    }
    case ClassifierKind::kBayesDiag: {
      for (size_t k = 0; k < ids_.size(); ++k) {
        const ClassGaussian& g = memory_.entry(ids_[k]);
        const Vector& vars = diag_vars_[k];
        double maha = 0.0;
        for (int i = 0; i < features.dim(); ++i) {
          const double d = features[i] - g.mean[i];
          maha += d * d / vars[i];
        }
        double score = -0.5 * maha;
        if (config_.include_logdet) {
          score += -0.5 * diag_log_dets_[k] - 0.5 * features.dim() * kLogTwoPi;
        }
        out[k] = score;
      }
      break;
    }
    case ClassifierKind::kNmc: {
      for (size_t k = 0; k < ids_.size(); ++k) {
        out[k] = -norm(features - memory_.entry(ids_[k]).mean);
      }
      break;
    }
    case ClassifierKind::kLinearHead: {
      if (!head_) {
        fail(ErrorCode::kInvalidConfig, "linear head classifier used before training");
      }
      Matrix one(1, features.dim());
      one.set_row(0, features);
      const Matrix logits = head_->forward_nograd(one);
      for (size_t k = 0; k < ids_.size(); ++k) out[k] = logits(0, static_cast<int>(k));
      break;
    }
  }
  return out;
}

int Classifier::classify(const Vector& features) const {
  if (features.dim() != memory_.latent_dim()) {
    fail(ErrorCode::kShapeMismatch, "feature dim differs from memory latent_dim");
  }
  const std::vector<double> s = scores(features);
  size_t best = 0;
  for (size_t k = 1; k < s.size(); ++k) {
    if (s[k] > s[best]) best = k;  // strict: ties keep the lowest class id
  }
  return ids_[best];
}

void Classifier::train_linear_head(int samples_per_class, int epochs, SeededRng& rng) {
  head_ = train_linear_head_from_memory(memory_, samples_per_class, epochs, rng);
  refresh_cache();
}

int classify(const Vector& features, const GaussianMemory& memory,
             const ClassifierConfig& config) {
  return Classifier(memory, config).classify(features);
}

Mlp train_linear_head_from_memory(const GaussianMemory& memory, int samples_per_class,
                                  int epochs, SeededRng& rng) {
  if (memory.empty()) fail(ErrorCode::kEmptyMemory, "no classes to train a head on");
  const std::vector<int> ids = memory.class_ids();
  const int s = memory.latent_dim();
  const int num_classes = static_cast<int>(ids.size());

  // Pseudo-features: a balanced pool sampled from every class Gaussian.
  Matrix pool(num_classes * samples_per_class, s);
  std::vector<int> pool_labels(static_cast<size_t>(num_classes) * samples_per_class);
  for (int k = 0; k < num_classes; ++k) {
    const ClassGaussian& g = memory.entry(ids[static_cast<size_t>(k)]);
    SeededRng class_rng = rng.derive(static_cast<uint64_t>(ids[static_cast<size_t>(k)]) * 1315423911u);
    const Matrix drawn = sample_gaussian(g.mean, g.cov, samples_per_class, class_rng);
    for (int i = 0; i < samples_per_class; ++i) {
      const int row = k * samples_per_class + i;
      std::memcpy(pool.row(row), drawn.row(i), sizeof(double) * static_cast<size_t>(s));
      pool_labels[static_cast<size_t>(row)] = k;
    }
  }

  Mlp head = make_task_head(s, num_classes, rng);
  SgdOptimizer opt(head.parameters());
  const int batch = std::min(64, pool.rows());
  std::vector<int> order(static_cast<size_t>(pool.rows()));
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  Tape tape;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    // 0.1 dropped tenfold at 50% and again at 75% of the budget.
    double lr = 0.1;
    if (epoch >= epochs / 2) lr *= 0.1;
    if (epoch >= 3 * epochs / 4) lr *= 0.1;
    rng.shuffle(order);
    for (int start = 0; start < pool.rows(); start += batch) {
      const int count = std::min(batch, pool.rows() - start);
      Matrix xb(count, s);
      std::vector<int> yb(static_cast<size_t>(count));
      for (int i = 0; i < count; ++i) {
        const int src = order[static_cast<size_t>(start + i)];
        std::memcpy(xb.row(i), pool.row(src), sizeof(double) * static_cast<size_t>(s));
        yb[static_cast<size_t>(i)] = pool_labels[static_cast<size_t>(src)];
      }
      tape.reset();
      opt.zero_grad();
      Value logits = head.forward(tape, tape.input(std::move(xb)));
      Value loss = tape.softmax_cross_entropy(logits, yb);
      tape.backward(loss);
      opt.step(lr, 0.0, 0.9);
    }
  }
  return head;
}

RecencyProbe recency_bias_probe(const GaussianMemory& memory,
                                const std::vector<std::pair<int, Matrix>>& eval_features_per_task,
                                int head_samples_per_class, int head_epochs, SeededRng& rng) {
  if (memory.empty()) fail(ErrorCode::kEmptyMemory, "probe needs a populated memory");

  // Group memorized classes by origin task and pre-factor their covariances.
  std::map<int, std::vector<const ClassGaussian*>> by_task;
  for (const auto& [id, g] : memory.entries()) by_task[g.task_id].push_back(&g);
  std::map<const ClassGaussian*, CholeskyFactor> factors;
  for (const auto& [task, entries] : by_task)
    for (const ClassGaussian* g : entries) factors.emplace(g, cholesky(g->cov));

  const Mlp head = train_linear_head_from_memory(memory, head_samples_per_class, head_epochs, rng);
  const std::vector<int> ids = memory.class_ids();
  std::map<int, std::vector<int>> head_cols_by_task;  // head output columns per task
  for (size_t k = 0; k < ids.size(); ++k) {
    head_cols_by_task[memory.entry(ids[k]).task_id].push_back(static_cast<int>(k));
  }

  RecencyProbe probe;
  for (const auto& [task, features] : eval_features_per_task) {
    auto it = by_task.find(task);
    if (it == by_task.end() || features.rows() == 0) {
      fail(ErrorCode::kEmptyTask, "no memory entries or features for task " + std::to_string(task));
    }
    double maha_sum = 0.0;
    double win_sum = 0.0;
    double own_sum = 0.0;
    const Matrix logits = head.forward_nograd(features);
    for (int r = 0; r < features.rows(); ++r) {
      const Vector x = features.row_vector(r);
      double best = std::numeric_limits<double>::infinity();
      for (const ClassGaussian* g : it->second) {
        best = std::min(best, mahalanobis_sq(x, g->mean, factors.at(g)));
      }
      maha_sum += best;
      double win = logits(r, 0);
      for (int c = 1; c < logits.cols(); ++c) win = std::max(win, logits(r, c));
      win_sum += win;
      double own = 0.0;
      for (int col : head_cols_by_task.at(task)) own += logits(r, col);
      own_sum += own / static_cast<double>(head_cols_by_task.at(task).size());
    }
    const double n = features.rows();
    probe.task_ids.push_back(task);
    probe.mean_mahalanobis_sq.push_back(maha_sum / n);
    probe.mean_winning_logit.push_back(win_sum / n);
    probe.mean_own_task_logit.push_back(own_sum / n);
  }
  return probe;
}

}  // namespace adagauss
