#pragma once

#include <optional>
#include <string>
#include <vector>

#include "adagauss/gaussian_memory.hpp"
#include "adagauss/linalg.hpp"
#include "adagauss/networks.hpp"

namespace adagauss {

enum class ClassifierKind { kBayesFull, kBayesDiag, kNmc, kLinearHead };

const char* classifier_kind_name(ClassifierKind kind);
ClassifierKind parse_classifier_kind(const std::string& text);

struct ClassifierConfig {
  ClassifierKind kind = ClassifierKind::kBayesFull;
  bool include_logdet = true;  // drop to score by pure Mahalanobis distance
};

// Inference over the memorized Gaussians. Ties break toward the lowest
// class id. Cholesky factors are cached per class and rebuilt whenever the
// memory's version moves.
class Classifier {
 public:
  Classifier(const GaussianMemory& memory, ClassifierConfig config);

  // Predicted class id for one feature vector.
  int classify(const Vector& features) const;
  // Per-class scores (log densities or negated distances, higher is better),
  // aligned with memory.class_ids().
  std::vector<double> scores(const Vector& features) const;

  // Trains the pseudo-feature linear head over all memorized classes; must be
  // called before classify() in kLinearHead mode.
  void train_linear_head(int samples_per_class, int epochs, SeededRng& rng);
  const Mlp* linear_head() const { return head_ ? &*head_ : nullptr; }

 private:
  void refresh_cache() const;

  const GaussianMemory& memory_;
  ClassifierConfig config_;
  mutable uint64_t cached_version_ = ~0ull;
  mutable std::vector<int> ids_;
  mutable std::vector<CholeskyFactor> factors_;       // kBayesFull
  mutable std::vector<Vector> diag_vars_;             // kBayesDiag
  mutable std::vector<double> diag_log_dets_;
  std::optional<Mlp> head_;
};

// One-call classification for the memory-only kinds.
int classify(const Vector& features, const GaussianMemory& memory, const ClassifierConfig& config);

// Affine head trained with cross-entropy on features sampled from the
// memorized class Gaussians. Deterministic given rng.
Mlp train_linear_head_from_memory(const GaussianMemory& memory, int samples_per_class,
                                  int epochs, SeededRng& rng);

struct RecencyProbe {
  std::vector<int> task_ids;                 // ascending origin tasks
  std::vector<double> mean_mahalanobis_sq;   // features vs their task's Gaussians
  std::vector<double> mean_winning_logit;    // linear-head max logit
  std::vector<double> mean_own_task_logit;   // mean logit over the task's own classes
};

// Task-recency bias probe: for each origin task, the mean over that task's
// evaluation features of the smallest squared Mahalanobis distance to the
// task's class Gaussians, plus linear-head logit statistics.
RecencyProbe recency_bias_probe(const GaussianMemory& memory,
                                const std::vector<std::pair<int, Matrix>>& eval_features_per_task,
                                int head_samples_per_class, int head_epochs, SeededRng& rng);

}  // namespace adagauss
