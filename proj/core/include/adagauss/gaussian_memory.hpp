#pragma once

#include <map>
#include <string>
#include <vector>

#include "adagauss/linalg.hpp"
#include "adagauss/networks.hpp"

namespace adagauss {

struct ClassGaussian {
  int class_id = -1;
  int task_id = -1;  // origin task; adaptation never rewrites it
  Vector mean;
  Matrix cov;
};

enum class AdaptMode { kNone, kMeanOnly, kCovOnly, kFull };

const char* adapt_mode_name(AdaptMode mode);
AdaptMode parse_adapt_mode(const std::string& text);

// Per-class Gaussians in the extractor's latent space. The memory is the only
// thing retained from past tasks.
class GaussianMemory {
 public:
  explicit GaussianMemory(int latent_dim) : latent_dim_(latent_dim) {}

  int latent_dim() const { return latent_dim_; }
  int size() const { return static_cast<int>(entries_.size()); }
  bool empty() const { return entries_.empty(); }
  // Monotone counter bumped by every mutation; classifier caches key on it.
  uint64_t version() const { return version_; }

  const std::map<int, ClassGaussian>& entries() const { return entries_; }
  const ClassGaussian& entry(int class_id) const;
  std::vector<int> class_ids() const;

  void insert(ClassGaussian g);
  void replace(ClassGaussian g);

  // Estimates one Gaussian per class present in `labels` from the feature
  // rows, and stores them with the given task id. `shrink_gamma` is added to
  // the covariance diagonal when positive (the ablation alternative to the
  // anti-collapse loss). Each class needs at least latent_dim+1 samples.
  void memorize_task(const Matrix& features, const std::vector<int>& labels, int task_id,
                     double shrink_gamma = 0.0);

  // Transports every entry estimated before `current_task` through the
  // adapter per Algorithm-style sampling: draw n_samples from the stored
  // Gaussian, map them, re-estimate. kMeanOnly instead sets μ ← ψ(μ) with the
  // covariance kept; kCovOnly keeps the stored mean. Per-class sample streams
  // are derived as rng.seed ^ class_id, so the result does not depend on
  // iteration order. Entries of `current_task` are untouched.
  void adapt_all(const Mlp& adapter, int n_samples, int current_task, const SeededRng& rng,
                 AdaptMode mode = AdaptMode::kFull, double shrink_gamma = 0.0);

  // Stored reals per class: latent_dim + latent_dim·(latent_dim+1)/2.
  int stored_reals_per_class() const;

  // Snapshot format: magic "AGMEM1", latent dim, entry count, then per entry
  // (class_id, task_id, mean, upper-triangular covariance) as little-endian
  // 64-bit values.
  void save(const std::string& path) const;
  static GaussianMemory load(const std::string& path);

 private:
  int latent_dim_;
  std::map<int, ClassGaussian> entries_;
  uint64_t version_ = 0;
};

// cov + gamma·identity.
Matrix shrink_cov(const Matrix& cov, double gamma);

}  // namespace adagauss
