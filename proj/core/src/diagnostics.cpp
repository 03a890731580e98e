#include "adagauss/diagnostics.hpp"

#include <cmath>
#include <limits>

namespace adagauss {

int representation_strength(const Mlp& extractor, const Matrix& data, double fraction) {
  if (data.rows() < extractor.output_dim() + 1) {
    fail(ErrorCode::kTooFewSamples, "representation strength needs latent_dim+1 samples");
  }
  const Matrix feats = extractor.forward_nograd(data);
  auto [mean, cov] = estimate_gaussian(feats);
  (void)mean;
  Vector eig = eig_sym(cov);
  // Numerical noise can leave tiny negative eigenvalues; they carry no variance.
  for (int i = 0; i < eig.dim(); ++i) eig[i] = std::max(eig[i], 0.0);
  return effective_dim(eig, fraction);
}

std::vector<CovRankStats> cov_rank_and_inverse_norm(const GaussianMemory& memory,
                                                    double shrink_gamma) {
  if (memory.empty()) fail(ErrorCode::kEmptyMemory, "no memorized covariances to analyze");

  std::map<int, std::vector<const ClassGaussian*>> by_task;
  for (const auto& [id, g] : memory.entries()) by_task[g.task_id].push_back(&g);

  std::vector<CovRankStats> out;
  for (const auto& [task, entries] : by_task) {
    CovRankStats stats;
    stats.origin_task = task;
    double rank_sum = 0.0;
    double norm_sum = 0.0;
    bool any_singular = false;
    for (const ClassGaussian* g : entries) {
      const Matrix cov = shrink_gamma > 0.0 ? shrink_cov(g->cov, shrink_gamma) : g->cov;
      rank_sum += numeric_rank(cov);
      try {
        norm_sum += frobenius_norm(chol_inverse(cholesky(cov)));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNotPositiveDefinite) throw;
        any_singular = true;  // the phenomenon itself: report infinity, not a crash
      }
    }
    stats.mean_rank = rank_sum / static_cast<double>(entries.size());
    stats.mean_inverse_norm = any_singular ? std::numeric_limits<double>::infinity()
                                           : norm_sum / static_cast<double>(entries.size());
    out.push_back(stats);
  }
  return out;
}

std::vector<FidelityStats> memory_fidelity(const GaussianMemory& memory,
                                           const std::map<int, Matrix>& ground_truth_per_class) {
  if (memory.empty()) fail(ErrorCode::kEmptyMemory, "no memory entries to compare");

  std::map<int, FidelityStats> by_task;
  std::map<int, int> counts;
  for (const auto& [class_id, feats] : ground_truth_per_class) {
    const ClassGaussian& g = memory.entry(class_id);
    if (feats.rows() < memory.latent_dim() + 1) {
      fail(ErrorCode::kTooFewSamples,
           "class " + std::to_string(class_id) + " has too few held-out samples");
    }
    auto [real_mean, real_cov] = estimate_gaussian(feats);
    FidelityStats& stats = by_task[g.task_id];
    stats.origin_task = g.task_id;
    stats.mean_l2 += norm(g.mean - real_mean);
    stats.cov_l2 += frobenius_norm(g.cov - real_cov);
    // The re-estimated covariance comes from a small held-out sample and can
    // graze singularity; the divergence needs both sides SPD, so both get the
    // same tiny relative ridge. Mean/cov distances above stay exact.
    const double ridge =
        1e-6 * std::max(trace(g.cov), trace(real_cov)) / memory.latent_dim();
    stats.sym_kl += sym_kl(g.mean, shrink_cov(g.cov, ridge), real_mean,
                           shrink_cov(real_cov, ridge));
    counts[g.task_id] += 1;
  }

  std::vector<FidelityStats> out;
  for (auto& [task, stats] : by_task) {
    const double n = counts[task];
    stats.mean_l2 /= n;
    stats.cov_l2 /= n;
    stats.sym_kl /= n;
    out.push_back(stats);
  }
  return out;
}

std::map<int, double> class_shift(const GaussianMemory& before, const GaussianMemory& after) {
  if (before.size() != after.size()) {
    fail(ErrorCode::kClassMismatch, "memories hold different class sets");
  }
  std::map<int, double> out;
  for (const auto& [class_id, g] : before.entries()) {
    const ClassGaussian& g_after = after.entry(class_id);  // throws ClassMismatch if absent
    out[class_id] = norm(g_after.mean - g.mean);
  }
  return out;
}

}  // namespace adagauss
