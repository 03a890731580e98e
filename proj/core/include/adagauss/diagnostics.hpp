#pragma once

#include <map>
#include <vector>

#include "adagauss/data_stream.hpp"
#include "adagauss/gaussian_memory.hpp"
#include "adagauss/networks.hpp"

namespace adagauss {

// Read-only analyses over a trained extractor and the Gaussian memory. None
// of these feed training; the ones that need held-out data are wired behind
// the runner's oracle-diagnostics switch.

// Number of leading eigenvalues of the feature covariance needed to reach
// `fraction` of total variance. Needs at least latent_dim+1 rows.
int representation_strength(const Mlp& extractor, const Matrix& data, double fraction = 0.95);

struct CovRankStats {
  int origin_task = 0;
  double mean_rank = 0.0;
  // Frobenius norm of Σ⁻¹ averaged over the task's classes; infinity when an
  // entry cannot be factored and no shrink is configured (that failure is the
  // observation, not an error).
  double mean_inverse_norm = 0.0;
};

std::vector<CovRankStats> cov_rank_and_inverse_norm(const GaussianMemory& memory,
                                                    double shrink_gamma = 0.0);

struct FidelityStats {
  int origin_task = 0;
  double mean_l2 = 0.0;   // ‖μ_mem − μ_real‖ averaged over classes
  double cov_l2 = 0.0;    // ‖Σ_mem − Σ_real‖_F averaged over classes
  double sym_kl = 0.0;    // symmetric KL averaged over classes
};

// Distance between each memorized Gaussian and the Gaussian re-estimated from
// `ground_truth_per_class` features (held-out data through the current
// extractor), averaged per origin task.
std::vector<FidelityStats> memory_fidelity(const GaussianMemory& memory,
                                           const std::map<int, Matrix>& ground_truth_per_class);

// Euclidean displacement of each class mean between two memory states.
std::map<int, double> class_shift(const GaussianMemory& before, const GaussianMemory& after);

}  // namespace adagauss
