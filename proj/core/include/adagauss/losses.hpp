#pragma once

#include <vector>

#include "adagauss/autodiff.hpp"
#include "adagauss/networks.hpp"

namespace adagauss {

enum class DistillationMode { kNone, kFeature, kLogit, kProjected };

const char* distillation_mode_name(DistillationMode mode);
DistillationMode parse_distillation_mode(const std::string& text);

struct LossConfig {
  double lambda = 10.0;  // distillation weight in the combined objective
  double beta = 1.0;     // covariance regularization strength
  DistillationMode distillation = DistillationMode::kProjected;
  Reduction reduction = Reduction::kMean;
  double logit_temperature = 2.0;
};

// Mean cross-entropy of the head logits over the batch.
Value loss_ce(Tape& tape, Value head_logits, const std::vector<int>& labels);

// Projected distillation: reduction over the batch of
// ‖φ(current features) − frozen previous features‖². Gradient reaches both
// the projector and (through its input) the extractor.
Value loss_pkd(Tape& tape, Value current_feats, Mlp& projector,
               const Matrix& frozen_prev_feats, Reduction reduction);

// Anti-collapse term: −(1/S)·Σ min(a_i, β) over the Cholesky diagonal of the
// batch feature covariance. `jitter` > 0 retries the factorization on
// cov + jitter·I; a still-singular covariance throws CollapsedBatch.
Value loss_ac(Tape& tape, Value batch_feats, double beta, double jitter = 0.0);

// Adapter objective: reduction of ‖ψ(prev feats) − current feats‖² plus the
// anti-collapse term applied to ψ's outputs. Only the adapter receives
// gradients; both feature sets are fixed inputs.
Value loss_adapter(Tape& tape, Mlp& adapter, const Matrix& frozen_prev_feats,
                   const Matrix& frozen_curr_feats, double beta, Reduction reduction,
                   double jitter = 0.0);

// Combined objective: ce + ac + λ·pkd.
Value loss_total(Tape& tape, Value ce, Value ac, Value pkd, double lambda);

// Plain feature distillation (no projector).
Value loss_feature_kd(Tape& tape, Value current_feats, const Matrix& frozen_prev_feats,
                      Reduction reduction);

// LwF-style logit distillation: per old head, temperature-softened
// cross-entropy between the head's logits on current features (on tape) and
// on previous-extractor features (fixed), averaged over heads.
// Throws NoPreviousHeads when the lists are empty.
Value loss_logit_kd(Tape& tape, const std::vector<Value>& curr_logits_per_head,
                    const std::vector<Matrix>& prev_logits_per_head, double temperature);

}  // namespace adagauss
