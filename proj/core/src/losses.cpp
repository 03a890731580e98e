#include "adagauss/losses.hpp"

#include <cmath>

namespace adagauss {

const char* distillation_mode_name(DistillationMode mode) {
  switch (mode) {
    case DistillationMode::kNone: return "none";
    case DistillationMode::kFeature: return "feature";
    case DistillationMode::kLogit: return "logit";
    case DistillationMode::kProjected: return "projected";
  }
  return "unknown";
}

DistillationMode parse_distillation_mode(const std::string& text) {
  if (text == "none") return DistillationMode::kNone;
  if (text == "feature") return DistillationMode::kFeature;
  if (text == "logit") return DistillationMode::kLogit;
  if (text == "projected") return DistillationMode::kProjected;
  fail(ErrorCode::kInvalidConfig, "unknown distillation mode '" + text + "'");
}

Value loss_ce(Tape& tape, Value head_logits, const std::vector<int>& labels) {
  return tape.softmax_cross_entropy(head_logits, labels);
}

Value loss_pkd(Tape& tape, Value current_feats, Mlp& projector,
               const Matrix& frozen_prev_feats, Reduction reduction) {
  Value projected = projector.forward(tape, current_feats);
  return tape.mse_rows(projected, frozen_prev_feats, reduction);
}

Value loss_ac(Tape& tape, Value batch_feats, double beta, double jitter) {
  if (beta <= 0.0) fail(ErrorCode::kInvalidConfig, "beta must be positive");
  Value cov = tape.batch_covariance(batch_feats);
  Value diag = tape.cholesky_diag(cov, jitter);
  const int s = tape.value_of(diag).cols();
  Value clipped = tape.clip_max(diag, beta);
  return tape.scale(tape.sum_all(clipped), -1.0 / s);
}

Value loss_adapter(Tape& tape, Mlp& adapter, const Matrix& frozen_prev_feats,
                   const Matrix& frozen_curr_feats, double beta, Reduction reduction,
                   double jitter) {
  if (adapter.input_dim() != frozen_prev_feats.cols()) {
    fail(ErrorCode::kAdapterDimMismatch, "adapter input dim differs from feature dim");
  }
  Value prev = tape.input(frozen_prev_feats);
  Value mapped = adapter.forward(tape, prev);
  Value mse = tape.mse_rows(mapped, frozen_curr_feats, reduction);
  Value ac = loss_ac(tape, mapped, beta, jitter);
  return tape.add(mse, ac);
}

Value loss_total(Tape& tape, Value ce, Value ac, Value pkd, double lambda) {
  return tape.add_scaled(tape.add(ce, ac), pkd, lambda);
}

Value loss_feature_kd(Tape& tape, Value current_feats, const Matrix& frozen_prev_feats,
                      Reduction reduction) {
  return tape.mse_rows(current_feats, frozen_prev_feats, reduction);
}

namespace {

Matrix soften(const Matrix& logits, double temperature) {
  Matrix p(logits.rows(), logits.cols());
  for (int r = 0; r < logits.rows(); ++r) {
    double m = logits(r, 0) / temperature;
    for (int c = 1; c < logits.cols(); ++c) m = std::max(m, logits(r, c) / temperature);
    double z = 0.0;
    for (int c = 0; c < logits.cols(); ++c) {
      const double e = std::exp(logits(r, c) / temperature - m);
      p(r, c) = e;
      z += e;
    }
    for (int c = 0; c < logits.cols(); ++c) p(r, c) /= z;
  }
  return p;
}

}  // namespace

Value loss_logit_kd(Tape& tape, const std::vector<Value>& curr_logits_per_head,
                    const std::vector<Matrix>& prev_logits_per_head, double temperature) {
  if (curr_logits_per_head.empty()) {
    fail(ErrorCode::kNoPreviousHeads, "logit distillation requires at least one old head");
  }
  if (curr_logits_per_head.size() != prev_logits_per_head.size()) {
    fail(ErrorCode::kShapeMismatch, "mismatched head lists for logit distillation");
  }
  Value total{};
  for (size_t h = 0; h < curr_logits_per_head.size(); ++h) {
    const Matrix targets = soften(prev_logits_per_head[h], temperature);
    Value term = tape.soft_cross_entropy(curr_logits_per_head[h], targets, temperature);
    total = h == 0 ? term : tape.add(total, term);
  }
  return tape.scale(total, 1.0 / static_cast<double>(curr_logits_per_head.size()));
}

}  // namespace adagauss
