#pragma once

#include <string>
#include <vector>

#include "adagauss/linalg.hpp"

namespace adagauss {

// Reverse-mode differentiation over dense matrices, sized for small MLPs.
// One Tape records one forward pass; backward() runs once per forward and
// accumulates into Parameter::grad. reset() clears the record for the next
// step.

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
};

enum class Reduction { kSum, kMean };

struct Value {
  int node = -1;
};

class Tape {
 public:
  // Leaves.
  Value input(Matrix constant);
  Value parameter(Parameter& p);

  // Network primitives. `x` rows are batch entries.
  Value affine(Value x, Value w, Value b);  // x·W + b (b broadcast over rows)
  Value relu(Value x);

  // Scalar losses (1×1 results).
  Value softmax_cross_entropy(Value logits, const std::vector<int>& labels);
  // Cross-entropy against fixed target probabilities with both sides
  // temperature-softened; targets must already be a probability row per entry.
  Value soft_cross_entropy(Value logits, const Matrix& target_probs, double temperature);
  Value mse_rows(Value a, const Matrix& targets, Reduction reduction);

  // Unbiased covariance (divisor n-1) of the rows of x; needs >= 2 rows.
  Value batch_covariance(Value x);
  // Diagonal of cholesky(cov + jitter·I) as a 1×S row. Throws CollapsedBatch
  // when the (jittered) covariance is not positive-definite; the training
  // loop owns the retry-with-jitter policy.
  Value cholesky_diag(Value cov, double jitter = 0.0);

  // Elementwise and reduction helpers.
  Value clip_max(Value x, double cap);  // min(x, cap); gradient 0 where x >= cap
  Value sum_all(Value x);
  Value mean_all(Value x);
  Value scale(Value x, double factor);
  Value add(Value a, Value b);
  Value add_scaled(Value a, Value b, double factor);  // a + factor·b

  const Matrix& value_of(Value v) const;
  int size() const { return static_cast<int>(nodes_.size()); }

  // Propagates dLoss through the record and accumulates into every Parameter
  // leaf's grad. Throws NonScalarLoss for a non-1×1 loss and NaNGradient
  // (naming the node) if any adjoint goes non-finite.
  void backward(Value loss);

  void reset();

 private:
  enum class Op {
    kInput, kParameter, kAffine, kRelu, kSoftmaxXent, kSoftXent, kMseRows,
    kBatchCov, kCholDiag, kClipMax, kSumAll, kMeanAll, kScale, kAdd, kAddScaled,
  };

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    int c = -1;
    Matrix value;
    Matrix adjoint;
    Parameter* param = nullptr;
    Matrix aux;                // op-specific saved forward state
    std::vector<int> labels;
    double scalar = 0.0;
  };

  int push(Node node);
  Node& at(Value v);
  const Node& at(Value v) const;
  void add_adjoint(int node, const Matrix& contribution);
  static const char* op_name(Op op);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// SGD with momentum and decoupled-from-nothing classic L2 weight decay:
// velocity = momentum·velocity + grad + weight_decay·value;
// value -= lr·velocity. Throws NonFiniteUpdate naming the parameter if an
// update produces a non-finite value.
class SgdOptimizer {
 public:
  explicit SgdOptimizer(std::vector<Parameter*> params);

  void step(double lr, double weight_decay, double momentum);
  void zero_grad();
  // Rescales all gradients so their joint norm is at most max_norm; no-op
  // when max_norm <= 0. Call between backward() and step().
  void clip_grad_norm(double max_norm);
  const std::vector<Parameter*>& params() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Matrix> velocity_;
};

}  // namespace adagauss
