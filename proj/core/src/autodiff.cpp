#include "adagauss/autodiff.hpp"

#include <cmath>
#include <utility>

namespace adagauss {

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* where) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorCode::kShapeMismatch, std::string(where) + ": shapes differ");
  }
}

Matrix softmax_rows(const Matrix& logits, double inv_temp) {
  Matrix p(logits.rows(), logits.cols());
  for (int r = 0; r < logits.rows(); ++r) {
    double m = logits(r, 0) * inv_temp;
    for (int c = 1; c < logits.cols(); ++c) m = std::max(m, logits(r, c) * inv_temp);
    double z = 0.0;
    for (int c = 0; c < logits.cols(); ++c) {
      const double e = std::exp(logits(r, c) * inv_temp - m);
      p(r, c) = e;
      z += e;
    }
    for (int c = 0; c < logits.cols(); ++c) p(r, c) /= z;
  }
  return p;
}

}  // namespace

int Tape::push(Node node) {
  if (backward_done_) {
    fail(ErrorCode::kTapeReuse, "tape already consumed by backward; call reset() first");
  }
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

Tape::Node& Tape::at(Value v) { return nodes_[static_cast<size_t>(v.node)]; }
const Tape::Node& Tape::at(Value v) const { return nodes_[static_cast<size_t>(v.node)]; }

const Matrix& Tape::value_of(Value v) const { return at(v).value; }

Value Tape::input(Matrix constant) {
  Node n;
  n.op = Op::kInput;
  n.value = std::move(constant);
  return Value{push(std::move(n))};
}

Value Tape::parameter(Parameter& p) {
  Node n;
  n.op = Op::kParameter;
  n.value = p.value;
  n.param = &p;
  return Value{push(std::move(n))};
}

Value Tape::affine(Value x, Value w, Value b) {
  const Matrix& xm = at(x).value;
  const Matrix& wm = at(w).value;
  const Matrix& bm = at(b).value;
  if (xm.cols() != wm.rows() || bm.rows() != 1 || bm.cols() != wm.cols()) {
    fail(ErrorCode::kShapeMismatch, "affine: incompatible x/W/b shapes");
  }
  Matrix y = matmul(xm, wm);
  for (int r = 0; r < y.rows(); ++r)
    for (int c = 0; c < y.cols(); ++c) y(r, c) += bm(0, c);
  Node n;
  n.op = Op::kAffine;
  n.a = x.node;
  n.b = w.node;
  n.c = b.node;
  n.value = std::move(y);
  return Value{push(std::move(n))};
}

Value Tape::relu(Value x) {
  const Matrix& xm = at(x).value;
  Matrix y(xm.rows(), xm.cols());
  for (size_t i = 0; i < xm.size(); ++i) y.data()[i] = xm.data()[i] > 0.0 ? xm.data()[i] : 0.0;
  Node n;
  n.op = Op::kRelu;
  n.a = x.node;
  n.value = std::move(y);
  return Value{push(std::move(n))};
}

Value Tape::softmax_cross_entropy(Value logits, const std::vector<int>& labels) {
  const Matrix& lm = at(logits).value;
  if (static_cast<int>(labels.size()) != lm.rows()) {
    fail(ErrorCode::kShapeMismatch, "softmax_cross_entropy: one label per row required");
  }
  for (int label : labels) {
    if (label < 0 || label >= lm.cols()) {
      fail(ErrorCode::kLabelOutOfRange,
           "label " + std::to_string(label) + " outside [0, " + std::to_string(lm.cols()) + ")");
    }
  }
  Matrix probs = softmax_rows(lm, 1.0);
  double loss = 0.0;
  for (int r = 0; r < lm.rows(); ++r) {
    loss -= std::log(std::max(probs(r, labels[static_cast<size_t>(r)]), 1e-300));
  }
  loss /= lm.rows();
  Node n;
  n.op = Op::kSoftmaxXent;
  n.a = logits.node;
  n.value = Matrix(1, 1);
  n.value(0, 0) = loss;
  n.aux = std::move(probs);
  n.labels = labels;
  return Value{push(std::move(n))};
}

Value Tape::soft_cross_entropy(Value logits, const Matrix& target_probs, double temperature) {
  const Matrix& lm = at(logits).value;
  check_same_shape(lm, target_probs, "soft_cross_entropy");
  const double inv_temp = 1.0 / temperature;
  Matrix probs = softmax_rows(lm, inv_temp);
  double loss = 0.0;
  for (int r = 0; r < lm.rows(); ++r)
    for (int c = 0; c < lm.cols(); ++c)
      loss -= target_probs(r, c) * std::log(std::max(probs(r, c), 1e-300));
  loss /= lm.rows();
  Node n;
  n.op = Op::kSoftXent;
  n.a = logits.node;
  n.value = Matrix(1, 1);
  n.value(0, 0) = loss;
  n.aux = probs - target_probs;  // saved, already the unscaled per-row gradient
  n.scalar = inv_temp;
  return Value{push(std::move(n))};
}

Value Tape::mse_rows(Value a, const Matrix& targets, Reduction reduction) {
  const Matrix& am = at(a).value;
  check_same_shape(am, targets, "mse_rows");
  Matrix diff = am - targets;
  double loss = 0.0;
  for (size_t i = 0; i < diff.size(); ++i) loss += diff.data()[i] * diff.data()[i];
  if (reduction == Reduction::kMean) loss /= am.rows();
  Node n;
  n.op = Op::kMseRows;
  n.a = a.node;
  n.value = Matrix(1, 1);
  n.value(0, 0) = loss;
  n.aux = std::move(diff);
  n.scalar = reduction == Reduction::kMean ? 1.0 / am.rows() : 1.0;
  return Value{push(std::move(n))};
}

Value Tape::batch_covariance(Value x) {
  const Matrix& xm = at(x).value;
  if (xm.rows() < 2) {
    fail(ErrorCode::kTooFewSamples, "batch_covariance needs at least 2 rows");
  }
  Matrix centered(xm.rows(), xm.cols());
  for (int c = 0; c < xm.cols(); ++c) {
    double mean = 0.0;
    for (int r = 0; r < xm.rows(); ++r) mean += xm(r, c);
    mean /= xm.rows();
    for (int r = 0; r < xm.rows(); ++r) centered(r, c) = xm(r, c) - mean;
  }
  Matrix cov = matmul_tn(centered, centered);
  cov *= 1.0 / (xm.rows() - 1);
  Node n;
  n.op = Op::kBatchCov;
  n.a = x.node;
  n.value = std::move(cov);
  n.aux = std::move(centered);
  return Value{push(std::move(n))};
}

Value Tape::cholesky_diag(Value cov, double jitter) {
  Matrix shifted = at(cov).value;
  if (jitter != 0.0) {
    for (int i = 0; i < shifted.rows(); ++i) shifted(i, i) += jitter;
  }
  CholeskyFactor factor;
  try {
    factor = cholesky(shifted);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kNotPositiveDefinite) {
      fail(ErrorCode::kCollapsedBatch,
           std::string("batch covariance is not positive-definite (") + e.what() + ")");
    }
    throw;
  }
  const int s = factor.dim();
  Matrix diag(1, s);
  for (int i = 0; i < s; ++i) diag(0, i) = factor.lower(i, i);
  Node n;
  n.op = Op::kCholDiag;
  n.a = cov.node;
  n.value = std::move(diag);
  n.aux = std::move(factor.lower);
  return Value{push(std::move(n))};
}

Value Tape::clip_max(Value x, double cap) {
  const Matrix& xm = at(x).value;
  Matrix y(xm.rows(), xm.cols());
  for (size_t i = 0; i < xm.size(); ++i) y.data()[i] = std::min(xm.data()[i], cap);
  Node n;
  n.op = Op::kClipMax;
  n.a = x.node;
  n.value = std::move(y);
  n.scalar = cap;
  return Value{push(std::move(n))};
}

Value Tape::sum_all(Value x) {
  const Matrix& xm = at(x).value;
  double s = 0.0;
  for (size_t i = 0; i < xm.size(); ++i) s += xm.data()[i];
  Node n;
  n.op = Op::kSumAll;
  n.a = x.node;
  n.value = Matrix(1, 1);
  n.value(0, 0) = s;
  return Value{push(std::move(n))};
}

Value Tape::mean_all(Value x) {
  const Matrix& xm = at(x).value;
  double s = 0.0;
  for (size_t i = 0; i < xm.size(); ++i) s += xm.data()[i];
  Node n;
  n.op = Op::kMeanAll;
  n.a = x.node;
  n.value = Matrix(1, 1);
  n.value(0, 0) = s / static_cast<double>(xm.size());
  return Value{push(std::move(n))};
}

Value Tape::scale(Value x, double factor) {
  Matrix y = at(x).value;
  y *= factor;
  Node n;
  n.op = Op::kScale;
  n.a = x.node;
  n.value = std::move(y);
  n.scalar = factor;
  return Value{push(std::move(n))};
}

Value Tape::add(Value a, Value b) { return add_scaled(a, b, 1.0); }

Value Tape::add_scaled(Value a, Value b, double factor) {
  const Matrix& am = at(a).value;
  const Matrix& bm = at(b).value;
  check_same_shape(am, bm, "add");
  Matrix y = am;
  for (size_t i = 0; i < y.size(); ++i) y.data()[i] += factor * bm.data()[i];
  Node n;
  n.op = Op::kAddScaled;
  n.a = a.node;
  n.b = b.node;
  n.value = std::move(y);
  n.scalar = factor;
  return Value{push(std::move(n))};
}

void Tape::add_adjoint(int node, const Matrix& contribution) {
  Node& n = nodes_[static_cast<size_t>(node)];
  if (!all_finite(contribution)) {
    fail(ErrorCode::kNaNGradient,
         std::string("non-finite adjoint flowing into ") + op_name(n.op) + " node #" +
             std::to_string(node));
  }
  if (n.adjoint.empty()) {
    n.adjoint = contribution;
  } else {
    n.adjoint += contribution;
  }
}

void Tape::backward(Value loss) {
  if (backward_done_) {
    fail(ErrorCode::kTapeReuse, "backward already ran for this forward pass");
  }
  backward_done_ = true;
  Node& top = at(loss);
  if (top.value.rows() != 1 || top.value.cols() != 1) {
    fail(ErrorCode::kNonScalarLoss, "loss node is not a scalar");
  }
  top.adjoint = Matrix(1, 1);
  top.adjoint(0, 0) = 1.0;

  for (int i = loss.node; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.adjoint.empty()) continue;
    const Matrix& g = n.adjoint;
    switch (n.op) {
      case Op::kInput:
        break;
      case Op::kParameter:
        if (n.param->grad.empty()) n.param->zero_grad();
        n.param->grad += g;
        break;
      case Op::kAffine: {
        const Matrix& x = nodes_[static_cast<size_t>(n.a)].value;
        const Matrix& w = nodes_[static_cast<size_t>(n.b)].value;
        add_adjoint(n.a, matmul_nt(g, w));
        add_adjoint(n.b, matmul_tn(x, g));
        Matrix db(1, g.cols());
        for (int r = 0; r < g.rows(); ++r)
          for (int c = 0; c < g.cols(); ++c) db(0, c) += g(r, c);
        add_adjoint(n.c, db);
        break;
      }
      case Op::kRelu: {
        const Matrix& x = nodes_[static_cast<size_t>(n.a)].value;
        Matrix dx(g.rows(), g.cols());
        for (size_t k = 0; k < dx.size(); ++k)
          dx.data()[k] = x.data()[k] > 0.0 ? g.data()[k] : 0.0;
        add_adjoint(n.a, dx);
        break;
      }
      case Op::kSoftmaxXent: {
        const Matrix& probs = n.aux;
        const double scale = g(0, 0) / probs.rows();
        Matrix dl = probs;
        for (int r = 0; r < dl.rows(); ++r) dl(r, n.labels[static_cast<size_t>(r)]) -= 1.0;
        dl *= scale;
        add_adjoint(n.a, dl);
        break;
      }
      case Op::kSoftXent: {
        Matrix dl = n.aux;  // probs - targets
        dl *= g(0, 0) * n.scalar / dl.rows();
        add_adjoint(n.a, dl);
        break;
      }
      case Op::kMseRows: {
        Matrix da = n.aux;  // a - targets
        da *= 2.0 * g(0, 0) * n.scalar;
        add_adjoint(n.a, da);
        break;
      }
      case Op::kBatchCov: {
        const Matrix& centered = n.aux;
        Matrix gsym = g + transpose(g);
        Matrix dx = matmul(centered, gsym);
        dx *= 1.0 / (centered.rows() - 1);
        add_adjoint(n.a, dx);
        break;
      }
      case Op::kCholDiag: {
        const int s = n.aux.rows();
        Matrix lbar(s, s);
        for (int k = 0; k < s; ++k) lbar(k, k) = g(0, k);
        add_adjoint(n.a, cholesky_backward(CholeskyFactor{n.aux}, lbar));
        break;
      }
      case Op::kClipMax: {
        const Matrix& x = nodes_[static_cast<size_t>(n.a)].value;
        Matrix dx(g.rows(), g.cols());
        for (size_t k = 0; k < dx.size(); ++k)
          dx.data()[k] = x.data()[k] < n.scalar ? g.data()[k] : 0.0;
        add_adjoint(n.a, dx);
        break;
      }
      case Op::kSumAll: {
        const Matrix& x = nodes_[static_cast<size_t>(n.a)].value;
        add_adjoint(n.a, Matrix(x.rows(), x.cols(), g(0, 0)));
        break;
      }
      case Op::kMeanAll: {
        const Matrix& x = nodes_[static_cast<size_t>(n.a)].value;
        add_adjoint(n.a, Matrix(x.rows(), x.cols(), g(0, 0) / static_cast<double>(x.size())));
        break;
      }
      case Op::kScale: {
        Matrix dx = g;
        dx *= n.scalar;
        add_adjoint(n.a, dx);
        break;
      }
      case Op::kAdd:
      case Op::kAddScaled: {
        add_adjoint(n.a, g);
        Matrix db = g;
        db *= n.scalar;
        add_adjoint(n.b, db);
        break;
      }
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

const char* Tape::op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kParameter: return "parameter";
    case Op::kAffine: return "affine";
    case Op::kRelu: return "relu";
    case Op::kSoftmaxXent: return "softmax_cross_entropy";
    case Op::kSoftXent: return "soft_cross_entropy";
    case Op::kMseRows: return "mse_rows";
    case Op::kBatchCov: return "batch_covariance";
    case Op::kCholDiag: return "cholesky_diag";
    case Op::kClipMax: return "clip_max";
    case Op::kSumAll: return "sum_all";
    case Op::kMeanAll: return "mean_all";
    case Op::kScale: return "scale";
    case Op::kAdd: return "add";
    case Op::kAddScaled: return "add_scaled";
  }
  return "unknown";
}

SgdOptimizer::SgdOptimizer(std::vector<Parameter*> params) : params_(std::move(params)) {
  velocity_.reserve(params_.size());
  for (const Parameter* p : params_) {
    velocity_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void SgdOptimizer::step(double lr, double weight_decay, double momentum) {
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    if (p.grad.empty()) p.zero_grad();
    Matrix& v = velocity_[i];
    for (size_t k = 0; k < v.size(); ++k) {
      v.data()[k] = momentum * v.data()[k] + p.grad.data()[k] + weight_decay * p.value.data()[k];
      p.value.data()[k] -= lr * v.data()[k];
    }
    if (!all_finite(p.value)) {
      fail(ErrorCode::kNonFiniteUpdate, "parameter '" + p.name + "' went non-finite");
    }
  }
}

void SgdOptimizer::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void SgdOptimizer::clip_grad_norm(double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const Parameter* p : params_) {
    for (size_t k = 0; k < p->grad.size(); ++k) sq += p->grad.data()[k] * p->grad.data()[k];
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (Parameter* p : params_) {
    for (size_t k = 0; k < p->grad.size(); ++k) p->grad.data()[k] *= scale;
  }
}

}  // namespace adagauss
