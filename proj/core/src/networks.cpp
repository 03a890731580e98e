#include "adagauss/networks.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace adagauss {

namespace {

constexpr char kNetMagic[6] = {'A', 'G', 'N', 'E', 'T', '1'};

Matrix he_uniform(int fan_in, int fan_out, SeededRng& rng) {
  const double limit = std::sqrt(6.0 / fan_in);
  Matrix w(fan_in, fan_out);
  for (size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
  return w;
}

}  // namespace

void validate(const NetworkConfig& config) {
  if (config.input_dim < 1) fail(ErrorCode::kInvalidConfig, "input_dim must be positive");
  if (config.latent_dim < 2) fail(ErrorCode::kInvalidConfig, "latent_dim must be at least 2");
  if (config.hidden_dims.empty()) fail(ErrorCode::kInvalidConfig, "hidden_dims must be non-empty");
  for (int h : config.hidden_dims)
    if (h < 1) fail(ErrorCode::kInvalidConfig, "hidden widths must be positive");
  if (config.projector_hidden_factor < 1)
    fail(ErrorCode::kInvalidConfig, "projector_hidden_factor must be positive");
}

Mlp::Mlp(std::string name, std::vector<int> dims, SeededRng& rng)
    : name_(std::move(name)), dims_(std::move(dims)) {
  if (dims_.size() < 2) fail(ErrorCode::kInvalidConfig, "network needs at least one layer");
  for (size_t i = 0; i + 1 < dims_.size(); ++i) {
    const int in = dims_[i];
    const int out = dims_[i + 1];
    weights_.emplace_back(name_ + ".w" + std::to_string(i), he_uniform(in, out, rng));
    biases_.emplace_back(name_ + ".b" + std::to_string(i), Matrix(1, out));
  }
}

void Mlp::set_residual(bool residual) {
  if (residual && dims_.front() != dims_.back()) {
    fail(ErrorCode::kInvalidConfig, "residual map needs matching input/output dims");
  }
  residual_ = residual;
}

Value Mlp::forward(Tape& tape, Value x) {
  if (frozen_) {
    fail(ErrorCode::kInvalidConfig, "'" + name_ + "' is frozen; use forward_nograd");
  }
  Value h = x;
  for (size_t i = 0; i < weights_.size(); ++i) {
    Value w = tape.parameter(weights_[i]);
    Value b = tape.parameter(biases_[i]);
    h = tape.affine(h, w, b);
    if (i + 1 < weights_.size()) h = tape.relu(h);
  }
  if (residual_) h = tape.add(h, x);
  return h;
}

Value Mlp::forward_frozen(Tape& tape, Value x) const {
  Value h = x;
  for (size_t i = 0; i < weights_.size(); ++i) {
    Value w = tape.input(weights_[i].value);
    Value b = tape.input(biases_[i].value);
    h = tape.affine(h, w, b);
    if (i + 1 < weights_.size()) h = tape.relu(h);
  }
  if (residual_) h = tape.add(h, x);
  return h;
}

Matrix Mlp::forward_nograd(const Matrix& x) const {
  Matrix h = x;
  for (size_t i = 0; i < weights_.size(); ++i) {
    Matrix y = matmul(h, weights_[i].value);
    const Matrix& b = biases_[i].value;
    for (int r = 0; r < y.rows(); ++r)
      for (int c = 0; c < y.cols(); ++c) y(r, c) += b(0, c);
    if (i + 1 < weights_.size()) {
      for (size_t k = 0; k < y.size(); ++k)
        if (y.data()[k] < 0.0) y.data()[k] = 0.0;
    }
    h = std::move(y);
  }
  if (residual_) h += x;
  return h;
}

Mlp Mlp::clone_frozen() const {
  Mlp copy = *this;
  copy.frozen_ = true;
  return copy;
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  out.reserve(weights_.size() * 2);
  for (size_t i = 0; i < weights_.size(); ++i) {
    out.push_back(&weights_[i]);
    out.push_back(&biases_[i]);
  }
  return out;
}

int Mlp::parameter_count() const {
  int n = 0;
  for (size_t i = 0; i < weights_.size(); ++i) {
    n += static_cast<int>(weights_[i].value.size() + biases_[i].value.size());
  }
  return n;
}

Mlp make_feature_extractor(const NetworkConfig& config, SeededRng& rng) {
  validate(config);
  std::vector<int> dims;
  dims.push_back(config.input_dim);
  dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  dims.push_back(config.latent_dim);
  Mlp net("extractor", std::move(dims), rng);
  if (config.bottleneck_init_scale != 1.0) {
    net.weight(net.layer_count() - 1).value *= config.bottleneck_init_scale;
  }
  return net;
}

namespace {

// Two-layer map initialized near the identity via the relu(x) - relu(-x)
// decomposition, with small noise everywhere so the spare hidden units stay
// trainable. Both the projector and the adapter start from (approximately)
// the map they must represent when training begins, which keeps the first
// distillation/adaptation steps well-scaled.
Mlp near_identity_two_layer(const std::string& name, int latent, int hidden, SeededRng& rng) {
  Mlp net(name, {latent, hidden, latent}, rng);
  const double noise = 0.02;
  Matrix w1(latent, hidden);
  for (size_t i = 0; i < w1.size(); ++i) w1.data()[i] = noise * rng.normal();
  for (int i = 0; i < latent; ++i) {
    w1(i, i) += 1.0;
    w1(i, latent + i) += -1.0;
  }
  Matrix w2(hidden, latent);
  for (size_t i = 0; i < w2.size(); ++i) w2.data()[i] = noise * rng.normal();
  for (int i = 0; i < latent; ++i) {
    w2(i, i) += 1.0;
    w2(latent + i, i) += -1.0;
  }
  net.weight(0).value = std::move(w1);
  net.weight(1).value = std::move(w2);
  return net;
}

}  // namespace

Mlp make_projector(const NetworkConfig& config, SeededRng& rng) {
  validate(config);
  const int s = config.latent_dim;
  const int hidden = config.projector_hidden_factor * s;
  if (config.identity_init_projector && hidden >= 2 * s) {
    return near_identity_two_layer("projector", s, hidden, rng);
  }
  Mlp net("projector", {s, hidden, s}, rng);
  if (config.projector_init_scale != 1.0) {
    for (int layer = 0; layer < net.layer_count(); ++layer) {
      net.weight(layer).value *= config.projector_init_scale;
    }
  }
  return net;
}

Mlp make_adapter(const NetworkConfig& config, SeededRng& rng) {
  validate(config);
  const int s = config.latent_dim;
  const int hidden = config.projector_hidden_factor * s;
  if (config.identity_init_adapter) {
    // Residual adapter starting near the identity: the second layer opens at
    // a small scale so early adaptation steps are gentle.
    Mlp net("adapter", {s, hidden, s}, rng);
    net.weight(1).value *= 0.05;
    net.set_residual(true);
    return net;
  }
  return Mlp("adapter", {s, hidden, s}, rng);
}

Mlp make_task_head(int latent_dim, int num_classes, SeededRng& rng) {
  if (num_classes < 1) fail(ErrorCode::kInvalidConfig, "head needs at least one class");
  return Mlp("head", {latent_dim, num_classes}, rng);
}

Mlp make_exact_affine_map(const Matrix& a, const Vector& b) {
  const int out_dim = a.rows();
  const int in_dim = a.cols();
  if (b.dim() != out_dim) fail(ErrorCode::kShapeMismatch, "affine map b dim mismatch");
  SeededRng rng(0);
  Mlp net("affine_map", {in_dim, 2 * in_dim, out_dim}, rng);

  // Layer 1 maps x to (relu(x), relu(-x)); layer 2 recombines as A(x⁺ - x⁻)+b.
  Matrix w1(in_dim, 2 * in_dim);
  for (int i = 0; i < in_dim; ++i) {
    w1(i, i) = 1.0;
    w1(i, in_dim + i) = -1.0;
  }
  Matrix w2(2 * in_dim, out_dim);
  for (int j = 0; j < out_dim; ++j)
    for (int i = 0; i < in_dim; ++i) {
      w2(i, j) = a(j, i);
      w2(in_dim + i, j) = -a(j, i);
    }
  Matrix b2(1, out_dim);
  for (int j = 0; j < out_dim; ++j) b2(0, j) = b[j];

  net.weight(0).value = w1;
  net.bias(0).value = Matrix(1, 2 * in_dim);
  net.weight(1).value = w2;
  net.bias(1).value = b2;
  return net;
}

namespace {

void write_u64(std::ofstream& out, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64(std::ifstream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_f64(std::ofstream& out, const double* values, size_t count) {
  for (size_t i = 0; i < count; ++i) {
    uint64_t bits;
    std::memcpy(&bits, &values[i], 8);
    unsigned char buf[8];
    for (int k = 0; k < 8; ++k) buf[k] = static_cast<unsigned char>((bits >> (8 * k)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
  }
}

void read_f64(std::ifstream& in, double* values, size_t count) {
  for (size_t i = 0; i < count; ++i) {
    const uint64_t bits = read_u64(in);
    std::memcpy(&values[i], &bits, 8);
  }
}

}  // namespace

void save_network(const Mlp& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIoError, "cannot open '" + path + "' for writing");
  out.write(kNetMagic, sizeof(kNetMagic));
  write_u64(out, net.residual() ? 1 : 0);  // flags
  write_u64(out, static_cast<uint64_t>(net.dims().size()));
  for (int d : net.dims()) write_u64(out, static_cast<uint64_t>(d));
  for (int layer = 0; layer < net.layer_count(); ++layer) {
    const Matrix& w = net.weight(layer).value;
    const Matrix& b = net.bias(layer).value;
    write_f64(out, w.data(), w.size());
    write_f64(out, b.data(), b.size());
  }
  if (!out) fail(ErrorCode::kIoError, "short write to '" + path + "'");
}

Mlp load_network(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kMissingCheckpoint, "cannot open checkpoint '" + path + "'");
  char magic[6];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kNetMagic, sizeof(kNetMagic)) != 0) {
    fail(ErrorCode::kMissingCheckpoint, "'" + path + "' is not a network checkpoint");
  }
  const uint64_t flags = read_u64(in);
  const uint64_t ndims = read_u64(in);
  if (!in || flags > 1 || ndims < 2 || ndims > 64) {
    fail(ErrorCode::kMissingCheckpoint, "corrupt dimension header in '" + path + "'");
  }
  std::vector<int> dims(ndims);
  for (auto& d : dims) d = static_cast<int>(read_u64(in));
  SeededRng rng(0);
  Mlp net("loaded", dims, rng);
  if (flags & 1) net.set_residual(true);
  for (int layer = 0; layer < net.layer_count(); ++layer) {
    Matrix& w = net.weight(layer).value;
    Matrix& b = net.bias(layer).value;
    read_f64(in, w.data(), w.size());
    read_f64(in, b.data(), b.size());
  }
  if (!in) fail(ErrorCode::kMissingCheckpoint, "truncated checkpoint '" + path + "'");
  return net;
}

}  // namespace adagauss
