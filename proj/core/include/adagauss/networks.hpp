#pragma once

#include <string>
#include <vector>

#include "adagauss/autodiff.hpp"
#include "adagauss/linalg.hpp"

namespace adagauss {

struct NetworkConfig {
  int input_dim = 0;
  std::vector<int> hidden_dims;
  int latent_dim = 0;                 // width of the linear bottleneck output
  int projector_hidden_factor = 32;   // projector/adapter hidden = factor · latent_dim
  // Multiplier on the bottleneck layer's init; > 1 starts the latent
  // covariance at a scale where the anti-collapse floor is already active.
  double bottleneck_init_scale = 2.0;
  // The distillation projector is freshly He-initialized every task (its
  // settling transient is part of training); the adapter defaults to a
  // near-identity start since the drift it must learn is a perturbation of
  // the identity.
  bool identity_init_projector = false;
  bool identity_init_adapter = true;
  // He-init multiplier for a freshly initialized projector. Small values
  // start the projector near the zero map, which gates the distillation
  // gradient while the projector settles.
  double projector_init_scale = 1.0;
};

void validate(const NetworkConfig& config);

// Plain MLP: affine layers with ReLU between them and a bare affine at the
// end. The feature extractor, the distillation projector, the adapter and the
// per-task heads are all instances with different layer widths.
class Mlp {
 public:
  Mlp() = default;
  // He-uniform weights scaled by fan-in, zero biases, deterministic given rng.
  Mlp(std::string name, std::vector<int> dims, SeededRng& rng);

  // Adds the input to the final affine output (requires matching end dims).
  // A residual map stays anchored to the identity far from its training
  // region instead of saturating to a constant.
  void set_residual(bool residual);
  bool residual() const { return residual_; }

  // Forward pass that registers the weights as trainable tape parameters.
  Value forward(Tape& tape, Value x);
  // Forward pass with weights recorded as constants: gradient reaches x but
  // never the weights (used for frozen heads in the logit-distillation path).
  Value forward_frozen(Tape& tape, Value x) const;
  // Forward with no tape at all.
  Matrix forward_nograd(const Matrix& x) const;

  // Deep copy excluded from training; forward(Tape&) on a frozen copy throws.
  Mlp clone_frozen() const;
  bool frozen() const { return frozen_; }

  std::vector<Parameter*> parameters();
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  const std::vector<int>& dims() const { return dims_; }
  const std::string& name() const { return name_; }
  int parameter_count() const;

  // Direct weight access, used by tests that construct exact affine maps and
  // by the checkpoint reader/writer.
  Parameter& weight(int layer) { return weights_[static_cast<size_t>(layer)]; }
  Parameter& bias(int layer) { return biases_[static_cast<size_t>(layer)]; }
  const Parameter& weight(int layer) const { return weights_[static_cast<size_t>(layer)]; }
  const Parameter& bias(int layer) const { return biases_[static_cast<size_t>(layer)]; }
  int layer_count() const { return static_cast<int>(weights_.size()); }

 private:
  std::string name_;
  std::vector<int> dims_;
  std::vector<Parameter> weights_;
  std::vector<Parameter> biases_;
  bool frozen_ = false;
  bool residual_ = false;
};

// Extractor: input → hidden... → latent, with the final affine left linear
// (the bottleneck that defines the latent space).
Mlp make_feature_extractor(const NetworkConfig& config, SeededRng& rng);
// Projector φ and adapter ψ share the same 2-layer shape
// latent → factor·latent → latent.
Mlp make_projector(const NetworkConfig& config, SeededRng& rng);
Mlp make_adapter(const NetworkConfig& config, SeededRng& rng);
// Linear head over one task's classes.
Mlp make_task_head(int latent_dim, int num_classes, SeededRng& rng);

// Builds a 2-layer ReLU network that computes exactly x ↦ A·x + b via the
// relu(x) − relu(−x) identity. Used by transport oracles in tests.
Mlp make_exact_affine_map(const Matrix& a, const Vector& b);

// Little-endian binary checkpoint: magic "AGNET1", layer widths, then
// parameters in declaration order as 64-bit floats.
void save_network(const Mlp& net, const std::string& path);
Mlp load_network(const std::string& path);

}  // namespace adagauss
