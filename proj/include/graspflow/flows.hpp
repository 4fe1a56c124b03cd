#pragma once

#include "graspflow/mlp.hpp"
#include "graspflow/tape.hpp"
#include "graspflow/types.hpp"

#include <string>
#include <variant>
#include <vector>

namespace graspflow {

// Layers are written in two directions:
//   normalize  data -> base   (recorded on a tape; used for log-probabilities and training)
//   generate   base -> data   (tape-free; used for sampling)
// `logdet` arguments accumulate log|det J| of the direction being evaluated.

/// Per-dimension affine layer: generate x = exp(log_scale) * u + shift.
class ActNorm {
 public:
  ActNorm() = default;
  ActNorm(const std::string& name, Index dim);

  void set_identity();
  /// Data-dependent init from the values entering the layer in the normalize direction.
  void initialize(const Matrix& x);
  bool initialized() const { return initialized_.value(0, 0) != 0.0; }

  Var normalize(Tape& tape, Var x, Var& logdet) const;
  Matrix generate(const Matrix& u, Vector& logdet) const;

  Parameter log_scale;
  Parameter shift;

  std::vector<Parameter*> parameters() { return {&log_scale, &shift}; }
  std::vector<Parameter*> buffers() { return {&initialized_}; }

 private:
  void check_initialized() const;
  Parameter initialized_;
};

/// Dense invertible linear map W = P L U acting on row vectors (normalize u = x W).
class InvLinear {
 public:
  InvLinear() = default;
  InvLinear(const std::string& name, Index dim);

  void set_identity();
  /// LU factors of a random rotation.
  void randomize(Rng& rng);

  Var normalize(Tape& tape, Var x, Var& logdet) const;
  Matrix generate(const Matrix& u, Vector& logdet) const;

  /// W assembled from the factors.
  Matrix weight() const;
  double log_abs_det() const { return log_diag.value.sum(); }

  Parameter lower;
  Parameter upper;
  Parameter log_diag;

  std::vector<Parameter*> parameters() { return {&lower, &upper, &log_diag}; }
  std::vector<Parameter*> buffers() { return {&perm_, &sign_}; }
  void validate_buffers() const;

 private:
  std::vector<Index> permutation() const;
  Parameter perm_;  // stored as doubles so it serializes alongside the weights
  Parameter sign_;
};

/// Affine coupling. One part passes through unchanged and, together with the
/// context, drives an MLP that emits (log-scale, shift) for the other part.
class Coupling {
 public:
  Coupling() = default;
  Coupling(const std::string& name, Index dim, Index context_dim, bool swap,
           const std::vector<Index>& hidden, double scale_clamp, Rng& rng);

  Var normalize(Tape& tape, Var x, Var ctx, Var& logdet) const;
  Matrix generate(const Matrix& u, const Matrix& ctx, Vector& logdet) const;

  Index identity_start() const { return swap_ ? split_ : 0; }
  Index identity_size() const { return swap_ ? dim_ - split_ : split_; }
  Index transformed_start() const { return swap_ ? 0 : split_; }
  Index transformed_size() const { return dim_ - identity_size(); }
  double scale_clamp() const { return clamp_; }

  Mlp conditioner;
  std::vector<Parameter*> parameters() { return conditioner.parameters(); }

 private:
  Index dim_ = 0;
  Index split_ = 0;
  bool swap_ = false;
  double clamp_ = 5.0;
};

enum class BaseKind { standard_normal, conditional_normal };

/// Base density p_u. The conditional form maps the context to a diagonal Gaussian
/// whose log-std is clamped to [-7, 7].
class BaseDistribution {
 public:
  static constexpr double kLogStdClamp = 7.0;

  BaseDistribution() = default;
  BaseDistribution(const std::string& name, BaseKind kind, Index dim, Index context_dim,
                   const std::vector<Index>& hidden, Rng& rng);

  Var log_prob(Tape& tape, Var u, Var ctx) const;
  /// Mean and log-std per row of `ctx` (rows x dim each).
  std::pair<Matrix, Matrix> moments(const Matrix& ctx, Index rows) const;
  Matrix sample(const Matrix& ctx, Index n, Rng& rng) const;

  BaseKind kind() const { return kind_; }
  Mlp net;  // empty for the standard kind
  std::vector<Parameter*> parameters() {
    return kind_ == BaseKind::conditional_normal ? net.parameters() : std::vector<Parameter*>{};
  }

 private:
  BaseKind kind_ = BaseKind::standard_normal;
  Index dim_ = 0;
};

using FlowLayer = std::variant<ActNorm, InvLinear, Coupling>;

struct FlowConfig {
  Index dim = 2;
  Index context_dim = 0;
  int blocks = 8;
  std::vector<Index> conditioner_hidden{64, 64, 64};  // 4 linear layers
  double scale_clamp = 5.0;
  BaseKind base = BaseKind::standard_normal;
  std::vector<Index> base_hidden{64, 64};
};

enum class FlowInit {
  identity,  // every layer is the identity map; actnorm counts as initialized
  random,    // random rotations, zero-output couplings, actnorm awaiting data init
};

/// K blocks of (actnorm -> invertible linear -> coupling) in the normalize
/// direction, followed by the base density.
class FlowStack {
 public:
  struct Transformed {
    Matrix value;
    Vector logdet;
  };
  struct Samples {
    Matrix x;
    Vector log_prob;
    Matrix base;  // the u draws that produced x
  };

  FlowStack() = default;
  FlowStack(const std::string& name, const FlowConfig& config, FlowInit init, Rng& rng);

  /// Differentiable log p(x | ctx), one row per item (rows x 1).
  Var log_prob(Tape& tape, Var x, Var ctx) const;
  /// Differentiable normalize pass: u = T^{-1}(x) and log|det J_{T^{-1}}| (rows x 1).
  std::pair<Var, Var> normalize(Tape& tape, Var x, Var ctx) const;

  // Tape-free evaluations. `ctx` may have one row (broadcast) or one row per item.
  Transformed forward(const Matrix& u, const Matrix& ctx) const;
  Transformed inverse(const Matrix& x, const Matrix& ctx) const;
  Vector log_prob(const Matrix& x, const Matrix& ctx) const;
  Samples sample(const Matrix& ctx, Index n, Rng& rng) const;
  /// Same as `sample` with caller-supplied standard-normal noise (n x dim).
  Samples sample_from_noise(const Matrix& ctx, const Matrix& noise) const;

  void initialize_actnorm(const Matrix& x, const Matrix& ctx);
  bool initialized() const;

  const FlowConfig& config() const { return config_; }
  Index dim() const { return config_.dim; }
  Index context_dim() const { return config_.context_dim; }
  std::vector<FlowLayer>& layers() { return layers_; }
  const std::vector<FlowLayer>& layers() const { return layers_; }
  BaseDistribution& base() { return base_; }
  const BaseDistribution& base() const { return base_; }

  std::vector<Parameter*> parameters();
  /// Parameters followed by non-trainable buffers, in a stable declared order.
  std::vector<Parameter*> state();
  void validate() const;

 private:
  Matrix broadcast_context(const Matrix& ctx, Index rows) const;
  Var normalize_layers(Tape& tape, Var x, Var ctx, Var& logdet, std::size_t layer_count) const;

  FlowConfig config_;
  std::vector<FlowLayer> layers_;
  BaseDistribution base_;
};

/// Generate-direction pass through a single layer (used for per-layer log-det checks).
Matrix generate_layer(const FlowLayer& layer, const Matrix& u, const Matrix& ctx, Vector& logdet);

}  // namespace graspflow
