#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "certcc/box.hpp"

namespace certcc {

enum class LayerKind { fully_connected, batch_norm, leaky_relu, tanh };

struct LayerSpec {
  LayerKind kind = LayerKind::fully_connected;
  int in_dim = 0;
  int out_dim = 0;
  double slope = 0.2;    // leaky_relu only
  double epsilon = 1e-3; // batch_norm only
};

/// Batch-norm behaviour for a concrete pass.
enum class Mode {
  inference,  // running statistics
  training,   // batch statistics
};

/// Per-pass intermediate values needed by backward().
struct Tape {
  std::vector<Matrix> inputs;     // input of each layer, columns are samples
  std::vector<Vector> batch_mean; // batch_norm layers in training mode
  std::vector<Vector> batch_var;
  Mode mode = Mode::inference;
};

/// Interval-pass intermediates, one (center, deviation) pair per layer input.
struct AbstractTape {
  std::vector<Vector> centers;
  std::vector<Vector> deviations;
};

/// Feed-forward network with a flat parameter vector.
///
/// Fully connected weights are stored column-major (out x in) followed by the
/// bias; batch-norm layers own (gamma, beta) in the parameter vector and
/// (running_mean, running_var) in a separate statistics vector that is never
/// touched by gradient updates.
class Network {
 public:
  Network(int input_dim, std::vector<LayerSpec> layers);

  /// FC-h -> BN -> LeakyReLU -> FC-h -> BN -> LeakyReLU -> FC-1 -> tanh.
  static Network actor(int input_dim, int hidden, double slope = 0.2);
  /// FC-h -> LeakyReLU -> FC-h -> LeakyReLU -> FC-1 (unbounded output).
  static Network critic(int input_dim, int hidden, double slope = 0.2);

  /// Compact architecture string, e.g. "in=60;fc:32;bn;lrelu:0.2;fc:1;tanh".
  std::string architecture() const;
  static Network from_architecture(const std::string& arch);

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases; BN gamma=1,
  /// beta=0, running mean 0 and variance 1.
  void initialize(std::mt19937_64& rng);

  int input_dim() const { return input_dim_; }
  int output_dim() const { return layers_.back().out_dim; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  bool bounded_output() const { return layers_.back().kind == LayerKind::tanh; }

  Vector& params() { return params_; }
  const Vector& params() const { return params_; }
  Vector& bn_stats() { return stats_; }
  const Vector& bn_stats() const { return stats_; }

  double bn_momentum() const { return bn_momentum_; }
  void set_bn_momentum(double m) { bn_momentum_ = m; }

  /// Single-output inference pass.
  double forward(const Vector& x) const;
  Matrix forward_batch(const Matrix& x, Mode mode, Tape* tape = nullptr) const;

  /// Sound output bounds for every input in `box` (inference-mode BN).
  Interval forward_abstract(const Box& box, AbstractTape* tape = nullptr) const;
  Box forward_abstract_box(const Box& box, AbstractTape* tape = nullptr) const;

  /// Backpropagates `grad_out` (output_dim x batch). Parameter gradients are
  /// accumulated into `grad_params`; returns the gradient w.r.t. the input.
  Matrix backward(const Tape& tape, const Matrix& grad_out, Vector& grad_params) const;

  /// Gradient of the output bounds w.r.t. parameters given d/d(lo), d/d(hi).
  void backward_abstract(const AbstractTape& tape, double grad_lo, double grad_hi,
                         Vector& grad_params) const;

  /// d(output)/d(params) * upstream for a single state.
  Vector gradients(const Vector& state, double upstream, Mode mode = Mode::inference) const;

  /// Folds the batch statistics recorded on a training-mode tape into the
  /// running statistics: r <- (1 - momentum) r + momentum * batch.
  void update_running_stats(const Tape& tape);

  std::size_t param_count() const { return static_cast<std::size_t>(params_.size()); }

  bool all_finite() const;

 private:
  struct Slot {
    Eigen::Index param_offset = 0;
    Eigen::Index stats_offset = 0;
  };

  void check_input(Eigen::Index rows) const;

  int input_dim_;
  std::vector<LayerSpec> layers_;
  std::vector<Slot> slots_;
  Vector params_;
  Vector stats_;
  double bn_momentum_ = 0.01;
};

}  // namespace certcc
