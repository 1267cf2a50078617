#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "sfess/random.hpp"

// Minimal feedforward network with explicit forward and backward passes.
// Batches are matrices whose columns are examples.

namespace sfess::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class LayerKind { linear, relu, sigmoid, softmax, dropout };
enum class Mode { train, eval };

struct Layer {
  LayerKind kind = LayerKind::linear;
  std::size_t in = 0;
  std::size_t out = 0;
  Matrix weights;  // out x in (linear only)
  Matrix bias;     // out x 1 (linear only)
  double rate = 0.0;  // dropout only
};

/// One mask per dropout layer, already scaled by 1 / (1 - rate).
struct DropoutNoise {
  std::vector<Matrix> masks;
  /// Repeats every column block `times` times horizontally.
  DropoutNoise tiled(std::size_t times) const;
};

struct ForwardCache {
  std::vector<Matrix> activations;  // activations[l] is the input to layer l; back() is the output
  std::vector<Matrix> dropout_masks;
  bool valid() const { return !activations.empty(); }
};

struct Gradients {
  std::vector<Matrix> params;  // same order as Network::parameters()
  Matrix input;                // empty unless requested
};

class Network {
 public:
  Network() = default;
  explicit Network(std::size_t input_dim) : input_dim_(input_dim) {}

  Network& linear(std::size_t out);
  Network& relu();
  Network& sigmoid();
  Network& softmax();
  Network& dropout(double rate);

  /// Weights uniform in +-1/sqrt(fan_in), biases zero.
  void initialize(Rng& rng);

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t output_dim() const noexcept;
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }
  bool has_dropout() const noexcept;

  /// In train mode, dropout uses `noise` when given, otherwise draws from
  /// `rng`; with neither, a network containing dropout throws. Eval mode is a
  /// pure function of the input.
  Matrix forward(const Matrix& input, Mode mode, const DropoutNoise* noise = nullptr,
                 ForwardCache* cache = nullptr, Rng* rng = nullptr) const;

  DropoutNoise sample_dropout(std::size_t columns, Rng& rng) const;

  /// Gradients of a scalar loss given dL/d(output). The input gradient is
  /// only formed when asked for, and each such request is counted.
  Gradients backward(const ForwardCache& cache, const Matrix& grad_output, bool want_input_grad) const;

  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;

  /// Number of backward passes that produced an input gradient.
  std::size_t input_gradient_calls() const noexcept { return input_gradient_calls_; }

 private:
  std::size_t input_dim_ = 0;
  std::vector<Layer> layers_;
  // Not synchronized: a Network has a single writer during training.
  mutable std::size_t input_gradient_calls_ = 0;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // added to the gradient as decay * param
};

struct AdamState {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<Matrix> first;
  std::vector<Matrix> second;
};

AdamState make_adam(std::span<const Matrix* const> params, const AdamConfig& config);
AdamState make_adam(std::span<Matrix* const> params, const AdamConfig& config);

/// One bias-corrected Adam update in place.
void adam_step(AdamState& state, std::span<Matrix* const> params, std::span<const Matrix> grads);

struct LossResult {
  Vector per_column;     // loss of each example
  Matrix grad;           // d per_column(j) / d output(:, j)
  std::size_t clamped = 0;  // outputs moved to [1e-12, 1 - 1e-12] before logs
  double mean() const { return per_column.size() ? per_column.mean() : 0.0; }
};

inline constexpr double kLossClamp = 1e-12;

/// Binary cross-entropy averaged over the rows of each column.
LossResult bce(const Matrix& output, const Matrix& target);
/// -log p[label] for probability columns.
LossResult cross_entropy(const Matrix& probabilities, std::span<const int> labels);

/// Text checkpoint holding layer shapes, parameters and optimizer state.
/// Values are written with 17 significant digits and reload bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const Network& net, const AdamState& adam);
struct Checkpoint {
  Network net;
  AdamState adam;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sfess::nn
