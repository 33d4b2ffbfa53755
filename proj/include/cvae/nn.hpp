#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cvae/errors.hpp"

// Dense MLP layers with hand-written backpropagation, SGD/Adam optimizers and
// a finite-difference gradient checker. Training runs in double precision.
namespace cvae::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class Activation { kRelu, kTanh, kLeakyRelu, kIdentity };

inline constexpr double kLeakySlope = 0.01;

std::string to_string(Activation activation);
// Accepts relu, tanh, leaky_relu (or leakyRelu) and identity.
Activation activation_from_string(const std::string& text);

double activate(Activation activation, double pre);
double activate_derivative(Activation activation, double pre);

struct LayerGradients {
  Matrix weights;
  Vector biases;
};

// y = act(x W^T + b) over a batch of row vectors.
class DenseLayer {
 public:
  DenseLayer(Index in_dim, Index out_dim, Activation activation);

  Index in_dim() const { return weights_.cols(); }
  Index out_dim() const { return weights_.rows(); }
  Activation activation() const { return activation_; }

  const Matrix& weights() const { return weights_; }
  const Vector& biases() const { return biases_; }
  // Mutable access drops the forward cache.
  Matrix& mutable_weights();
  Vector& mutable_biases();

  // Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  void glorot_init(std::mt19937_64& rng);

  Matrix forward(const Matrix& input);
  // Fills `grads` and returns the gradient with respect to the layer input.
  Matrix backward(const Matrix& upstream, LayerGradients& grads) const;

  bool has_cache() const { return has_cache_; }
  void invalidate_cache() { has_cache_ = false; }

 private:
  Matrix weights_;  // out_dim x in_dim
  Vector biases_;
  Activation activation_;

  Matrix input_;
  Matrix pre_activation_;
  bool has_cache_ = false;
};

struct MlpGradients {
  std::vector<LayerGradients> layers;
  Matrix input;  // dL/d(input)

  // Views in declared parameter order: w0, b0, w1, b1, ...
  std::vector<std::span<const double>> flat() const;
};

class Mlp {
 public:
  Mlp() = default;
  // Throws ShapeMismatch if consecutive layers do not chain.
  explicit Mlp(std::vector<DenseLayer> layers);

  // widths = {in, h1, ..., out}; hidden layers use `hidden`, the last layer
  // uses `output`. Weights are Glorot-initialised from `rng`.
  static Mlp build(std::span<const Index> widths, Activation hidden, Activation output,
                   std::mt19937_64& rng);

  Matrix forward(const Matrix& input);
  // Throws StaleCache unless every layer holds a forward cache for the
  // current parameters. Parameters are not modified.
  MlpGradients backward(const Matrix& loss_gradient) const;

  // Parameter views in declared order. The mutable overload drops caches.
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;
  std::size_t parameter_count() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers();
  bool empty() const { return layers_.empty(); }
  Index in_dim() const;
  Index out_dim() const;

 private:
  std::vector<DenseLayer> layers_;
};

// Serialises shapes, activation tags and parameters in declared order.
void write_mlp(std::ostream& out, const Mlp& mlp);
Mlp read_mlp(std::istream& in);

enum class OptimizerKind { kSgdMomentum, kAdam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& text);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 0.001;
  double momentum = 0.0;  // SGD only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// SGD:  v <- momentum * v - lr * g;  p <- p + v
// Adam: bias-corrected first/second moments, p <- p - lr * m_hat / (sqrt(v_hat) + eps)
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  // State is allocated on the first call and must match on every later call.
  void step(std::span<const std::span<double>> params,
            std::span<const std::span<const double>> grads);

  const OptimizerConfig& config() const { return config_; }
  std::size_t steps_taken() const { return steps_; }
  const std::vector<std::vector<double>>& velocity() const { return first_; }

 private:
  OptimizerConfig config_;
  std::vector<std::vector<double>> first_;   // SGD velocity or Adam m
  std::vector<std::vector<double>> second_;  // Adam v
  std::size_t steps_ = 0;
};

// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

// Reference evaluations for gradient checking run in extended precision so
// that the central difference is not dominated by rounding in the loss.
using Extended = long double;
using MatrixX = Eigen::Matrix<Extended, Eigen::Dynamic, Eigen::Dynamic>;

// One scalar parameter, addressed by its view in parameters() order and its
// offset inside that view, shifted by `delta`.
struct ParameterShift {
  std::size_t view = 0;
  std::size_t index = 0;
  Extended delta = 0.0L;
};

// Side of every non-differentiable point (relu / leaky-relu pre-activations,
// clamps) visited by a reference pass, in visiting order.
using KinkSides = std::vector<signed char>;

// Forward pass in extended precision, optionally with one parameter shifted.
MatrixX reference_forward(const Mlp& mlp, const MatrixX& input,
                          const std::optional<ParameterShift>& shift, KinkSides* sides);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  // Entries whose +-step evaluations landed on a different side of a kink
  // than the unshifted pass; a central difference there is not a derivative.
  std::size_t skipped_at_kinks = 0;
};

using ReferenceLoss =
    std::function<Extended(const std::optional<ParameterShift>& shift, KinkSides* sides)>;

// Compares every analytic entry with the central difference of `reference`
// at +-step, Richardson-extrapolated with the one at +-step/2.
GradCheckResult check_gradients(std::span<const std::span<const double>> analytic,
                                const ReferenceLoss& reference, double step = 1e-5);

// Loss over the network output in extended precision; writes dL/d(output)
// when `gradient` is set.
using LossFn = std::function<Extended(const MatrixX& output, Matrix* gradient)>;

GradCheckResult grad_check(Mlp& mlp, const LossFn& loss, const Matrix& input, double step = 1e-5);

}  // namespace cvae::nn
