#include "cvae/nn.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "cvae/text_io.hpp"

namespace cvae::nn {
namespace {

std::string shape_text(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

std::string expect_token(std::istream& in, const std::string& keyword) {
  std::string token;
  if (!(in >> token) || token != keyword) {
    throw InputError("model file: expected '" + keyword + "', found '" + token + "'");
  }
  return token;
}

Index read_index(std::istream& in) {
  std::string token;
  if (!(in >> token)) throw InputError("model file: unexpected end of input");
  const long long value = parse_integer(token);
  if (value < 0) throw InputError("model file: negative dimension");
  return static_cast<Index>(value);
}

double read_value(std::istream& in) {
  std::string token;
  if (!(in >> token)) throw InputError("model file: unexpected end of input");
  return parse_double(token);
}

}  // namespace

std::string to_string(Activation activation) {
  switch (activation) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kLeakyRelu: return "leaky_relu";
    case Activation::kIdentity: return "identity";
  }
  return "identity";
}

Activation activation_from_string(const std::string& text) {
  if (text == "relu") return Activation::kRelu;
  if (text == "tanh") return Activation::kTanh;
  if (text == "leaky_relu" || text == "leakyRelu" || text == "leakyrelu") {
    return Activation::kLeakyRelu;
  }
  if (text == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + text + "'");
}

double activate(Activation activation, double pre) {
  switch (activation) {
    case Activation::kRelu: return pre > 0.0 ? pre : 0.0;
    case Activation::kTanh: return std::tanh(pre);
    case Activation::kLeakyRelu: return pre > 0.0 ? pre : kLeakySlope * pre;
    case Activation::kIdentity: return pre;
  }
  return pre;
}

double activate_derivative(Activation activation, double pre) {
  switch (activation) {
    case Activation::kRelu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: {
      const double t = std::tanh(pre);
      return 1.0 - t * t;
    }
    case Activation::kLeakyRelu: return pre > 0.0 ? 1.0 : kLeakySlope;
    case Activation::kIdentity: return 1.0;
  }
  return 1.0;
}

DenseLayer::DenseLayer(Index in_dim, Index out_dim, Activation activation)
    : weights_(Matrix::Zero(out_dim, in_dim)),
      biases_(Vector::Zero(out_dim)),
      activation_(activation) {
  if (in_dim < 1 || out_dim < 1) throw ShapeMismatch("layer dimensions must be positive");
}

Matrix& DenseLayer::mutable_weights() {
  has_cache_ = false;
  return weights_;
}

Vector& DenseLayer::mutable_biases() {
  has_cache_ = false;
  return biases_;
}

void DenseLayer::glorot_init(std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in_dim() + out_dim()));
  std::uniform_real_distribution<double> uniform(-limit, limit);
  for (Index r = 0; r < weights_.rows(); ++r) {
    for (Index c = 0; c < weights_.cols(); ++c) weights_(r, c) = uniform(rng);
  }
  biases_.setZero();
  has_cache_ = false;
}

Matrix DenseLayer::forward(const Matrix& input) {
  if (input.cols() != in_dim()) {
    throw ShapeMismatch("layer expects width " + std::to_string(in_dim()) + ", got " +
                        shape_text(input));
  }
  if (!input.allFinite()) throw NonFiniteInput("non-finite value in layer input");
  input_ = input;
  pre_activation_ = input * weights_.transpose();
  pre_activation_.rowwise() += biases_.transpose();
  has_cache_ = true;
  return pre_activation_.unaryExpr([this](double v) { return activate(activation_, v); });
}

Matrix DenseLayer::backward(const Matrix& upstream, LayerGradients& grads) const {
  if (!has_cache_) throw StaleCache("backward() without a forward() on current parameters");
  if (upstream.rows() != pre_activation_.rows() || upstream.cols() != out_dim()) {
    throw ShapeMismatch("upstream gradient " + shape_text(upstream) + " does not match output " +
                        shape_text(pre_activation_));
  }
  const Matrix local = upstream.cwiseProduct(
      pre_activation_.unaryExpr([this](double v) { return activate_derivative(activation_, v); }));
  grads.weights = local.transpose() * input_;
  grads.biases = local.colwise().sum().transpose();
  return local * weights_;
}

std::vector<std::span<const double>> MlpGradients::flat() const {
  std::vector<std::span<const double>> views;
  views.reserve(layers.size() * 2);
  for (const auto& layer : layers) {
    views.emplace_back(layer.weights.data(), static_cast<std::size_t>(layer.weights.size()));
    views.emplace_back(layer.biases.data(), static_cast<std::size_t>(layer.biases.size()));
  }
  return views;
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 1; i < layers_.size(); ++i) {
    if (layers_[i].in_dim() != layers_[i - 1].out_dim()) {
      throw ShapeMismatch("layer " + std::to_string(i) + " input width " +
                          std::to_string(layers_[i].in_dim()) + " != previous output width " +
                          std::to_string(layers_[i - 1].out_dim()));
    }
  }
}

Mlp Mlp::build(std::span<const Index> widths, Activation hidden, Activation output,
               std::mt19937_64& rng) {
  if (widths.size() < 2) throw ShapeMismatch("an MLP needs at least input and output widths");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    layers.emplace_back(widths[i], widths[i + 1], last ? output : hidden);
    layers.back().glorot_init(rng);
  }
  return Mlp(std::move(layers));
}

Matrix Mlp::forward(const Matrix& input) {
  if (!layers_.empty() && input.cols() != in_dim()) {
    throw ShapeMismatch("network expects width " + std::to_string(in_dim()) + ", got " +
                        shape_text(input));
  }
  Matrix activations = input;
  for (auto& layer : layers_) activations = layer.forward(activations);
  return activations;
}

MlpGradients Mlp::backward(const Matrix& loss_gradient) const {
  MlpGradients grads;
  grads.layers.resize(layers_.size());
  Matrix upstream = loss_gradient;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    upstream = layers_[i].backward(upstream, grads.layers[i]);
  }
  grads.input = std::move(upstream);
  return grads;
}

std::vector<DenseLayer>& Mlp::mutable_layers() {
  for (auto& layer : layers_) layer.invalidate_cache();
  return layers_;
}

std::vector<std::span<double>> Mlp::parameters() {
  std::vector<std::span<double>> views;
  views.reserve(layers_.size() * 2);
  for (auto& layer : layers_) {
    auto& w = layer.mutable_weights();
    auto& b = layer.mutable_biases();
    views.emplace_back(w.data(), static_cast<std::size_t>(w.size()));
    views.emplace_back(b.data(), static_cast<std::size_t>(b.size()));
  }
  return views;
}

std::vector<std::span<const double>> Mlp::parameters() const {
  std::vector<std::span<const double>> views;
  views.reserve(layers_.size() * 2);
  for (const auto& layer : layers_) {
    views.emplace_back(layer.weights().data(), static_cast<std::size_t>(layer.weights().size()));
    views.emplace_back(layer.biases().data(), static_cast<std::size_t>(layer.biases().size()));
  }
  return views;
}

std::size_t Mlp::parameter_count() const {
  std::size_t count = 0;
  for (const auto& layer : layers_) {
    count += static_cast<std::size_t>(layer.weights().size() + layer.biases().size());
  }
  return count;
}

Index Mlp::in_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
Index Mlp::out_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }

void write_mlp(std::ostream& out, const Mlp& mlp) {
  out << "mlp " << mlp.layers().size() << '\n';
  for (const auto& layer : mlp.layers()) {
    out << "layer " << layer.in_dim() << ' ' << layer.out_dim() << ' '
        << to_string(layer.activation()) << '\n';
    out << "weights";
    for (Index r = 0; r < layer.weights().rows(); ++r) {
      for (Index c = 0; c < layer.weights().cols(); ++c) {
        out << ' ' << format_double(layer.weights()(r, c));
      }
    }
    out << "\nbiases";
    for (Index i = 0; i < layer.biases().size(); ++i) out << ' ' << format_double(layer.biases()(i));
    out << '\n';
  }
}

Mlp read_mlp(std::istream& in) {
  expect_token(in, "mlp");
  const Index count = read_index(in);
  std::vector<DenseLayer> layers;
  for (Index l = 0; l < count; ++l) {
    expect_token(in, "layer");
    const Index in_dim = read_index(in);
    const Index out_dim = read_index(in);
    std::string tag;
    in >> tag;
    DenseLayer layer(in_dim, out_dim, activation_from_string(tag));
    expect_token(in, "weights");
    auto& w = layer.mutable_weights();
    for (Index r = 0; r < out_dim; ++r) {
      for (Index c = 0; c < in_dim; ++c) w(r, c) = read_value(in);
    }
    expect_token(in, "biases");
    auto& b = layer.mutable_biases();
    for (Index i = 0; i < out_dim; ++i) b(i) = read_value(in);
    if (!w.allFinite() || !b.allFinite()) throw InputError("model file: non-finite parameter");
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

OptimizerKind optimizer_from_string(const std::string& text) {
  std::string lower = text;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "adam") return OptimizerKind::kAdam;
  if (lower == "sgd" || lower == "sgd_momentum") return OptimizerKind::kSgdMomentum;
  throw ConfigError("unknown optimizer '" + text + "'");
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) {
  if (!(config_.learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
}

void Optimizer::step(std::span<const std::span<double>> params,
                     std::span<const std::span<const double>> grads) {
  if (params.size() != grads.size()) {
    throw ShapeMismatch("optimizer got " + std::to_string(params.size()) + " parameters and " +
                        std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size()) {
      throw ShapeMismatch("parameter " + std::to_string(i) + " and its gradient differ in size");
    }
  }
  if (first_.empty()) {
    for (const auto& p : params) {
      first_.emplace_back(p.size(), 0.0);
      if (config_.kind == OptimizerKind::kAdam) second_.emplace_back(p.size(), 0.0);
    }
  } else {
    if (first_.size() != params.size()) throw ShapeMismatch("optimizer state shape changed");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (first_[i].size() != params[i].size()) {
        throw ShapeMismatch("optimizer state shape changed");
      }
    }
  }
  ++steps_;

  const double lr = config_.learning_rate;
  if (config_.kind == OptimizerKind::kSgdMomentum) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& velocity = first_[i];
      for (std::size_t j = 0; j < params[i].size(); ++j) {
        velocity[j] = config_.momentum * velocity[j] - lr * grads[i][j];
        params[i][j] += velocity[j];
      }
    }
    return;
  }

  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = first_[i];
    auto& v = second_[i];
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      const double g = grads[i][j];
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      params[i][j] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / scale;
}

namespace {

Extended activate_extended(Activation activation, Extended pre, KinkSides* sides) {
  switch (activation) {
    case Activation::kRelu:
    case Activation::kLeakyRelu: {
      if (sides != nullptr) sides->push_back(pre > 0 ? 1 : (pre < 0 ? -1 : 0));
      if (pre > 0) return pre;
      return activation == Activation::kRelu ? 0.0L : static_cast<Extended>(kLeakySlope) * pre;
    }
    case Activation::kTanh: return std::tanh(pre);
    case Activation::kIdentity: return pre;
  }
  return pre;
}

}  // namespace

MatrixX reference_forward(const Mlp& mlp, const MatrixX& input,
                          const std::optional<ParameterShift>& shift, KinkSides* sides) {
  MatrixX x = input;
  for (std::size_t l = 0; l < mlp.layers().size(); ++l) {
    const DenseLayer& layer = mlp.layers()[l];
    if (x.cols() != layer.in_dim()) throw ShapeMismatch("reference input width mismatch");
    MatrixX weights = layer.weights().cast<Extended>();
    Eigen::Matrix<Extended, Eigen::Dynamic, 1> biases = layer.biases().cast<Extended>();
    if (shift && shift->view == 2 * l) weights.data()[shift->index] += shift->delta;
    if (shift && shift->view == 2 * l + 1) biases(static_cast<Index>(shift->index)) += shift->delta;
    MatrixX out = x * weights.transpose();
    for (Index r = 0; r < out.rows(); ++r) {
      for (Index c = 0; c < out.cols(); ++c) {
        out(r, c) = activate_extended(layer.activation(), out(r, c) + biases(c), sides);
      }
    }
    x = std::move(out);
  }
  return x;
}

GradCheckResult check_gradients(std::span<const std::span<const double>> analytic,
                                const ReferenceLoss& reference, double step) {
  KinkSides base;
  reference(std::nullopt, &base);
  GradCheckResult result;
  const Extended h = step;
  for (std::size_t view = 0; view < analytic.size(); ++view) {
    for (std::size_t i = 0; i < analytic[view].size(); ++i) {
      // Central differences at h and h/2, combined to cancel the h^2 term.
      Extended values[4];
      const Extended offsets[4] = {h, -h, h / 2, -h / 2};
      bool straddles = false;
      for (int k = 0; k < 4; ++k) {
        KinkSides sides;
        values[k] = reference(ParameterShift{view, i, offsets[k]}, &sides);
        straddles = straddles || sides != base;
      }
      if (straddles) {
        ++result.skipped_at_kinks;
        continue;
      }
      const Extended wide = (values[0] - values[1]) / (2 * h);
      const Extended narrow = (values[2] - values[3]) / h;
      const auto numeric = static_cast<double>((4 * narrow - wide) / 3);
      result.max_relative_error =
          std::max(result.max_relative_error, relative_error(analytic[view][i], numeric));
      ++result.checked;
    }
  }
  return result;
}

GradCheckResult grad_check(Mlp& mlp, const LossFn& loss, const Matrix& input, double step) {
  Matrix upstream;
  const Matrix output = mlp.forward(input);
  loss(output.cast<Extended>(), &upstream);
  const MlpGradients grads = mlp.backward(upstream);
  const auto analytic = grads.flat();
  const MatrixX input_x = input.cast<Extended>();
  return check_gradients(
      analytic,
      [&](const std::optional<ParameterShift>& shift, KinkSides* sides) {
        return loss(reference_forward(mlp, input_x, shift, sides), nullptr);
      },
      step);
}

}  // namespace cvae::nn
