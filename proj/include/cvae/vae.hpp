#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cvae/chaos.hpp"
#include "cvae/nn.hpp"

// Variational autoencoder with a pluggable reparameterization noise source.
namespace cvae::vae {

using nn::Index;
using nn::Matrix;

inline constexpr double kLogVarClamp = 10.0;

enum class NoiseKind { kGaussian, kChaotic };

std::string to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& text);

struct NoiseConfig {
  NoiseKind kind = NoiseKind::kGaussian;
  std::uint64_t gaussian_seed = 0;
  double chaos_seed = 0.2;
  double chaos_lambda = chaos::kDefaultLambda;
  std::size_t chaos_burn_in = chaos::kDefaultBurnIn;
  chaos::NoiseMode chaos_transform = chaos::NoiseMode::kRaw;
};

// Supplies the epsilon tensor of the reparameterization.
class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  virtual Matrix sample(Index rows, Index cols) = 0;
};

class GaussianNoise final : public NoiseSource {
 public:
  explicit GaussianNoise(std::uint64_t seed) : rng_(seed) {}
  Matrix sample(Index rows, Index cols) override;

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

class ChaoticNoise final : public NoiseSource {
 public:
  ChaoticNoise(chaos::ChaoticGenerator generator, chaos::NoiseTransform transform)
      : generator_(generator), transform_(transform) {}
  Matrix sample(Index rows, Index cols) override;

  const chaos::ChaoticGenerator& generator() const { return generator_; }

 private:
  chaos::ChaoticGenerator generator_;
  chaos::NoiseTransform transform_;
};

std::unique_ptr<NoiseSource> make_noise_source(const NoiseConfig& config);

struct TrainConfig {
  std::size_t epochs = 100;
  double learning_rate = 0.001;
  double momentum = 0.009;
  nn::Activation activation = nn::Activation::kTanh;
  nn::OptimizerKind optimizer = nn::OptimizerKind::kAdam;
  int total_layers = 5;
  Index batch_size = 64;
  Index latent_dim = 2;
  NoiseConfig noise;
  std::uint64_t init_seed = 0;
};

struct Architecture {
  std::vector<Index> encoder;  // nf, hidden..., 2z
  std::vector<Index> decoder;  // z, hidden..., nf
};

// Splits `total_layers` trainable layers between encoder ((T+1)/2 layers,
// the last being the joint mu/log-variance head) and decoder (T/2 layers, the
// last being the reconstruction). Hidden widths taper geometrically between
// nf and z.
Architecture derive_architecture(Index features, Index latent_dim, int total_layers);

struct Encoding {
  Matrix mu;
  Matrix log_var;  // clamped to [-10, 10]
};

struct LossParts {
  double total = 0.0;
  double mse = 0.0;
  double kl = 0.0;
};

// Result of one differentiated pass through encode -> reparameterize -> decode.
struct StepResult {
  LossParts loss;
  nn::MlpGradients encoder;
  nn::MlpGradients decoder;
};

class VaeModel {
 public:
  VaeModel(Index features, Index latent_dim, int total_layers, nn::Activation activation,
           std::uint64_t init_seed);
  VaeModel(nn::Mlp encoder, nn::Mlp decoder, Index latent_dim);

  Index features() const { return encoder_.in_dim(); }
  Index latent_dim() const { return latent_dim_; }

  Encoding encode(const Matrix& batch);
  Matrix decode(const Matrix& latent);
  // Deterministic pass with Z = mu.
  Matrix reconstruct(const Matrix& batch);

  // Full forward and backward pass for a fixed epsilon. Parameters are not
  // modified.
  StepResult forward_backward(const Matrix& batch, const Matrix& noise);
  // Loss only, same path as forward_backward.
  LossParts evaluate_loss(const Matrix& batch, const Matrix& noise);

  const nn::Mlp& encoder() const { return encoder_; }
  const nn::Mlp& decoder() const { return decoder_; }
  nn::Mlp& mutable_encoder() { return encoder_; }
  nn::Mlp& mutable_decoder() { return decoder_; }

  // Encoder parameters followed by decoder parameters.
  std::vector<std::span<double>> parameters();

 private:
  nn::Mlp encoder_;
  nn::Mlp decoder_;
  Index latent_dim_;
};

// Z = mu + exp(log_var / 2) * eps, element-wise.
Matrix reparameterize(const Matrix& mu, const Matrix& log_var, const Matrix& noise);

// mse = mean of (X - X')^2 over all elements;
// kl = batch mean of -1/2 sum_j (1 + log_var - mu^2 - exp(log_var)).
LossParts vae_loss(const Matrix& batch, const Matrix& reconstruction, const Matrix& mu,
                   const Matrix& log_var);

struct TrainResult {
  std::vector<double> loss_trace;  // epoch-mean total loss, one entry per epoch
};

// Trains on class-0 rows. Each epoch shuffles rows with a generator seeded
// from init_seed, then steps through minibatches. Throws NonFiniteLoss.
TrainResult train(VaeModel& model, const Matrix& train_rows, const TrainConfig& config);
TrainResult train(VaeModel& model, const Matrix& train_rows, const TrainConfig& config,
                  NoiseSource& noise);

// The full loss evaluated in extended precision with one parameter shifted
// (views in VaeModel::parameters() order); reference for gradient checks.
nn::Extended reference_loss(const VaeModel& model, const Matrix& batch, const Matrix& noise,
                            const std::optional<nn::ParameterShift>& shift, nn::KinkSides* sides);

// Full-loss gradient check of the model for a fixed epsilon.
nn::GradCheckResult grad_check(VaeModel& model, const Matrix& batch, const Matrix& noise,
                               double step = 1e-5);

struct ModelHeader {
  NoiseConfig noise;
  std::string pipeline_id;
};

// Text container: magic + version, header, encoder and decoder MLP sections.
void save_model(std::ostream& out, const VaeModel& model, const ModelHeader& header);
VaeModel load_model(std::istream& in, ModelHeader* header = nullptr);

}  // namespace cvae::vae
