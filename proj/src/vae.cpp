#include "cvae/vae.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "cvae/text_io.hpp"

namespace cvae::vae {
namespace {

constexpr int kModelFormatVersion = 1;
constexpr std::uint64_t kShuffleStream = 0x9e3779b97f4a7c15ULL;

std::vector<Index> taper(Index from, Index to, int hidden) {
  std::vector<Index> widths;
  for (int k = 1; k <= hidden; ++k) {
    const double ratio = static_cast<double>(to) / static_cast<double>(from);
    const double width =
        static_cast<double>(from) * std::pow(ratio, static_cast<double>(k) / (hidden + 1));
    widths.push_back(std::max<Index>(1, static_cast<Index>(std::lround(width))));
  }
  return widths;
}

Matrix clamp_log_var(const Matrix& raw) {
  return raw.cwiseMax(-kLogVarClamp).cwiseMin(kLogVarClamp);
}

void append(std::vector<std::span<const double>>& into,
            const std::vector<std::span<const double>>& more) {
  into.insert(into.end(), more.begin(), more.end());
}

std::string read_keyword(std::istream& in, const std::string& keyword) {
  std::string token;
  if (!(in >> token) || token != keyword) {
    throw InputError("model file: expected '" + keyword + "', found '" + token + "'");
  }
  return token;
}

std::string read_token(std::istream& in) {
  std::string token;
  if (!(in >> token)) throw InputError("model file: unexpected end of input");
  return token;
}

}  // namespace

std::string to_string(NoiseKind kind) {
  return kind == NoiseKind::kGaussian ? "gaussian" : "chaotic";
}

NoiseKind noise_kind_from_string(const std::string& text) {
  if (text == "gaussian") return NoiseKind::kGaussian;
  if (text == "chaotic") return NoiseKind::kChaotic;
  throw ConfigError("unknown noise source '" + text + "'");
}

Matrix GaussianNoise::sample(Index rows, Index cols) {
  Matrix noise(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) noise(r, c) = normal_(rng_);
  }
  return noise;
}

Matrix ChaoticNoise::sample(Index rows, Index cols) {
  return chaos::sample_noise(generator_, transform_, rows, cols);
}

std::unique_ptr<NoiseSource> make_noise_source(const NoiseConfig& config) {
  if (config.kind == NoiseKind::kGaussian) {
    return std::make_unique<GaussianNoise>(config.gaussian_seed);
  }
  return std::make_unique<ChaoticNoise>(
      chaos::ChaoticGenerator(config.chaos_seed, config.chaos_lambda, config.chaos_burn_in),
      chaos::NoiseTransform{config.chaos_transform});
}

Architecture derive_architecture(Index features, Index latent_dim, int total_layers) {
  if (features < 1 || latent_dim < 1) throw ConfigError("features and latent_dim must be >= 1");
  if (total_layers < 2) throw ConfigError("a VAE needs at least 2 trainable layers");
  const int encoder_layers = (total_layers + 1) / 2;
  const int decoder_layers = total_layers / 2;

  Architecture arch;
  arch.encoder.push_back(features);
  for (Index w : taper(features, latent_dim, encoder_layers - 1)) arch.encoder.push_back(w);
  arch.encoder.push_back(2 * latent_dim);

  arch.decoder.push_back(latent_dim);
  for (Index w : taper(latent_dim, features, decoder_layers - 1)) arch.decoder.push_back(w);
  arch.decoder.push_back(features);
  return arch;
}

VaeModel::VaeModel(Index features, Index latent_dim, int total_layers,
                   nn::Activation activation, std::uint64_t init_seed)
    : latent_dim_(latent_dim) {
  const Architecture arch = derive_architecture(features, latent_dim, total_layers);
  std::mt19937_64 rng(init_seed);
  encoder_ = nn::Mlp::build(arch.encoder, activation, nn::Activation::kIdentity, rng);
  decoder_ = nn::Mlp::build(arch.decoder, activation, nn::Activation::kIdentity, rng);
}

VaeModel::VaeModel(nn::Mlp encoder, nn::Mlp decoder, Index latent_dim)
    : encoder_(std::move(encoder)), decoder_(std::move(decoder)), latent_dim_(latent_dim) {
  if (encoder_.empty() || decoder_.empty()) throw ShapeMismatch("encoder and decoder required");
  if (encoder_.out_dim() != 2 * latent_dim_) {
    throw ShapeMismatch("encoder output width must be 2 * latent_dim");
  }
  if (decoder_.in_dim() != latent_dim_) throw ShapeMismatch("decoder input width must be latent_dim");
  if (decoder_.out_dim() != encoder_.in_dim()) {
    throw ShapeMismatch("decoder output width must equal encoder input width");
  }
}

Encoding VaeModel::encode(const Matrix& batch) {
  const Matrix out = encoder_.forward(batch);
  return {out.leftCols(latent_dim_), clamp_log_var(out.rightCols(latent_dim_))};
}

Matrix VaeModel::decode(const Matrix& latent) {
  if (latent.cols() != latent_dim_) throw ShapeMismatch("latent width mismatch");
  return decoder_.forward(latent);
}

Matrix VaeModel::reconstruct(const Matrix& batch) { return decode(encode(batch).mu); }

Matrix reparameterize(const Matrix& mu, const Matrix& log_var, const Matrix& noise) {
  if (mu.rows() != log_var.rows() || mu.cols() != log_var.cols() || mu.rows() != noise.rows() ||
      mu.cols() != noise.cols()) {
    throw ShapeMismatch("mu, log_var and noise must share a shape");
  }
  return mu + (0.5 * log_var.array()).exp().matrix().cwiseProduct(noise);
}

LossParts vae_loss(const Matrix& batch, const Matrix& reconstruction, const Matrix& mu,
                   const Matrix& log_var) {
  if (batch.rows() != reconstruction.rows() || batch.cols() != reconstruction.cols()) {
    throw ShapeMismatch("batch and reconstruction shapes differ");
  }
  if (mu.rows() != log_var.rows() || mu.cols() != log_var.cols() || mu.rows() != batch.rows()) {
    throw ShapeMismatch("mu / log_var shape mismatch");
  }
  LossParts parts;
  parts.mse = (batch - reconstruction).squaredNorm() / static_cast<double>(batch.size());
  const auto terms = 1.0 + log_var.array() - mu.array().square() - log_var.array().exp();
  parts.kl = -0.5 * terms.sum() / static_cast<double>(batch.rows());
  parts.total = parts.mse + parts.kl;
  return parts;
}

StepResult VaeModel::forward_backward(const Matrix& batch, const Matrix& noise) {
  const Matrix encoded = encoder_.forward(batch);
  const Matrix mu = encoded.leftCols(latent_dim_);
  const Matrix raw_log_var = encoded.rightCols(latent_dim_);
  const Matrix log_var = clamp_log_var(raw_log_var);
  const Matrix latent = reparameterize(mu, log_var, noise);
  const Matrix reconstruction = decoder_.forward(latent);

  StepResult result;
  result.loss = vae_loss(batch, reconstruction, mu, log_var);

  const double rows = static_cast<double>(batch.rows());
  const Matrix d_reconstruction =
      2.0 * (reconstruction - batch) / static_cast<double>(batch.size());
  result.decoder = decoder_.backward(d_reconstruction);
  const Matrix& d_latent = result.decoder.input;

  const Matrix sigma = (0.5 * log_var.array()).exp().matrix();
  Matrix d_encoded(batch.rows(), 2 * latent_dim_);
  d_encoded.leftCols(latent_dim_) = d_latent + mu / rows;
  Matrix d_log_var = 0.5 * d_latent.cwiseProduct(sigma).cwiseProduct(noise) +
                     0.5 * (log_var.array().exp() - 1.0).matrix() / rows;
  for (Index r = 0; r < d_log_var.rows(); ++r) {
    for (Index c = 0; c < d_log_var.cols(); ++c) {
      if (raw_log_var(r, c) < -kLogVarClamp || raw_log_var(r, c) > kLogVarClamp) {
        d_log_var(r, c) = 0.0;
      }
    }
  }
  d_encoded.rightCols(latent_dim_) = d_log_var;
  result.encoder = encoder_.backward(d_encoded);
  return result;
}

LossParts VaeModel::evaluate_loss(const Matrix& batch, const Matrix& noise) {
  const Encoding enc = encode(batch);
  const Matrix reconstruction = decode(reparameterize(enc.mu, enc.log_var, noise));
  return vae_loss(batch, reconstruction, enc.mu, enc.log_var);
}

std::vector<std::span<double>> VaeModel::parameters() {
  auto params = encoder_.parameters();
  auto decoder_params = decoder_.parameters();
  params.insert(params.end(), decoder_params.begin(), decoder_params.end());
  return params;
}

TrainResult train(VaeModel& model, const Matrix& train_rows, const TrainConfig& config) {
  if (config.epochs == 0) return {};
  auto noise = make_noise_source(config.noise);
  return train(model, train_rows, config, *noise);
}

TrainResult train(VaeModel& model, const Matrix& train_rows, const TrainConfig& config,
                  NoiseSource& noise) {
  TrainResult result;
  if (config.epochs == 0) return result;
  if (train_rows.rows() < 1) throw EmptyTraining("no training rows");
  if (train_rows.cols() != model.features()) {
    throw ShapeMismatch("training data has " + std::to_string(train_rows.cols()) +
                        " features, model expects " + std::to_string(model.features()));
  }
  if (config.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(config.learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!train_rows.allFinite()) throw NonFiniteInput("training data contains non-finite values");

  nn::Optimizer optimizer({.kind = config.optimizer,
                           .learning_rate = config.learning_rate,
                           .momentum = config.momentum});
  std::mt19937_64 shuffle_rng(config.init_seed ^ kShuffleStream);
  const Index n = train_rows.rows();
  std::vector<Index> order(static_cast<std::size_t>(n));

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (Index start = 0; start < n; start += config.batch_size) {
      const Index rows = std::min(config.batch_size, n - start);
      Matrix batch(rows, train_rows.cols());
      for (Index r = 0; r < rows; ++r) {
        batch.row(r) = train_rows.row(order[static_cast<std::size_t>(start + r)]);
      }
      const Matrix eps = noise.sample(rows, model.latent_dim());
      StepResult step;
      try {
        step = model.forward_backward(batch, eps);
      } catch (const NonFiniteInput& e) {
        // The rows were checked up front, so this is an intermediate blowing up.
        throw NonFiniteLoss(epoch, std::string("training diverged: ") + e.what());
      }
      if (!std::isfinite(step.loss.total)) {
        throw NonFiniteLoss(epoch, "loss diverged in epoch " + std::to_string(epoch + 1));
      }
      auto grads = step.encoder.flat();
      append(grads, step.decoder.flat());
      optimizer.step(model.parameters(), grads);
      loss_sum += step.loss.total * static_cast<double>(rows);
    }
    for (const auto view : std::as_const(model).encoder().parameters()) {
      if (!std::all_of(view.begin(), view.end(), [](double v) { return std::isfinite(v); })) {
        throw NonFiniteLoss(epoch, "non-finite encoder parameter after epoch " +
                                       std::to_string(epoch + 1));
      }
    }
    for (const auto view : std::as_const(model).decoder().parameters()) {
      if (!std::all_of(view.begin(), view.end(), [](double v) { return std::isfinite(v); })) {
        throw NonFiniteLoss(epoch, "non-finite decoder parameter after epoch " +
                                       std::to_string(epoch + 1));
      }
    }
    result.loss_trace.push_back(loss_sum / static_cast<double>(n));
  }
  return result;
}

nn::Extended reference_loss(const VaeModel& model, const Matrix& batch, const Matrix& noise,
                            const std::optional<nn::ParameterShift>& shift, nn::KinkSides* sides) {
  using nn::Extended;
  using nn::MatrixX;
  const std::size_t encoder_views = 2 * model.encoder().layers().size();
  std::optional<nn::ParameterShift> encoder_shift, decoder_shift;
  if (shift && shift->view < encoder_views) encoder_shift = shift;
  if (shift && shift->view >= encoder_views) {
    decoder_shift = nn::ParameterShift{shift->view - encoder_views, shift->index, shift->delta};
  }

  const MatrixX x = batch.cast<Extended>();
  const MatrixX encoded = nn::reference_forward(model.encoder(), x, encoder_shift, sides);
  const Index z = model.latent_dim();
  const MatrixX mu = encoded.leftCols(z);
  MatrixX log_var = encoded.rightCols(z);
  const auto bound = static_cast<Extended>(kLogVarClamp);
  for (Index r = 0; r < log_var.rows(); ++r) {
    for (Index c = 0; c < log_var.cols(); ++c) {
      Extended& v = log_var(r, c);
      if (sides != nullptr) sides->push_back(v < -bound ? -1 : (v > bound ? 1 : 0));
      v = std::clamp(v, -bound, bound);
    }
  }
  const MatrixX latent =
      mu + ((0.5L * log_var.array()).exp() * noise.cast<Extended>().array()).matrix();
  const MatrixX reconstruction = nn::reference_forward(model.decoder(), latent, decoder_shift, sides);

  const auto rows = static_cast<Extended>(batch.rows());
  const Extended mse = (x - reconstruction).squaredNorm() / static_cast<Extended>(batch.size());
  const Extended kl =
      -0.5L * (1.0L + log_var.array() - mu.array().square() - log_var.array().exp()).sum() / rows;
  return mse + kl;
}

nn::GradCheckResult grad_check(VaeModel& model, const Matrix& batch, const Matrix& noise,
                               double step) {
  const StepResult analytic_step = model.forward_backward(batch, noise);
  auto analytic = analytic_step.encoder.flat();
  append(analytic, analytic_step.decoder.flat());
  return nn::check_gradients(
      analytic,
      [&](const std::optional<nn::ParameterShift>& shift, nn::KinkSides* sides) {
        return reference_loss(model, batch, noise, shift, sides);
      },
      step);
}

void save_model(std::ostream& out, const VaeModel& model, const ModelHeader& header) {
  out << "cvae-model " << kModelFormatVersion << '\n';
  out << "latent_dim " << model.latent_dim() << '\n';
  const NoiseConfig& noise = header.noise;
  out << "noise " << to_string(noise.kind) << ' ' << noise.gaussian_seed << ' '
      << format_double(noise.chaos_seed) << ' ' << format_double(noise.chaos_lambda) << ' '
      << noise.chaos_burn_in << ' ' << chaos::to_string(noise.chaos_transform) << '\n';
  out << "pipeline " << (header.pipeline_id.empty() ? "-" : header.pipeline_id) << '\n';
  out << "encoder\n";
  nn::write_mlp(out, model.encoder());
  out << "decoder\n";
  nn::write_mlp(out, model.decoder());
  out << "end\n";
}

VaeModel load_model(std::istream& in, ModelHeader* header) {
  // Leading comment lines are allowed before the magic.
  while (in >> std::ws && in.peek() == '#') {
    std::string skipped;
    std::getline(in, skipped);
  }
  read_keyword(in, "cvae-model");
  const long long version = parse_integer(read_token(in));
  if (version != kModelFormatVersion) {
    throw InputError("unsupported model format version " + std::to_string(version));
  }
  read_keyword(in, "latent_dim");
  const Index latent_dim = static_cast<Index>(parse_integer(read_token(in)));
  read_keyword(in, "noise");
  ModelHeader parsed;
  parsed.noise.kind = noise_kind_from_string(read_token(in));
  parsed.noise.gaussian_seed = static_cast<std::uint64_t>(parse_integer(read_token(in)));
  parsed.noise.chaos_seed = parse_double(read_token(in));
  parsed.noise.chaos_lambda = parse_double(read_token(in));
  parsed.noise.chaos_burn_in = static_cast<std::size_t>(parse_integer(read_token(in)));
  parsed.noise.chaos_transform = chaos::noise_mode_from_string(read_token(in));
  read_keyword(in, "pipeline");
  parsed.pipeline_id = read_token(in);
  if (parsed.pipeline_id == "-") parsed.pipeline_id.clear();
  read_keyword(in, "encoder");
  nn::Mlp encoder = nn::read_mlp(in);
  read_keyword(in, "decoder");
  nn::Mlp decoder = nn::read_mlp(in);
  read_keyword(in, "end");
  if (header != nullptr) *header = parsed;
  return VaeModel(std::move(encoder), std::move(decoder), latent_dim);
}

}  // namespace cvae::vae
