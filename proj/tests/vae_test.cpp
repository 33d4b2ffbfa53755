#include "cvae/vae.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "cvae/data.hpp"
#include "cvae/occ.hpp"
#include "support/oracles.hpp"

namespace cvae::vae {
namespace {

Matrix blob_rows(std::uint64_t seed, Index rows, Index features) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  Matrix m(rows, features);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < features; ++c) {
      m(r, c) = std::clamp(0.3 + 0.1 * static_cast<double>(c) + noise(rng), 0.0, 1.0);
    }
  }
  return m;
}

Matrix uniform_matrix(Index rows, Index cols, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = u(rng);
  }
  return m;
}

void zero_parameters(VaeModel& model) {
  for (auto view : model.parameters()) std::fill(view.begin(), view.end(), 0.0);
}

std::vector<std::vector<double>> snapshot(const VaeModel& model) {
  std::vector<std::vector<double>> out;
  for (auto view : model.encoder().parameters()) out.emplace_back(view.begin(), view.end());
  for (auto view : model.decoder().parameters()) out.emplace_back(view.begin(), view.end());
  return out;
}

class ReplayNoise final : public NoiseSource {
 public:
  explicit ReplayNoise(std::vector<Matrix> tape) : tape_(std::move(tape)) {}
  Matrix sample(Index, Index) override { return tape_.at(next_++); }

 private:
  std::vector<Matrix> tape_;
  std::size_t next_ = 0;
};

class RecordingNoise final : public NoiseSource {
 public:
  explicit RecordingNoise(NoiseSource& inner) : inner_(inner) {}
  Matrix sample(Index rows, Index cols) override {
    tape.push_back(inner_.sample(rows, cols));
    return tape.back();
  }
  std::vector<Matrix> tape;

 private:
  NoiseSource& inner_;
};

class NanNoise final : public NoiseSource {
 public:
  Matrix sample(Index rows, Index cols) override {
    return Matrix::Constant(rows, cols, std::numeric_limits<double>::quiet_NaN());
  }
};

TEST(Architecture, DerivedWidths) {
  const Architecture five = derive_architecture(8, 2, 5);
  EXPECT_EQ(five.encoder, (std::vector<Index>{8, 5, 3, 4}));
  EXPECT_EQ(five.decoder, (std::vector<Index>{2, 4, 8}));
  const Architecture seven = derive_architecture(30, 2, 7);
  EXPECT_EQ(seven.encoder.size() - 1 + seven.decoder.size() - 1, 7u);
  EXPECT_EQ(seven.encoder.front(), 30);
  EXPECT_EQ(seven.encoder.back(), 4);
  EXPECT_EQ(seven.decoder.front(), 2);
  EXPECT_EQ(seven.decoder.back(), 30);
  EXPECT_TRUE(std::is_sorted(seven.encoder.rbegin() + 1, seven.encoder.rend()));
  EXPECT_THROW(derive_architecture(8, 2, 1), ConfigError);
}

TEST(Encode, ZeroParametersGiveStandardPosterior) {
  VaeModel model(6, 3, 5, nn::Activation::kRelu, 1);
  zero_parameters(model);
  std::mt19937_64 rng(2);
  const Encoding enc = model.encode(uniform_matrix(4, 6, rng, 0.0, 1.0));
  EXPECT_EQ(enc.mu.cols(), 3);
  EXPECT_EQ(enc.log_var.cols(), 3);
  EXPECT_EQ(enc.mu.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(enc.log_var.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Encode, SplitsHeadsAndMatchesLoopOracle) {
  VaeModel model(7, 2, 7, nn::Activation::kTanh, 4);
  std::mt19937_64 rng(3);
  const Matrix batch = uniform_matrix(5, 7, rng, 0.0, 1.0);
  const Matrix full = testing::loop_forward(model.encoder(), batch);
  ASSERT_EQ(full.cols(), 4);
  const Encoding enc = model.encode(batch);
  EXPECT_LT((enc.mu - full.leftCols(2)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((enc.log_var - full.rightCols(2)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(model.encode(Matrix::Zero(2, 6)), ShapeMismatch);
}

TEST(Encode, LogVarisClamped) {
  VaeModel model(3, 1, 3, nn::Activation::kTanh, 1);
  auto& head = model.mutable_encoder().mutable_layers().back();
  head.mutable_biases() << 0.0, 50.0;
  EXPECT_EQ(model.encode(Matrix::Zero(1, 3)).log_var(0, 0), kLogVarClamp);
  head.mutable_biases() << 0.0, -50.0;
  EXPECT_EQ(model.encode(Matrix::Zero(1, 3)).log_var(0, 0), -kLogVarClamp);
}

TEST(Reparameterize, Cases) {
  Matrix mu(2, 2);
  mu << 0.5, -1.0, 2.0, 0.0;
  Matrix log_var(2, 2);
  log_var << 0.3, -0.7, 1.2, 0.0;
  EXPECT_EQ(reparameterize(mu, log_var, Matrix::Zero(2, 2)), mu);
  const Matrix z = reparameterize(mu, Matrix::Zero(2, 2), Matrix::Ones(2, 2));
  EXPECT_EQ(z, (mu.array() + 1.0).matrix());
  EXPECT_THROW(reparameterize(mu, log_var, Matrix::Zero(1, 2)), ShapeMismatch);
}

TEST(Reparameterize, ChaoticNoiseComposition) {
  NoiseConfig config;
  config.kind = NoiseKind::kChaotic;
  config.chaos_seed = 0.2;
  config.chaos_burn_in = 0;
  auto source = make_noise_source(config);
  const Matrix eps = source->sample(1, 3);
  const Matrix z = reparameterize(Matrix::Zero(1, 3), Matrix::Zero(1, 3), eps);
  EXPECT_DOUBLE_EQ(z(0, 0), 0.64);
  EXPECT_DOUBLE_EQ(z(0, 1), 0.9216);
  EXPECT_NEAR(z(0, 2), 0.28901376, 1e-12);
}

TEST(Loss, PerfectReconstructionAtPrior) {
  const Matrix x = Matrix::Constant(3, 4, 0.4);
  const LossParts parts = vae_loss(x, x, Matrix::Zero(3, 2), Matrix::Zero(3, 2));
  EXPECT_EQ(parts.total, 0.0);
  EXPECT_EQ(parts.mse, 0.0);
  EXPECT_EQ(parts.kl, 0.0);
}

TEST(Loss, UnitMeanShiftKl) {
  const Matrix x = Matrix::Constant(1, 2, 0.1);
  const LossParts parts = vae_loss(x, x, Matrix::Ones(1, 1), Matrix::Zero(1, 1));
  EXPECT_DOUBLE_EQ(parts.kl, 0.5);
  EXPECT_DOUBLE_EQ(parts.total, 0.5);
}

TEST(Loss, MseIsElementMean) {
  Matrix x(1, 2);
  x << 1.0, 0.0;
  const LossParts parts = vae_loss(x, Matrix::Zero(1, 2), Matrix::Zero(1, 1), Matrix::Zero(1, 1));
  EXPECT_DOUBLE_EQ(parts.mse, 0.5);
}

TEST(Loss, ClosedFormKlMatchesMonteCarlo) {
  std::mt19937_64 rng(17);
  const Matrix mu = uniform_matrix(2, 3, rng, -1.0, 1.0);
  const Matrix log_var = uniform_matrix(2, 3, rng, -1.0, 1.0);
  const Matrix x = Matrix::Zero(2, 1);
  const double closed = vae_loss(x, x, mu, log_var).kl;

  // KL = E_q[log q(z) - log p(z)], averaged over the batch.
  std::normal_distribution<double> normal(0.0, 1.0);
  const int samples = 1000000;
  double estimate = 0.0;
  for (Index r = 0; r < mu.rows(); ++r) {
    double row_sum = 0.0;
    for (int s = 0; s < samples; ++s) {
      double log_ratio = 0.0;
      for (Index j = 0; j < mu.cols(); ++j) {
        const double sigma = std::exp(0.5 * log_var(r, j));
        const double eps = normal(rng);
        const double z = mu(r, j) + sigma * eps;
        log_ratio += -0.5 * eps * eps - std::log(sigma) + 0.5 * z * z;
      }
      row_sum += log_ratio;
    }
    estimate += row_sum / samples;
  }
  estimate /= static_cast<double>(mu.rows());
  EXPECT_NEAR(estimate, closed, 0.01 * closed);
}

TEST(Loss, KlNonNegativeAndDecomposes) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix mu = uniform_matrix(4, 3, rng, -3.0, 3.0);
    const Matrix log_var = uniform_matrix(4, 3, rng, -10.0, 10.0);
    const Matrix x = uniform_matrix(4, 5, rng, 0.0, 1.0);
    const Matrix y = uniform_matrix(4, 5, rng, 0.0, 1.0);
    const LossParts parts = vae_loss(x, y, mu, log_var);
    EXPECT_GE(parts.kl, 0.0);
    EXPECT_EQ(parts.total, parts.mse + parts.kl);
  }
}

TEST(GradCheck, FullLossThroughModel) {
  std::mt19937_64 rng(31);
  for (nn::Activation act :
       {nn::Activation::kRelu, nn::Activation::kTanh, nn::Activation::kLeakyRelu}) {
    for (int layers : {5, 7}) {
      VaeModel model(12, 3, layers, act, rng());
      for (auto view : model.parameters()) {
        std::uniform_real_distribution<double> jitter(-0.1, 0.1);
        for (double& v : view) v += jitter(rng);
      }
      const Matrix batch = uniform_matrix(4, 12, rng, 0.0, 1.0);
      const Matrix noise = uniform_matrix(4, 3, rng, -1.0, 1.0);
      const nn::GradCheckResult check = grad_check(model, batch, noise);
      EXPECT_LT(check.max_relative_error, 1e-5) << nn::to_string(act) << " layers " << layers;
      EXPECT_LE(check.skipped_at_kinks, model.encoder().parameter_count() / 50 + 1);
    }
  }
}

TEST(Train, ZeroEpochsIsNoOp) {
  VaeModel model(4, 2, 5, nn::Activation::kTanh, 1);
  const auto before = snapshot(model);
  TrainConfig config;
  config.epochs = 0;
  const TrainResult result = train(model, blob_rows(1, 20, 4), config);
  EXPECT_TRUE(result.loss_trace.empty());
  EXPECT_EQ(snapshot(model), before);
}

TEST(Train, LearnsBlobData) {
  const Matrix rows = blob_rows(5, 200, 4);
  TrainConfig config;
  config.epochs = 100;
  config.learning_rate = 0.001;
  config.optimizer = nn::OptimizerKind::kAdam;
  config.noise.kind = NoiseKind::kGaussian;
  config.noise.gaussian_seed = 3;
  config.init_seed = 3;
  VaeModel model(4, config.latent_dim, config.total_layers, config.activation, config.init_seed);
  const TrainResult result = train(model, rows, config);
  ASSERT_EQ(result.loss_trace.size(), 100u);
  EXPECT_LT(result.loss_trace.back(), 0.5 * result.loss_trace.front());

  // Self-consistency of scoring on the training rows.
  const auto scores = occ::decision_scores(rows, model.reconstruct(rows));
  const double p99 = occ::percentile(scores, 99.0);
  const auto below = std::count_if(scores.begin(), scores.end(), [&](double s) { return s <= p99; });
  EXPECT_GE(static_cast<double>(below), 0.95 * static_cast<double>(scores.size()));
}

TEST(Train, DeterministicForBothSources) {
  const Matrix rows = blob_rows(6, 90, 5);
  for (NoiseKind kind : {NoiseKind::kGaussian, NoiseKind::kChaotic}) {
    TrainConfig config;
    config.epochs = 15;
    config.batch_size = 16;
    config.noise.kind = kind;
    config.noise.gaussian_seed = 12;
    config.noise.chaos_seed = 0.3141592653589793;
    config.init_seed = 12;
    VaeModel a(5, 2, 5, config.activation, config.init_seed);
    VaeModel b(5, 2, 5, config.activation, config.init_seed);
    EXPECT_EQ(train(a, rows, config).loss_trace, train(b, rows, config).loss_trace);
    EXPECT_EQ(snapshot(a), snapshot(b));
  }
}

TEST(Train, NoiseSourceOnlyChangesEpsilon) {
  const Matrix rows = blob_rows(7, 70, 4);
  TrainConfig config;
  config.epochs = 5;
  config.batch_size = 32;
  config.noise.kind = NoiseKind::kChaotic;
  config.noise.chaos_seed = 0.271828;
  config.init_seed = 4;

  auto chaotic = make_noise_source(config.noise);
  RecordingNoise recorder(*chaotic);
  VaeModel recorded(4, 2, 5, config.activation, config.init_seed);
  const auto trace_a = train(recorded, rows, config, recorder).loss_trace;

  // Same epsilon stream delivered through a different source object.
  config.noise.kind = NoiseKind::kGaussian;
  ReplayNoise replay(recorder.tape);
  VaeModel replayed(4, 2, 5, config.activation, config.init_seed);
  const auto trace_b = train(replayed, rows, config, replay).loss_trace;
  EXPECT_EQ(trace_a, trace_b);
  EXPECT_EQ(snapshot(recorded), snapshot(replayed));
}

TEST(Train, NonFiniteLossReportsEpoch) {
  VaeModel model(4, 2, 5, nn::Activation::kTanh, 1);
  TrainConfig config;
  config.epochs = 3;
  NanNoise noise;
  try {
    train(model, blob_rows(1, 10, 4), config, noise);
    FAIL() << "expected NonFiniteLoss";
  } catch (const NonFiniteLoss& e) {
    EXPECT_EQ(e.epoch(), 0u);
  }
}

TEST(Train, RejectsWrongWidth) {
  VaeModel model(4, 2, 5, nn::Activation::kTanh, 1);
  TrainConfig config;
  config.epochs = 1;
  EXPECT_THROW(train(model, blob_rows(1, 10, 3), config), ShapeMismatch);
}

TEST(Reconstruct, DeterministicAndShaped) {
  VaeModel model(6, 2, 5, nn::Activation::kLeakyRelu, 9);
  std::mt19937_64 rng(1);
  const Matrix x = uniform_matrix(11, 6, rng, 0.0, 1.0);
  const Matrix a = model.reconstruct(x);
  const Matrix b = model.reconstruct(x);
  EXPECT_EQ(a.rows(), 11);
  EXPECT_EQ(a.cols(), 6);
  EXPECT_TRUE((a.array() == b.array()).all());

  zero_parameters(model);
  EXPECT_EQ(model.reconstruct(x).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Persistence, SaveLoadRoundTrip) {
  VaeModel model(5, 2, 7, nn::Activation::kRelu, 13);
  ModelHeader header;
  header.noise.kind = NoiseKind::kChaotic;
  header.noise.chaos_seed = 0.4142135623730951;
  header.noise.chaos_transform = chaos::NoiseMode::kStandardized;
  header.pipeline_id = "00ff00ff00ff00ff";
  std::stringstream buffer;
  save_model(buffer, model, header);
  ModelHeader loaded_header;
  VaeModel loaded = load_model(buffer, &loaded_header);
  EXPECT_EQ(loaded.latent_dim(), 2);
  EXPECT_EQ(loaded_header.pipeline_id, header.pipeline_id);
  EXPECT_EQ(loaded_header.noise.chaos_seed, header.noise.chaos_seed);
  EXPECT_EQ(loaded_header.noise.chaos_transform, chaos::NoiseMode::kStandardized);
  std::mt19937_64 rng(2);
  const Matrix x = uniform_matrix(6, 5, rng, 0.0, 1.0);
  EXPECT_TRUE((model.reconstruct(x).array() == loaded.reconstruct(x).array()).all());
}

TEST(Persistence, SkipsCommentPreamble) {
  VaeModel model(3, 1, 5, nn::Activation::kTanh, 2);
  std::stringstream buffer;
  buffer << "# epochs = 10\n#\n";
  save_model(buffer, model, ModelHeader{});
  VaeModel loaded = load_model(buffer);
  const Matrix x = Matrix::Constant(2, 3, 0.25);
  EXPECT_TRUE((model.reconstruct(x).array() == loaded.reconstruct(x).array()).all());
}

TEST(Persistence, RejectsUnknownVersion) {
  std::stringstream buffer("cvae-model 9\n");
  EXPECT_THROW(load_model(buffer), InputError);
}

}  // namespace
}  // namespace cvae::vae
