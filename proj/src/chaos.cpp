#include "cvae/chaos.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace cvae::chaos {
namespace {

constexpr double kMinLambda = 3.56;
constexpr double kResampleLow = 0.01;
constexpr double kResampleHigh = 0.99;
constexpr int kMaxRejections = 100;
// A step that moves the state by less than this is treated as a fixed point.
constexpr double kFixedPointTolerance = 1e-14;

double logistic(double lambda, double x) { return lambda * (x * (1 - x)); }

}  // namespace

std::string to_string(NoiseMode mode) {
  return mode == NoiseMode::kRaw ? "raw" : "standardized";
}

NoiseMode noise_mode_from_string(const std::string& text) {
  if (text == "raw") return NoiseMode::kRaw;
  if (text == "standardized") return NoiseMode::kStandardized;
  throw ConfigError("unknown chaos transform '" + text + "' (expected raw|standardized)");
}

double NoiseTransform::apply(double raw) const {
  if (mode == NoiseMode::kRaw) return raw;
  return (raw - 0.5) / std::sqrt(0.125);
}

ChaoticGenerator::ChaoticGenerator(double seed, double lambda, std::size_t burn_in)
    : lambda_(lambda), seed_(seed), state_(seed), burn_in_(burn_in) {
  if (!(lambda > kMinLambda && lambda <= 4.0)) {
    throw std::invalid_argument("lambda must lie in (3.56, 4] for chaotic behaviour");
  }
  if (!seed_is_valid(seed, lambda)) {
    throw InvalidSeed("seed " + std::to_string(seed) +
                      " is degenerate for the logistic map (fixed point, "
                      "pre-periodic point or short cycle)");
  }
  for (std::size_t i = 0; i < burn_in_; ++i) step();
}

double ChaoticGenerator::step() {
  const double next = logistic(lambda_, state_);
  if (!(next > 0.0 && next < 1.0) || std::abs(next - state_) < kFixedPointTolerance) {
    throw DegenerateOrbit("logistic orbit collapsed at x = " + std::to_string(next));
  }
  state_ = next;
  return next;
}

double ChaoticGenerator::next() {
  const double value = step();
  ++steps_emitted_;
  return value;
}

bool seed_is_valid(double seed, double lambda, std::size_t probe_len) {
  if (probe_len < 1) throw std::invalid_argument("probe_len must be >= 1");
  auto inside = [](double x) { return x > kOrbitEpsilon && x < 1.0 - kOrbitEpsilon; };
  if (!std::isfinite(seed) || !inside(seed)) return false;

  std::vector<double> orbit;
  orbit.reserve(probe_len + 1);
  orbit.push_back(seed);
  double x = seed;
  for (std::size_t i = 0; i < probe_len; ++i) {
    x = logistic(lambda, x);
    if (!inside(x)) return false;
    orbit.push_back(x);
  }
  // Any two iterates closer than eps means the orbit has (numerically) cycled.
  std::sort(orbit.begin(), orbit.end());
  for (std::size_t i = 1; i < orbit.size(); ++i) {
    if (orbit[i] - orbit[i - 1] < kOrbitEpsilon) return false;
  }
  return true;
}

double resolve_seed(double seed, double lambda, std::uint64_t resample_seed,
                    std::size_t probe_len) {
  std::mt19937_64 rng(resample_seed);
  std::uniform_real_distribution<double> uniform(kResampleLow, kResampleHigh);
  double candidate = seed;
  for (int rejections = 0; rejections < kMaxRejections; ++rejections) {
    if (seed_is_valid(candidate, lambda, probe_len)) return candidate;
    candidate = uniform(rng);
  }
  throw SeedExhausted("no valid logistic-map seed after " + std::to_string(kMaxRejections) +
                      " attempts; check lambda = " + std::to_string(lambda));
}

double seed_for_run(std::uint64_t run_seed, double lambda) {
  std::mt19937_64 rng(run_seed);
  std::uniform_real_distribution<double> uniform(kResampleLow, kResampleHigh);
  const double first = uniform(rng);
  return resolve_seed(first, lambda, rng());
}

Eigen::MatrixXd sample_noise(ChaoticGenerator& gen, const NoiseTransform& transform,
                             Eigen::Index rows, Eigen::Index cols) {
  if (rows < 1 || cols < 1) throw ShapeMismatch("noise shape must be at least 1x1");
  Eigen::MatrixXd noise(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) noise(r, c) = transform.apply(gen.next());
  }
  return noise;
}

double ks_statistic(std::span<const double> sorted_samples,
                    const std::function<double(double)>& cdf) {
  if (sorted_samples.empty()) throw EmptySample("KS statistic needs at least one sample");
  if (!std::is_sorted(sorted_samples.begin(), sorted_samples.end())) {
    throw std::invalid_argument("ks_statistic expects samples in ascending order");
  }
  const double n = static_cast<double>(sorted_samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted_samples.size(); ++i) {
    const double f = cdf(sorted_samples[i]);
    const double above = static_cast<double>(i + 1) / n - f;
    const double below = f - static_cast<double>(i) / n;
    d = std::max({d, above, below});
  }
  return d;
}

double arcsine_cdf(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return 2.0 / std::numbers::pi * std::asin(std::sqrt(x));
}

double uniform_cdf(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace cvae::chaos
