#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cvae/errors.hpp"

// Logistic-map noise generation and empirical distribution checks.
namespace cvae::chaos {

inline constexpr double kDefaultLambda = 4.0;
inline constexpr std::size_t kDefaultBurnIn = 100;
inline constexpr std::size_t kDefaultProbeLength = 1000;
// Orbit margin and revisit tolerance used by seed validation.
inline constexpr double kOrbitEpsilon = 1e-12;

enum class NoiseMode { kRaw, kStandardized };

std::string to_string(NoiseMode mode);
NoiseMode noise_mode_from_string(const std::string& text);

// Maps a raw iterate in (0,1) to the value injected into the latent space.
// Standardized mode centres and scales by the moments of the lambda = 4
// invariant (arcsine) density: mean 1/2, variance 1/8.
struct NoiseTransform {
  NoiseMode mode = NoiseMode::kRaw;

  double apply(double raw) const;
};

// Iterates x <- lambda * x * (1 - x). Construction validates the seed and runs
// the burn-in, so every value returned by next() is a post-transient iterate.
class ChaoticGenerator {
 public:
  // Throws std::invalid_argument unless 3.56 < lambda <= 4, and InvalidSeed if
  // seed_is_valid() rejects the seed.
  explicit ChaoticGenerator(double seed, double lambda = kDefaultLambda,
                            std::size_t burn_in = kDefaultBurnIn);

  // Advances one step. Throws DegenerateOrbit if the state leaves (0,1) or
  // stalls on a fixed point.
  double next();

  double lambda() const { return lambda_; }
  double seed() const { return seed_; }
  double state() const { return state_; }
  std::size_t burn_in() const { return burn_in_; }
  std::size_t steps_emitted() const { return steps_emitted_; }

 private:
  double step();

  double lambda_;
  double seed_;
  double state_;
  std::size_t burn_in_;
  std::size_t steps_emitted_ = 0;
};

// True when the first probe_len iterates from seed stay inside
// (eps, 1 - eps) and no iterate (seed included) comes within eps of an
// earlier one.
bool seed_is_valid(double seed, double lambda = kDefaultLambda,
                   std::size_t probe_len = kDefaultProbeLength);

// Returns `seed` if valid; otherwise resamples uniformly from (0.01, 0.99)
// with a generator seeded from `resample_seed`. Throws SeedExhausted after
// 100 consecutive rejections.
double resolve_seed(double seed, double lambda, std::uint64_t resample_seed,
                    std::size_t probe_len = kDefaultProbeLength);

// Draws a seed from (0.01, 0.99) determined by `run_seed` and resolves it.
double seed_for_run(std::uint64_t run_seed, double lambda = kDefaultLambda);

// Row-major fill with consecutive (transformed) iterates.
Eigen::MatrixXd sample_noise(ChaoticGenerator& gen, const NoiseTransform& transform,
                             Eigen::Index rows, Eigen::Index cols);

// Kolmogorov-Smirnov distance between the empirical CDF of `sorted_samples`
// and `cdf`: max over i of max(i/n - F(x_i), F(x_i) - (i-1)/n).
double ks_statistic(std::span<const double> sorted_samples,
                    const std::function<double(double)>& cdf);

// CDF of the lambda = 4 invariant density 1 / (pi sqrt(x (1 - x))).
double arcsine_cdf(double x);

double uniform_cdf(double x);

}  // namespace cvae::chaos
