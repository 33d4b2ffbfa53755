#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cvae/errors.hpp"

// Multi-run aggregation and two-sample t-tests over classification rates.
namespace cvae::stats {

struct RunSeries {
  std::string model_tag;  // "vae" or "cvae"
  std::string dataset_tag;
  std::vector<double> best_cr_per_run;
};

struct Summary {
  double mean = 0.0;
  double std_dev = 0.0;  // sample standard deviation, n - 1 denominator
};

// Throws TooFewRuns for fewer than two values.
Summary aggregate(std::span<const double> values);
Summary aggregate(const RunSeries& series);

// "77.9 (0.36)" style cell.
std::string format_mean_std(const Summary& summary, int decimals = 2);

enum class TTestKind { kPooled, kWelch };

struct TTestResult {
  double t_statistic = 0.0;
  double degrees_of_freedom = 0.0;  // n1 + n2 - 2 for the pooled test
  double p_value = 1.0;             // two-tailed
  bool significant_05 = false;
  bool significant_01 = false;
};

// t = (mean_a - mean_b) / (s_p sqrt(1/n1 + 1/n2)) with pooled variance s_p^2,
// or the Welch form. Throws TooFewRuns, or ZeroVariance when the standard
// error is zero.
TTestResult two_sample_t(std::span<const double> a, std::span<const double> b,
                         TTestKind kind = TTestKind::kPooled);
TTestResult two_sample_t(const RunSeries& a, const RunSeries& b,
                         TTestKind kind = TTestKind::kPooled);

// Student-t CDF via the regularized incomplete beta function.
double t_cdf(double t, double df);
// P(|T| >= |t|).
double t_two_tailed_p(double t, double df);

}  // namespace cvae::stats
