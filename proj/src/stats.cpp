#include "cvae/stats.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include <boost/math/special_functions/beta.hpp>

namespace cvae::stats {
namespace {

double sample_variance(std::span<const double> values, double mean) {
  double sum = 0.0;
  for (double v : values) sum += (v - mean) * (v - mean);
  return sum / static_cast<double>(values.size() - 1);
}

}  // namespace

Summary aggregate(std::span<const double> values) {
  if (values.size() < 2) throw TooFewRuns("need at least two runs, got " + std::to_string(values.size()));
  Summary summary;
  summary.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  summary.std_dev = std::sqrt(sample_variance(values, summary.mean));
  return summary;
}

Summary aggregate(const RunSeries& series) { return aggregate(series.best_cr_per_run); }

std::string format_mean_std(const Summary& summary, int decimals) {
  char buffer[96];
  std::snprintf(buffer, sizeof buffer, "%.*f (%.*f)", decimals, summary.mean, decimals,
                summary.std_dev);
  return buffer;
}

double t_two_tailed_p(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return boost::math::ibeta(df / 2.0, 0.5, x);
}

double t_cdf(double t, double df) {
  const double tail = 0.5 * t_two_tailed_p(t, df);
  return t > 0.0 ? 1.0 - tail : tail;
}

TTestResult two_sample_t(std::span<const double> a, std::span<const double> b, TTestKind kind) {
  if (a.size() < 2 || b.size() < 2) throw TooFewRuns("each series needs at least two runs");
  const Summary sa = aggregate(a);
  const Summary sb = aggregate(b);
  const double n1 = static_cast<double>(a.size());
  const double n2 = static_cast<double>(b.size());
  const double v1 = sa.std_dev * sa.std_dev;
  const double v2 = sb.std_dev * sb.std_dev;

  TTestResult result;
  double standard_error = 0.0;
  if (kind == TTestKind::kPooled) {
    result.degrees_of_freedom = n1 + n2 - 2.0;
    const double pooled = ((n1 - 1.0) * v1 + (n2 - 1.0) * v2) / result.degrees_of_freedom;
    standard_error = std::sqrt(pooled) * std::sqrt(1.0 / n1 + 1.0 / n2);
  } else {
    const double q1 = v1 / n1;
    const double q2 = v2 / n2;
    standard_error = std::sqrt(q1 + q2);
    result.degrees_of_freedom =
        (q1 + q2) * (q1 + q2) / (q1 * q1 / (n1 - 1.0) + q2 * q2 / (n2 - 1.0));
  }
  if (!(standard_error > 0.0)) {
    throw ZeroVariance("both series are constant; the t statistic is undefined");
  }
  result.t_statistic = (sa.mean - sb.mean) / standard_error;
  result.p_value = t_two_tailed_p(result.t_statistic, result.degrees_of_freedom);
  result.significant_05 = result.p_value < 0.05;
  result.significant_01 = result.p_value < 0.01;
  return result;
}

TTestResult two_sample_t(const RunSeries& a, const RunSeries& b, TTestKind kind) {
  return two_sample_t(a.best_cr_per_run, b.best_cr_per_run, kind);
}

}  // namespace cvae::stats
