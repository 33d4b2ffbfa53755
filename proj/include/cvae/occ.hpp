#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cvae/errors.hpp"

// One-class decision layer: reconstruction-error scores, thresholds and the
// classification rate over an all-positive test set.
namespace cvae::occ {

enum class ThresholdKind { kLiteralNScaled, kTrainPercentile, kConstant };

struct ThresholdStrategy {
  ThresholdKind kind = ThresholdKind::kTrainPercentile;
  double value = 99.0;  // percentile p, or the constant c

  static ThresholdStrategy literal_n_scaled() { return {ThresholdKind::kLiteralNScaled, 0.0}; }
  static ThresholdStrategy train_percentile(double p) { return {ThresholdKind::kTrainPercentile, p}; }
  static ThresholdStrategy constant(double c) { return {ThresholdKind::kConstant, c}; }
};

// "literal_n_scaled", "train_percentile(99)", "constant(0.05)".
std::string to_string(const ThresholdStrategy& strategy);
ThresholdStrategy threshold_from_string(const std::string& text);

// Per-row mean squared difference.
std::vector<double> decision_scores(const Eigen::MatrixXd& test, const Eigen::MatrixXd& reconstruction);

// Linear-interpolation percentile (rank p/100 * (n - 1) on sorted values).
double percentile(std::span<const double> values, double p);

double resolve_threshold(const ThresholdStrategy& strategy,
                         std::optional<std::span<const double>> train_scores,
                         std::size_t test_size);

// 1 iff score > threshold.
std::vector<int> classify(std::span<const double> scores, double threshold);

// 100 * flagged / total.
double classification_rate(std::span<const int> predictions);

struct DecisionReport {
  std::vector<double> scores;
  double threshold = 0.0;
  ThresholdStrategy strategy;
  std::vector<int> predictions;
  double cr = 0.0;
};

DecisionReport evaluate(std::span<const double> test_scores, const ThresholdStrategy& strategy,
                        std::optional<std::span<const double>> train_scores);

// Delimited report: '#'-prefixed preamble lines, an `index,score,prediction`
// table and a `key,value` summary block.
void write_report(std::ostream& out, const DecisionReport& report,
                  std::span<const std::string> preamble = {});

}  // namespace cvae::occ
