#include "cvae/occ.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "cvae/text_io.hpp"

namespace cvae::occ {

std::string to_string(const ThresholdStrategy& strategy) {
  switch (strategy.kind) {
    case ThresholdKind::kLiteralNScaled: return "literal_n_scaled";
    case ThresholdKind::kTrainPercentile:
      return "train_percentile(" + format_double(strategy.value) + ")";
    case ThresholdKind::kConstant: return "constant(" + format_double(strategy.value) + ")";
  }
  return "";
}

ThresholdStrategy threshold_from_string(const std::string& text) {
  const std::string t = trim(text);
  if (t == "literal_n_scaled") return ThresholdStrategy::literal_n_scaled();
  auto argument = [&](const std::string& name) -> std::optional<double> {
    if (t.rfind(name + "(", 0) != 0 || t.back() != ')') return std::nullopt;
    return parse_double(t.substr(name.size() + 1, t.size() - name.size() - 2));
  };
  if (t == "train_percentile") return ThresholdStrategy::train_percentile(99.0);
  if (auto p = argument("train_percentile")) return ThresholdStrategy::train_percentile(*p);
  if (auto c = argument("constant")) return ThresholdStrategy::constant(*c);
  throw ConfigError("unknown threshold strategy '" + text + "'");
}

std::vector<double> decision_scores(const Eigen::MatrixXd& test,
                                    const Eigen::MatrixXd& reconstruction) {
  if (test.rows() != reconstruction.rows() || test.cols() != reconstruction.cols()) {
    throw ShapeMismatch("test and reconstruction shapes differ");
  }
  std::vector<double> scores(static_cast<std::size_t>(test.rows()));
  const double width = static_cast<double>(test.cols());
  for (Eigen::Index r = 0; r < test.rows(); ++r) {
    scores[static_cast<std::size_t>(r)] = (test.row(r) - reconstruction.row(r)).squaredNorm() / width;
  }
  return scores;
}

double percentile(std::span<const double> values, double p) {
  if (values.empty()) throw MissingTrainScores("percentile of an empty score set");
  if (!(p >= 0.0 && p <= 100.0)) {
    throw InvalidPercentile("percentile must lie in [0, 100], got " + format_double(p));
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double rank = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lower = static_cast<std::size_t>(std::floor(rank));
  const auto upper = std::min(lower + 1, sorted.size() - 1);
  const double fraction = rank - static_cast<double>(lower);
  return sorted[lower] + fraction * (sorted[upper] - sorted[lower]);
}

double resolve_threshold(const ThresholdStrategy& strategy,
                         std::optional<std::span<const double>> train_scores,
                         std::size_t test_size) {
  switch (strategy.kind) {
    case ThresholdKind::kLiteralNScaled: return static_cast<double>(test_size) * 0.01;
    case ThresholdKind::kTrainPercentile:
      if (!(strategy.value >= 0.0 && strategy.value <= 100.0)) {
        throw InvalidPercentile("percentile must lie in [0, 100], got " +
                                format_double(strategy.value));
      }
      if (!train_scores || train_scores->empty()) {
        throw MissingTrainScores("train_percentile threshold needs training scores");
      }
      return percentile(*train_scores, strategy.value);
    case ThresholdKind::kConstant: return strategy.value;
  }
  return strategy.value;
}

std::vector<int> classify(std::span<const double> scores, double threshold) {
  std::vector<int> predictions;
  predictions.reserve(scores.size());
  for (double s : scores) predictions.push_back(s > threshold ? 1 : 0);
  return predictions;
}

double classification_rate(std::span<const int> predictions) {
  if (predictions.empty()) throw EmptyTestSet("classification rate of an empty test set");
  const auto flagged = std::count(predictions.begin(), predictions.end(), 1);
  return 100.0 * static_cast<double>(flagged) / static_cast<double>(predictions.size());
}

DecisionReport evaluate(std::span<const double> test_scores, const ThresholdStrategy& strategy,
                        std::optional<std::span<const double>> train_scores) {
  DecisionReport report;
  report.scores.assign(test_scores.begin(), test_scores.end());
  report.strategy = strategy;
  report.threshold = resolve_threshold(strategy, train_scores, test_scores.size());
  report.predictions = classify(test_scores, report.threshold);
  report.cr = classification_rate(report.predictions);
  return report;
}

void write_report(std::ostream& out, const DecisionReport& report,
                  std::span<const std::string> preamble) {
  for (const auto& line : preamble) out << "# " << line << '\n';
  out << "index,score,prediction\n";
  for (std::size_t i = 0; i < report.scores.size(); ++i) {
    out << i << ',' << format_double(report.scores[i]) << ',' << report.predictions[i] << '\n';
  }
  const auto flagged = std::count(report.predictions.begin(), report.predictions.end(), 1);
  out << "\nkey,value\n";
  out << "threshold," << format_double(report.threshold) << '\n';
  out << "strategy," << to_string(report.strategy) << '\n';
  out << "test_rows," << report.scores.size() << '\n';
  out << "flagged," << flagged << '\n';
  out << "cr," << format_double(report.cr) << '\n';
}

}  // namespace cvae::occ
