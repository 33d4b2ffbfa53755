#pragma once

// Independent re-computations used as test oracles. Nothing here calls into
// the code paths it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cvae/nn.hpp"

namespace cvae::testing {

// Straight-line forward pass with explicit loops.
inline Eigen::MatrixXd loop_forward(const nn::Mlp& mlp, const Eigen::MatrixXd& input) {
  Eigen::MatrixXd x = input;
  for (const auto& layer : mlp.layers()) {
    Eigen::MatrixXd y(x.rows(), layer.out_dim());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index o = 0; o < layer.out_dim(); ++o) {
        double sum = layer.biases()(o);
        for (Eigen::Index i = 0; i < layer.in_dim(); ++i) sum += layer.weights()(o, i) * x(r, i);
        double out = sum;
        switch (layer.activation()) {
          case nn::Activation::kRelu: out = sum > 0 ? sum : 0.0; break;
          case nn::Activation::kTanh: out = std::tanh(sum); break;
          case nn::Activation::kLeakyRelu: out = sum > 0 ? sum : 0.01 * sum; break;
          case nn::Activation::kIdentity: break;
        }
        y(r, o) = out;
      }
    }
    x = y;
  }
  return x;
}

// Student-t density with df degrees of freedom.
inline double t_density(double x, double df) {
  const double log_norm = std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0) -
                          0.5 * std::log(df * std::numbers::pi);
  return std::exp(log_norm - (df + 1.0) / 2.0 * std::log1p(x * x / df));
}

// Composite Simpson on [a, b] with an even number of panels.
template <typename F>
double simpson(F&& f, double a, double b, int panels) {
  if (panels % 2 != 0) ++panels;
  const double h = (b - a) / panels;
  double sum = f(a) + f(b);
  for (int i = 1; i < panels; ++i) sum += f(a + i * h) * (i % 2 == 0 ? 2.0 : 4.0);
  return sum * h / 3.0;
}

// Two-tailed p = 2 * integral_{|t|}^{inf} density, via the substitution
// s = 1/x on (0, 1/|t|]; for |t| < 1 the [|t|, 1] piece is integrated
// directly.
inline double t_two_tailed_oracle(double t, double df, int panels = 200000) {
  const double a = std::abs(t);
  auto tail_integrand = [df](double s) {
    if (s == 0.0) return 0.0;
    return t_density(1.0 / s, df) / (s * s);
  };
  double tail = 0.0;
  if (a >= 1.0) {
    tail = simpson(tail_integrand, 0.0, 1.0 / a, panels);
  } else {
    tail = simpson(tail_integrand, 0.0, 1.0, panels) +
           simpson([df](double x) { return t_density(x, df); }, a, 1.0, panels);
  }
  return 2.0 * tail;
}

// Plain trapezoid rule for the t CDF on [0, t].
inline double t_cdf_trapezoid(double t, double df, int panels = 400000) {
  const double h = t / panels;
  double sum = 0.5 * (t_density(0.0, df) + t_density(t, df));
  for (int i = 1; i < panels; ++i) sum += t_density(i * h, df);
  return 0.5 + sum * h;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double loop_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double loop_sample_variance(const std::vector<double>& v) {
  const double m = loop_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

// Writes a CSV shaped like the Medicare Part B table: 8304 providers, of
// which `fraud` are excluded (label 1).
inline std::string medicare_fixture_csv(std::uint64_t seed, std::size_t rows = 8304,
                                        std::size_t fraud = 895) {
  std::mt19937_64 rng(seed);
  const std::vector<std::string> provider_types = {
      "Internal Medicine", "Family Practice", "Cardiology", "Dermatology",
      "Podiatry", "Ambulance Service Provider", "Chiropractic"};
  const std::vector<std::string> genders = {"M", "F"};
  std::uniform_int_distribution<std::size_t> type_pick(0, provider_types.size() - 1);
  std::uniform_int_distribution<std::size_t> gender_pick(0, 1);
  std::lognormal_distribution<double> count(4.0, 1.0);
  std::lognormal_distribution<double> charge(5.0, 0.8);

  // Deterministically scatter the fraud rows.
  std::vector<int> labels(rows, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(fraud), 1);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::string csv =
      "npi,provider_type,nppes_provider_gender,line_srvc_cnt,bene_unique_cnt,"
      "bene_day_srvc_cnt,average_submitted_chrg_amnt,average_medicare_payment_amt,exclusion\n";
  for (std::size_t r = 0; r < rows; ++r) {
    const double services = std::round(count(rng) * (labels[r] ? 3.0 : 1.0));
    const double beneficiaries = std::round(services * 0.6);
    const double days = std::round(services * 0.9);
    const double submitted = charge(rng);
    const double paid = submitted * 0.35;
    csv += std::to_string(1000000000 + r) + ",\"" + provider_types[type_pick(rng)] + "\"," +
           genders[gender_pick(rng)] + ',' + std::to_string(services) + ',' +
           std::to_string(beneficiaries) + ',' + std::to_string(days) + ',' +
           std::to_string(submitted) + ',' + std::to_string(paid) + ',' +
           std::to_string(labels[r]) + '\n';
  }
  return csv;
}

inline const char* medicare_schema_text() {
  return "# Medicare Part B provider table\n"
         "label exclusion positive=1 negative=0\n"
         "drop npi\n"
         "categorical provider_type\n"
         "categorical nppes_provider_gender\n"
         "numerical line_srvc_cnt\n"
         "numerical bene_unique_cnt\n"
         "numerical bene_day_srvc_cnt\n"
         "numerical average_submitted_chrg_amnt\n"
         "numerical average_medicare_payment_amt\n";
}

}  // namespace cvae::testing
