#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cvae/chaos.hpp"
#include "cvae/nn.hpp"
#include "cvae/occ.hpp"
#include "cvae/stats.hpp"
#include "cvae/vae.hpp"

// Experiment orchestration behind the `cvae` command-line tool.
namespace cvae::experiment {

// Hyperparameter lists; every combination is one training run.
struct Grid {
  std::vector<std::size_t> epochs{100};
  std::vector<double> learning_rates{0.001};
  std::vector<double> momenta{0.009};
  std::vector<nn::Activation> activations{nn::Activation::kTanh};
  std::vector<nn::OptimizerKind> optimizers{nn::OptimizerKind::kAdam};
  std::vector<int> layers{5};

  std::size_t size() const;
};

// Learning rate x momentum x epochs x activation x optimizer x layers
// = 2 x 3 x 5 x 3 x 2 x 2 = 360 combinations.
Grid paper_grid();

struct ExperimentConfig {
  std::string dataset_tag = "dataset";
  std::string csv_path;
  std::string schema_path;
  std::string data_dir = "data";
  std::string output_dir = "results";
  std::string model = "cvae";
  std::vector<std::string> compare_models{"vae", "cvae"};
  Grid grid;
  bool single_config = false;
  nn::Index batch_size = 64;
  nn::Index latent_dim = 2;
  occ::ThresholdStrategy threshold = occ::ThresholdStrategy::train_percentile(99.0);
  std::size_t run_count = 15;
  std::uint64_t base_seed = 1;
  double chaos_lambda = chaos::kDefaultLambda;
  std::size_t chaos_burn_in = chaos::kDefaultBurnIn;
  chaos::NoiseMode chaos_transform = chaos::NoiseMode::kRaw;
  stats::TTestKind t_test = stats::TTestKind::kPooled;
  std::size_t jobs = 1;
};

// Flat key-value text:
//
//   # comment
//   key = value
//   key = [value, value, ...]     (grid keys only)
//
// Unknown keys and malformed values raise ConfigError / ParseError.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig read_config(const std::string& path);
// Applies one `key = value` assignment (same grammar as a config line).
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);

// Resolved configuration, one `key = value` line per entry, for provenance.
std::vector<std::string> describe(const ExperimentConfig& config);

vae::NoiseKind noise_kind_for_model(const std::string& model_tag);

// Seed schedule: run i uses base_seed + i for parameter init, shuffling,
// Gaussian noise and the chaotic seed draw.
std::uint64_t run_seed(const ExperimentConfig& config, std::size_t run_index);

// Every grid combination (or only the first with single_config) for one run.
std::vector<vae::TrainConfig> expand(const ExperimentConfig& config, const std::string& model_tag,
                                     std::size_t run_index);

struct RunOutcome {
  vae::TrainConfig train_config;
  std::vector<double> loss_trace;
  occ::DecisionReport report;
};

// Trains on `train`, scores `test` and applies the threshold strategy.
// `trained` receives the model when set.
RunOutcome train_and_evaluate(const Eigen::MatrixXd& train, const Eigen::MatrixXd& test,
                              const vae::TrainConfig& train_config,
                              const occ::ThresholdStrategy& threshold,
                              std::optional<vae::VaeModel>* trained = nullptr);

struct PreprocessSummary {
  std::size_t total_rows = 0;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  std::size_t columns = 0;
  std::string pipeline_id;
};

// Reads CSV + schema, splits by class and writes train.matrix, test.matrix and
// pipeline.txt into `out_dir`.
PreprocessSummary cmd_preprocess(const std::string& csv_path, const std::string& schema_path,
                                 const std::string& out_dir);

struct TrainEvalResult {
  RunOutcome outcome;
  std::string report_path;
  std::string model_path;
  std::string loss_path;
};

TrainEvalResult cmd_train_eval(const ExperimentConfig& config);

struct GridResult {
  vae::TrainConfig train_config;
  double cr = 0.0;
};

struct RunRecord {
  std::size_t run_index = 0;
  std::uint64_t seed = 0;
  std::vector<GridResult> grid;
  std::size_t best = 0;  // index into grid
  double best_cr() const { return grid[best].cr; }
};

struct ModelSeries {
  std::string model_tag;
  std::vector<RunRecord> runs;
  stats::RunSeries series;
  std::optional<stats::Summary> summary;
};

struct ExperimentSummary {
  std::vector<ModelSeries> models;
  std::optional<stats::TTestResult> t_test;
  std::string t_test_note;
  std::string comparison_csv;
  std::string comparison_text;
};

// Runs run_count independent runs per model, keeps each run's best CR over the
// grid, aggregates, runs the t-test and writes the report files.
ExperimentSummary cmd_compare(const ExperimentConfig& config);

void write_comparison_csv(std::ostream& out, const ExperimentConfig& config,
                          const ExperimentSummary& summary);
void write_comparison_text(std::ostream& out, const ExperimentConfig& config,
                           const ExperimentSummary& summary);

// `count` iterates, one per line, shortest round-trip decimal form.
void cmd_chaos_dump(std::ostream& out, double seed, double lambda, std::size_t burn_in,
                    std::size_t count, chaos::NoiseMode transform);

}  // namespace cvae::experiment
