#include "cvae/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "cvae/data.hpp"

namespace cvae::experiment {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class Workspace : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() / (std::string("cvae_exp_") + info->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  // Writes a small synthetic CSV + schema and preprocesses it.
  ExperimentConfig prepared(std::size_t n_neg = 120, std::size_t n_pos = 20) {
    const data::TabularDataset d = data::synth_occ(7, n_neg, n_pos, 4, 0.4);
    {
      std::ofstream csv(root_ / "data.csv");
      data::write_csv(csv, data::to_raw_table(d));
      std::ofstream schema(root_ / "data.schema");
      schema << data::schema_text(data::numeric_schema(d));
    }
    cmd_preprocess((root_ / "data.csv").string(), (root_ / "data.schema").string(),
                   (root_ / "data").string());
    ExperimentConfig config;
    config.dataset_tag = "synth";
    config.data_dir = (root_ / "data").string();
    config.output_dir = (root_ / "results").string();
    config.grid.epochs = {20};
    config.batch_size = 32;
    return config;
  }

  fs::path root_;
};

TEST(Config, ParsesKeysAndLists) {
  std::istringstream in(
      "# experiment\n"
      "dataset = medicare\n"
      "model = vae\n"
      "epochs = [50, 100]   # two values\n"
      "learning_rate = 0.0005\n"
      "activation = [relu, leaky_relu]\n"
      "optimizer = sgd\n"
      "layers = [5, 7]\n"
      "threshold = constant(0.2)\n"
      "run_count = 4\n"
      "base_seed = 10\n"
      "chaos_transform = standardized\n"
      "t_test = welch\n");
  const ExperimentConfig c = parse_config(in);
  EXPECT_EQ(c.dataset_tag, "medicare");
  EXPECT_EQ(c.model, "vae");
  EXPECT_EQ(c.grid.epochs, (std::vector<std::size_t>{50, 100}));
  EXPECT_EQ(c.grid.learning_rates, (std::vector<double>{0.0005}));
  EXPECT_EQ(c.grid.activations.size(), 2u);
  EXPECT_EQ(c.grid.optimizers, (std::vector<nn::OptimizerKind>{nn::OptimizerKind::kSgdMomentum}));
  EXPECT_EQ(c.grid.size(), 8u);
  EXPECT_EQ(c.threshold.kind, occ::ThresholdKind::kConstant);
  EXPECT_EQ(c.run_count, 4u);
  EXPECT_EQ(c.base_seed, 10u);
  EXPECT_EQ(c.chaos_transform, chaos::NoiseMode::kStandardized);
  EXPECT_EQ(c.t_test, stats::TTestKind::kWelch);
}

TEST(Config, Errors) {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
  };
  try {
    parse("dataset = x\nbogus = 1\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse("no equals sign\n"), ParseError);
  EXPECT_THROW(parse("model = gan\n"), InputError);
  EXPECT_THROW(parse("layers = 1\n"), InputError);
  EXPECT_THROW(parse("chaos_lambda = 3.0\n"), InputError);
  EXPECT_THROW(parse("epochs = [1, x]\n"), InputError);
}

TEST(Config, DescribeRoundTrips) {
  ExperimentConfig c;
  c.grid = paper_grid();
  c.run_count = 3;
  c.threshold = occ::ThresholdStrategy::literal_n_scaled();
  std::string text;
  for (const auto& line : describe(c)) text += line + '\n';
  std::istringstream in(text);
  const ExperimentConfig back = parse_config(in);
  EXPECT_EQ(describe(back), describe(c));
}

TEST(Grid, PaperGridHas360Combinations) {
  ExperimentConfig c;
  c.grid = paper_grid();
  EXPECT_EQ(c.grid.size(), 360u);
  const auto configs = expand(c, "cvae", 0);
  EXPECT_EQ(configs.size(), 360u);
  std::set<std::tuple<double, double, std::size_t, int, int, int>> unique;
  for (const auto& t : configs) {
    unique.emplace(t.learning_rate, t.momentum, t.epochs, static_cast<int>(t.activation),
                   static_cast<int>(t.optimizer), t.total_layers);
  }
  EXPECT_EQ(unique.size(), 360u);
  EXPECT_EQ(c.grid.learning_rates, (std::vector<double>{0.001, 0.0005}));
  EXPECT_EQ(c.grid.momenta, (std::vector<double>{0.005, 0.007, 0.009}));
  EXPECT_EQ(c.grid.epochs, (std::vector<std::size_t>{50, 75, 100, 250, 150}));
  EXPECT_EQ(c.grid.layers, (std::vector<int>{5, 7}));
  c.single_config = true;
  EXPECT_EQ(expand(c, "cvae", 0).size(), 1u);
}

TEST(Grid, SeedSchedule) {
  ExperimentConfig c;
  c.base_seed = 40;
  const auto vae_run = expand(c, "vae", 2).front();
  EXPECT_EQ(vae_run.init_seed, 42u);
  EXPECT_EQ(vae_run.noise.gaussian_seed, 42u);
  EXPECT_EQ(vae_run.noise.kind, vae::NoiseKind::kGaussian);
  const auto cvae_run = expand(c, "cvae", 2).front();
  EXPECT_EQ(cvae_run.noise.kind, vae::NoiseKind::kChaotic);
  EXPECT_EQ(cvae_run.noise.chaos_seed, chaos::seed_for_run(42, c.chaos_lambda));
  EXPECT_NE(cvae_run.noise.chaos_seed, expand(c, "cvae", 3).front().noise.chaos_seed);
}

TEST_F(Workspace, PreprocessWritesSplits) {
  const ExperimentConfig c = prepared(30, 5);
  EXPECT_TRUE(fs::exists(fs::path(c.data_dir) / "pipeline.txt"));
  std::ifstream in(fs::path(c.data_dir) / "test.matrix");
  EXPECT_EQ(data::read_matrix(in).rows(), 5);
}

TEST_F(Workspace, TrainEvalIsDeterministic) {
  ExperimentConfig c = prepared();
  c.model = "cvae";
  const TrainEvalResult first = cmd_train_eval(c);
  const std::string report = slurp(first.report_path);
  const std::string model = slurp(first.model_path);
  const TrainEvalResult second = cmd_train_eval(c);
  EXPECT_EQ(slurp(second.report_path), report);
  EXPECT_EQ(slurp(second.model_path), model);
  EXPECT_EQ(first.outcome.loss_trace.size(), 20u);
  EXPECT_NE(report.find("# model = cvae"), std::string::npos);
  EXPECT_NE(first.report_path.find("synth_cvae_run0"), std::string::npos);

  std::ifstream model_in(first.model_path);
  EXPECT_NO_THROW(vae::load_model(model_in));
}

TEST_F(Workspace, TrainEvalZeroEpochs) {
  ExperimentConfig c = prepared(30, 5);
  c.grid.epochs = {0};
  const TrainEvalResult r = cmd_train_eval(c);
  EXPECT_TRUE(r.outcome.loss_trace.empty());
  EXPECT_GE(r.outcome.report.cr, 0.0);
  EXPECT_LE(r.outcome.report.cr, 100.0);
}

TEST_F(Workspace, TrainEvalNeedsOneCombination) {
  ExperimentConfig c = prepared(30, 5);
  c.grid.epochs = {1, 2};
  EXPECT_THROW(cmd_train_eval(c), ConfigError);
  c.single_config = true;
  EXPECT_NO_THROW(cmd_train_eval(c));
}

TEST_F(Workspace, MissingSplitsIsInputError) {
  ExperimentConfig c;
  c.data_dir = (root_ / "nowhere").string();
  EXPECT_THROW(cmd_train_eval(c), InputError);
}

TEST_F(Workspace, CompareReportsAndReproduces) {
  ExperimentConfig c = prepared(80, 15);
  c.grid.epochs = {5};
  c.grid.learning_rates = {0.001, 0.01};
  c.run_count = 3;
  const ExperimentSummary serial = cmd_compare(c);
  ASSERT_EQ(serial.models.size(), 2u);
  EXPECT_EQ(serial.models[0].model_tag, "vae");
  EXPECT_EQ(serial.models[1].series.best_cr_per_run.size(), 3u);
  for (const auto& model : serial.models) {
    for (const auto& run : model.runs) {
      EXPECT_EQ(run.grid.size(), 2u);
      for (const auto& g : run.grid) EXPECT_LE(g.cr, run.best_cr());
      EXPECT_TRUE(fs::exists(fs::path(c.output_dir) /
                             ("synth_" + model.model_tag + "_run" + std::to_string(run.run_index) + ".csv")));
    }
  }
  const std::string csv = slurp(serial.comparison_csv);
  EXPECT_NE(csv.find("dataset,model,mean_cr,std_cr,t_statistic,df,p_value,significant_05,significant_01"),
            std::string::npos);
  if (serial.t_test) {
    EXPECT_EQ(serial.t_test->degrees_of_freedom, 4.0);
  } else {
    EXPECT_FALSE(serial.t_test_note.empty());
  }
  const std::string text = slurp(serial.comparison_text);
  EXPECT_NE(text.find("t-statistic"), std::string::npos);

  c.jobs = 3;
  c.output_dir = (root_ / "parallel").string();
  const ExperimentSummary parallel = cmd_compare(c);
  EXPECT_EQ(slurp(parallel.comparison_csv), csv);
}

TEST_F(Workspace, CompareNeedsTwoRuns) {
  ExperimentConfig c = prepared(30, 5);
  c.run_count = 1;
  EXPECT_THROW(cmd_compare(c), TooFewRuns);
}

TEST(ChaosDump, FirstIterates) {
  std::ostringstream out;
  cmd_chaos_dump(out, 0.2, 4.0, 0, 3, chaos::NoiseMode::kRaw);
  std::istringstream in(out.str());
  double a, b, c;
  in >> a >> b >> c;
  EXPECT_DOUBLE_EQ(a, 0.64);
  EXPECT_DOUBLE_EQ(b, 0.9216);
  EXPECT_NEAR(c, 0.28901376, 1e-12);
  EXPECT_THROW(cmd_chaos_dump(out, 0.75, 4.0, 0, 3, chaos::NoiseMode::kRaw), InvalidSeed);
}

}  // namespace
}  // namespace cvae::experiment
