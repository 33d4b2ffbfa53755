// Command-line front end: preprocess, train-eval, compare, chaos-dump, synth.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cvae/data.hpp"
#include "cvae/experiment.hpp"
#include "cvae/text_io.hpp"

namespace {

using cvae::experiment::ExperimentConfig;

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> settings;
  bool paper_grid = false;
  bool single_config = false;
};

void add_common(CLI::App* cmd, CommonOptions& options) {
  cmd->add_option("--config", options.config_path, "Flat key = value configuration file");
  cmd->add_option("--set", options.settings, "Override one setting, e.g. --set epochs=[50,100]")
      ->take_all();
  cmd->add_flag("--paper-grid", options.paper_grid, "Use the full 360-combination grid");
  cmd->add_flag("--single-config", options.single_config,
                "Evaluate only the first grid combination");
}

ExperimentConfig resolve(const CommonOptions& options) {
  ExperimentConfig config;
  if (!options.config_path.empty()) config = cvae::experiment::read_config(options.config_path);
  if (options.paper_grid) config.grid = cvae::experiment::paper_grid();
  for (const auto& setting : options.settings) {
    const auto eq = setting.find('=');
    if (eq == std::string::npos) {
      throw cvae::ConfigError("--set expects key=value, got '" + setting + "'");
    }
    cvae::experiment::apply_setting(config, setting.substr(0, eq), setting.substr(eq + 1));
  }
  if (options.single_config) config.single_config = true;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chaotic variational autoencoder one-class fraud detector"};
  app.require_subcommand(1);

  // preprocess
  auto* preprocess = app.add_subcommand("preprocess", "Normalize a labelled CSV into train/test splits");
  CommonOptions preprocess_opts;
  std::string csv_path, schema_path, data_dir;
  preprocess->add_option("--csv", csv_path, "Labelled CSV with a header row");
  preprocess->add_option("--schema", schema_path, "Schema file describing every column");
  preprocess->add_option("--out", data_dir, "Output directory for the normalized splits");
  add_common(preprocess, preprocess_opts);

  // train-eval
  auto* train_eval = app.add_subcommand("train-eval", "Train one model and score the positive test set");
  CommonOptions train_opts;
  add_common(train_eval, train_opts);

  // compare
  auto* compare = app.add_subcommand("compare", "Multi-run VAE vs C-VAE comparison with t-test");
  CommonOptions compare_opts;
  std::size_t jobs = 0;
  compare->add_option("--jobs", jobs, "Concurrent runs")->check(CLI::PositiveNumber);
  add_common(compare, compare_opts);

  // chaos-dump
  auto* dump = app.add_subcommand("chaos-dump", "Print logistic-map iterates, one per line");
  double seed = 0.2;
  double lambda = cvae::chaos::kDefaultLambda;
  std::size_t burn_in = cvae::chaos::kDefaultBurnIn;
  std::size_t count = 10;
  std::string transform = "raw";
  dump->add_option("--seed", seed, "Initial value x0 in (0,1)");
  dump->add_option("--lambda", lambda, "Control parameter in (3.56, 4]");
  dump->add_option("--burn-in", burn_in, "Discarded initial iterates");
  dump->add_option("--count", count, "Number of iterates to print");
  dump->add_option("--transform", transform, "raw | standardized");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic one-class dataset (CSV + schema)");
  std::uint64_t synth_seed = 7;
  std::size_t n_neg = 500, n_pos = 50, features = 8;
  double shift = 0.4;
  std::string synth_out = "synthetic";
  synth->add_option("--seed", synth_seed);
  synth->add_option("--n-neg", n_neg);
  synth->add_option("--n-pos", n_pos);
  synth->add_option("--features", features);
  synth->add_option("--shift", shift);
  synth->add_option("--out", synth_out, "Directory receiving data.csv and data.schema");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (*preprocess) {
      ExperimentConfig config = resolve(preprocess_opts);
      if (!csv_path.empty()) config.csv_path = csv_path;
      if (!schema_path.empty()) config.schema_path = schema_path;
      if (!data_dir.empty()) config.data_dir = data_dir;
      if (config.csv_path.empty() || config.schema_path.empty()) {
        throw cvae::ConfigError("preprocess needs --csv and --schema (or csv/schema in the config)");
      }
      const auto summary =
          cvae::experiment::cmd_preprocess(config.csv_path, config.schema_path, config.data_dir);
      std::cout << summary.total_rows << " rows: " << summary.train_rows << " train / "
                << summary.test_rows << " test, " << summary.columns << " encoded columns\n"
                << "pipeline " << summary.pipeline_id << " written to " << config.data_dir << '\n';
    } else if (*train_eval) {
      const ExperimentConfig config = resolve(train_opts);
      const auto result = cvae::experiment::cmd_train_eval(config);
      std::cout << "model " << config.model << ": CR = "
                << cvae::format_double(result.outcome.report.cr) << " (threshold "
                << cvae::format_double(result.outcome.report.threshold) << ")\n"
                << "report: " << result.report_path << '\n';
    } else if (*compare) {
      ExperimentConfig config = resolve(compare_opts);
      if (jobs > 0) config.jobs = jobs;
      const auto summary = cvae::experiment::cmd_compare(config);
      std::ifstream text(summary.comparison_text);
      std::cout << text.rdbuf() << "report: " << summary.comparison_csv << '\n';
    } else if (*dump) {
      cvae::experiment::cmd_chaos_dump(std::cout, seed, lambda, burn_in, count,
                                       cvae::chaos::noise_mode_from_string(transform));
    } else if (*synth) {
      const auto dataset = cvae::data::synth_occ(synth_seed, n_neg, n_pos, features, shift);
      std::filesystem::create_directories(synth_out);
      const std::filesystem::path dir(synth_out);
      std::ofstream csv(dir / "data.csv", std::ios::binary);
      cvae::data::write_csv(csv, cvae::data::to_raw_table(dataset));
      std::ofstream schema(dir / "data.schema", std::ios::binary);
      schema << "# " << dataset.provenance << '\n'
             << cvae::data::schema_text(cvae::data::numeric_schema(dataset));
      if (!csv || !schema) throw cvae::InputError("cannot write to '" + synth_out + "'");
      std::cout << "wrote " << dataset.rows.rows() << " rows to " << (dir / "data.csv").string()
                << '\n';
    }
  } catch (const cvae::NonFiniteLoss& e) {
    std::cerr << "error: numerical failure in epoch " << e.epoch() + 1 << ": " << e.what() << '\n';
    return kExitNumerical;
  } catch (const cvae::NumericalError& e) {
    std::cerr << "error: numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const cvae::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
