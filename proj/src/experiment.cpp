#include "cvae/experiment.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>
#include <thread>

#include "cvae/data.hpp"
#include "cvae/text_io.hpp"

namespace cvae::experiment {
namespace {

namespace fs = std::filesystem;

std::vector<std::string> parse_list(const std::string& value) {
  const std::string v = trim(value);
  if (v.size() >= 2 && v.front() == '[' && v.back() == ']') {
    std::vector<std::string> items;
    for (const auto& item : split(v.substr(1, v.size() - 2), ',')) {
      const std::string t = trim(item);
      if (t.empty()) throw ConfigError("empty element in list '" + value + "'");
      items.push_back(t);
    }
    if (items.empty()) throw ConfigError("empty list");
    return items;
  }
  if (v.empty()) throw ConfigError("missing value");
  return {v};
}

std::string scalar(const std::string& key, const std::string& value) {
  const auto items = parse_list(value);
  if (items.size() != 1 || trim(value).front() == '[') {
    throw ConfigError("'" + key + "' takes a single value, not a list");
  }
  return items.front();
}

std::uint64_t non_negative(const std::string& key, const std::string& text) {
  const long long v = parse_integer(text);
  if (v < 0) throw ConfigError("'" + key + "' must be non-negative");
  return static_cast<std::uint64_t>(v);
}

std::uint64_t positive(const std::string& key, const std::string& text) {
  const auto v = non_negative(key, text);
  if (v == 0) throw ConfigError("'" + key + "' must be positive");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("'" + key + "' expects true or false");
}

template <typename T, typename F>
std::string join(const std::vector<T>& values, F&& format) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ", ";
    out += format(values[i]);
  }
  return out + "]";
}

fs::path output_file(const ExperimentConfig& config, const std::string& model_tag,
                     std::size_t run_index, const std::string& suffix) {
  return fs::path(config.output_dir) /
         (config.dataset_tag + "_" + model_tag + "_run" + std::to_string(run_index) + suffix);
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  return out;
}

void write_preamble(std::ostream& out, const ExperimentConfig& config) {
  for (const auto& line : describe(config)) out << "# " << line << '\n';
}

std::string train_config_cells(const vae::TrainConfig& c) {
  return std::to_string(c.epochs) + ',' + format_double(c.learning_rate) + ',' +
         format_double(c.momentum) + ',' + nn::to_string(c.activation) + ',' +
         nn::to_string(c.optimizer) + ',' + std::to_string(c.total_layers);
}

struct LoadedSplits {
  Eigen::MatrixXd train;
  Eigen::MatrixXd test;
  std::string pipeline_id;
};

LoadedSplits load_splits(const std::string& data_dir) {
  const fs::path dir(data_dir);
  std::ifstream pipeline_in(dir / "pipeline.txt");
  if (!pipeline_in) {
    throw InputError("no pipeline.txt in '" + data_dir + "'; run `cvae preprocess` first");
  }
  const data::Pipeline pipeline = data::Pipeline::deserialize(pipeline_in);
  LoadedSplits splits;
  splits.pipeline_id = pipeline.id();
  for (const auto* name : {"train.matrix", "test.matrix"}) {
    std::ifstream in(dir / name);
    if (!in) throw InputError("missing '" + (dir / name).string() + "'");
    auto matrix = data::read_matrix(in, splits.pipeline_id);
    (std::string(name) == "train.matrix" ? splits.train : splits.test) = std::move(matrix);
  }
  return splits;
}

}  // namespace

std::size_t Grid::size() const {
  return epochs.size() * learning_rates.size() * momenta.size() * activations.size() *
         optimizers.size() * layers.size();
}

Grid paper_grid() {
  Grid grid;
  grid.learning_rates = {0.001, 0.0005};
  grid.momenta = {0.005, 0.007, 0.009};
  grid.epochs = {50, 75, 100, 250, 150};
  grid.activations = {nn::Activation::kRelu, nn::Activation::kTanh, nn::Activation::kLeakyRelu};
  grid.optimizers = {nn::OptimizerKind::kAdam, nn::OptimizerKind::kSgdMomentum};
  grid.layers = {5, 7};
  return grid;
}

void apply_setting(ExperimentConfig& config, const std::string& raw_key, const std::string& value) {
  const std::string key = trim(raw_key);
  auto list = [&] { return parse_list(value); };
  auto one = [&] { return scalar(key, value); };

  if (key == "dataset") {
    config.dataset_tag = one();
  } else if (key == "csv") {
    config.csv_path = one();
  } else if (key == "schema") {
    config.schema_path = one();
  } else if (key == "data_dir") {
    config.data_dir = one();
  } else if (key == "output_dir") {
    config.output_dir = one();
  } else if (key == "model") {
    config.model = one();
    noise_kind_for_model(config.model);
  } else if (key == "compare_models") {
    auto models = list();
    if (models.size() != 2) throw ConfigError("compare_models needs exactly two model tags");
    for (const auto& m : models) noise_kind_for_model(m);
    config.compare_models = std::move(models);
  } else if (key == "epochs") {
    config.grid.epochs.clear();
    for (const auto& v : list()) config.grid.epochs.push_back(non_negative(key, v));
  } else if (key == "learning_rate") {
    config.grid.learning_rates.clear();
    for (const auto& v : list()) {
      const double lr = parse_double(v);
      if (!(lr >= 0.0)) throw ConfigError("learning_rate must be non-negative");
      config.grid.learning_rates.push_back(lr);
    }
  } else if (key == "momentum") {
    config.grid.momenta.clear();
    for (const auto& v : list()) config.grid.momenta.push_back(parse_double(v));
  } else if (key == "activation") {
    config.grid.activations.clear();
    for (const auto& v : list()) config.grid.activations.push_back(nn::activation_from_string(v));
  } else if (key == "optimizer") {
    config.grid.optimizers.clear();
    for (const auto& v : list()) config.grid.optimizers.push_back(nn::optimizer_from_string(v));
  } else if (key == "layers") {
    config.grid.layers.clear();
    for (const auto& v : list()) {
      const auto layers = positive(key, v);
      if (layers < 2) throw ConfigError("layers must be at least 2");
      config.grid.layers.push_back(static_cast<int>(layers));
    }
  } else if (key == "paper_grid") {
    if (parse_bool(key, one())) config.grid = paper_grid();
  } else if (key == "single_config") {
    config.single_config = parse_bool(key, one());
  } else if (key == "batch_size") {
    config.batch_size = static_cast<nn::Index>(positive(key, one()));
  } else if (key == "latent_dim") {
    config.latent_dim = static_cast<nn::Index>(positive(key, one()));
  } else if (key == "threshold") {
    config.threshold = occ::threshold_from_string(one());
  } else if (key == "run_count") {
    config.run_count = positive(key, one());
  } else if (key == "base_seed") {
    config.base_seed = non_negative(key, one());
  } else if (key == "chaos_lambda") {
    config.chaos_lambda = parse_double(one());
    if (!(config.chaos_lambda > 3.56 && config.chaos_lambda <= 4.0)) {
      throw ConfigError("chaos_lambda must lie in (3.56, 4]");
    }
  } else if (key == "chaos_burn_in") {
    config.chaos_burn_in = non_negative(key, one());
  } else if (key == "chaos_transform") {
    config.chaos_transform = chaos::noise_mode_from_string(one());
  } else if (key == "t_test") {
    const std::string kind = one();
    if (kind == "pooled") {
      config.t_test = stats::TTestKind::kPooled;
    } else if (kind == "welch") {
      config.t_test = stats::TTestKind::kWelch;
    } else {
      throw ConfigError("t_test must be pooled or welch");
    }
  } else if (key == "jobs") {
    config.jobs = positive(key, one());
  } else {
    throw ConfigError("unknown configuration key '" + key + "'");
  }
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig config;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const auto hash = line.find('#');
    const std::string content = trim(line.substr(0, hash));
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) throw ParseError(line_number, "expected 'key = value'");
    try {
      apply_setting(config, content.substr(0, eq), content.substr(eq + 1));
    } catch (const ParseError&) {
      throw;
    } catch (const InputError& e) {
      throw ParseError(line_number, e.what());
    }
  }
  return config;
}

ExperimentConfig read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file '" + path + "'");
  return parse_config(in);
}

std::vector<std::string> describe(const ExperimentConfig& c) {
  auto str = [](const std::string& s) { return s; };
  auto num = [](double v) { return format_double(v); };
  auto integer = [](auto v) { return std::to_string(v); };
  auto act = [](nn::Activation a) { return nn::to_string(a); };
  auto opt = [](nn::OptimizerKind k) { return nn::to_string(k); };
  return {
      "dataset = " + c.dataset_tag,
      "data_dir = " + c.data_dir,
      "model = " + c.model,
      "compare_models = " + join(c.compare_models, str),
      "epochs = " + join(c.grid.epochs, integer),
      "learning_rate = " + join(c.grid.learning_rates, num),
      "momentum = " + join(c.grid.momenta, num),
      "activation = " + join(c.grid.activations, act),
      "optimizer = " + join(c.grid.optimizers, opt),
      "layers = " + join(c.grid.layers, integer),
      "single_config = " + std::string(c.single_config ? "true" : "false"),
      "batch_size = " + std::to_string(c.batch_size),
      "latent_dim = " + std::to_string(c.latent_dim),
      "threshold = " + occ::to_string(c.threshold),
      "run_count = " + std::to_string(c.run_count),
      "base_seed = " + std::to_string(c.base_seed),
      "chaos_lambda = " + format_double(c.chaos_lambda),
      "chaos_burn_in = " + std::to_string(c.chaos_burn_in),
      "chaos_transform = " + chaos::to_string(c.chaos_transform),
      std::string("t_test = ") + (c.t_test == stats::TTestKind::kPooled ? "pooled" : "welch"),
  };
}

vae::NoiseKind noise_kind_for_model(const std::string& model_tag) {
  if (model_tag == "vae") return vae::NoiseKind::kGaussian;
  if (model_tag == "cvae") return vae::NoiseKind::kChaotic;
  throw ConfigError("unknown model '" + model_tag + "' (expected vae or cvae)");
}

std::uint64_t run_seed(const ExperimentConfig& config, std::size_t run_index) {
  return config.base_seed + run_index;
}

std::vector<vae::TrainConfig> expand(const ExperimentConfig& config, const std::string& model_tag,
                                     std::size_t run_index) {
  const std::uint64_t seed = run_seed(config, run_index);
  vae::TrainConfig base;
  base.batch_size = config.batch_size;
  base.latent_dim = config.latent_dim;
  base.init_seed = seed;
  base.noise.kind = noise_kind_for_model(model_tag);
  base.noise.gaussian_seed = seed;
  base.noise.chaos_lambda = config.chaos_lambda;
  base.noise.chaos_burn_in = config.chaos_burn_in;
  base.noise.chaos_transform = config.chaos_transform;
  if (base.noise.kind == vae::NoiseKind::kChaotic) {
    base.noise.chaos_seed = chaos::seed_for_run(seed, config.chaos_lambda);
  }

  const Grid& g = config.grid;
  if (g.size() == 0) throw ConfigError("empty hyperparameter grid");
  std::vector<vae::TrainConfig> configs;
  for (double lr : g.learning_rates) {
    for (double momentum : g.momenta) {
      for (std::size_t epochs : g.epochs) {
        for (nn::Activation activation : g.activations) {
          for (nn::OptimizerKind optimizer : g.optimizers) {
            for (int layers : g.layers) {
              vae::TrainConfig c = base;
              c.learning_rate = lr;
              c.momentum = momentum;
              c.epochs = epochs;
              c.activation = activation;
              c.optimizer = optimizer;
              c.total_layers = layers;
              configs.push_back(c);
              if (config.single_config) return configs;
            }
          }
        }
      }
    }
  }
  return configs;
}

RunOutcome train_and_evaluate(const Eigen::MatrixXd& train, const Eigen::MatrixXd& test,
                              const vae::TrainConfig& train_config,
                              const occ::ThresholdStrategy& threshold,
                              std::optional<vae::VaeModel>* trained) {
  if (train.cols() != test.cols()) throw ShapeMismatch("train and test widths differ");
  vae::VaeModel model(train.cols(), train_config.latent_dim, train_config.total_layers,
                      train_config.activation, train_config.init_seed);
  RunOutcome outcome;
  outcome.train_config = train_config;
  outcome.loss_trace = vae::train(model, train, train_config).loss_trace;
  const std::vector<double> train_scores = occ::decision_scores(train, model.reconstruct(train));
  const std::vector<double> test_scores = occ::decision_scores(test, model.reconstruct(test));
  outcome.report =
      occ::evaluate(test_scores, threshold, std::span<const double>(train_scores));
  if (trained != nullptr) trained->emplace(std::move(model));
  return outcome;
}

PreprocessSummary cmd_preprocess(const std::string& csv_path, const std::string& schema_path,
                                 const std::string& out_dir) {
  const data::Schema schema = data::read_schema(schema_path);
  const data::RawTable table = data::read_csv(csv_path);
  const data::OneClassSplit split = data::split_one_class(table, schema);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  open_output(dir / "pipeline.txt") << split.pipeline.serialize();
  {
    auto out = open_output(dir / "train.matrix");
    data::write_matrix(out, split.train, split.pipeline);
  }
  {
    auto out = open_output(dir / "test.matrix");
    data::write_matrix(out, split.test, split.pipeline);
  }

  PreprocessSummary summary;
  summary.total_rows = table.rows.size();
  summary.train_rows = static_cast<std::size_t>(split.train.rows());
  summary.test_rows = static_cast<std::size_t>(split.test.rows());
  summary.columns = static_cast<std::size_t>(split.pipeline.width());
  summary.pipeline_id = split.pipeline.id();
  return summary;
}

TrainEvalResult cmd_train_eval(const ExperimentConfig& config) {
  const std::vector<vae::TrainConfig> configs = expand(config, config.model, 0);
  if (configs.size() != 1) {
    throw ConfigError("train-eval needs a single configuration; the grid has " +
                      std::to_string(configs.size()) + " combinations (use single_config)");
  }
  const LoadedSplits splits = load_splits(config.data_dir);
  std::optional<vae::VaeModel> model;
  TrainEvalResult result;
  result.outcome =
      train_and_evaluate(splits.train, splits.test, configs.front(), config.threshold, &model);

  fs::create_directories(config.output_dir);
  const auto report_path = output_file(config, config.model, 0, "_report.csv");
  const auto model_path = output_file(config, config.model, 0, "_model.txt");
  const auto loss_path = output_file(config, config.model, 0, "_loss.csv");
  {
    auto out = open_output(report_path);
    occ::write_report(out, result.outcome.report, describe(config));
  }
  {
    auto out = open_output(model_path);
    write_preamble(out, config);
    vae::save_model(out, *model, {configs.front().noise, splits.pipeline_id});
  }
  {
    auto out = open_output(loss_path);
    write_preamble(out, config);
    out << "epoch,loss\n";
    for (std::size_t i = 0; i < result.outcome.loss_trace.size(); ++i) {
      out << i + 1 << ',' << format_double(result.outcome.loss_trace[i]) << '\n';
    }
  }
  result.report_path = report_path.string();
  result.model_path = model_path.string();
  result.loss_path = loss_path.string();
  return result;
}

ExperimentSummary cmd_compare(const ExperimentConfig& config) {
  if (config.run_count < 2) throw TooFewRuns("compare needs run_count >= 2");
  if (config.compare_models.size() != 2) throw ConfigError("compare needs two model tags");
  const LoadedSplits splits = load_splits(config.data_dir);

  const std::size_t model_count = config.compare_models.size();
  const std::size_t task_count = model_count * config.run_count;
  std::vector<RunRecord> records(task_count);
  std::vector<std::exception_ptr> failures(task_count);

  auto run_task = [&](std::size_t task) {
    const std::string& model_tag = config.compare_models[task / config.run_count];
    const std::size_t run = task % config.run_count;
    RunRecord record;
    record.run_index = run;
    record.seed = run_seed(config, run);
    for (const auto& train_config : expand(config, model_tag, run)) {
      const RunOutcome outcome =
          train_and_evaluate(splits.train, splits.test, train_config, config.threshold);
      record.grid.push_back({train_config, outcome.report.cr});
      if (outcome.report.cr > record.grid[record.best].cr) record.best = record.grid.size() - 1;
    }
    records[task] = std::move(record);
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t task = next++; task < task_count; task = next++) {
      try {
        run_task(task);
      } catch (...) {
        failures[task] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(config.jobs, task_count);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
  }
  for (const auto& failure : failures) {
    if (failure) std::rethrow_exception(failure);
  }

  ExperimentSummary summary;
  for (std::size_t m = 0; m < model_count; ++m) {
    ModelSeries series;
    series.model_tag = config.compare_models[m];
    series.series.model_tag = series.model_tag;
    series.series.dataset_tag = config.dataset_tag;
    for (std::size_t run = 0; run < config.run_count; ++run) {
      RunRecord& record = records[m * config.run_count + run];
      series.series.best_cr_per_run.push_back(record.best_cr());
      series.runs.push_back(std::move(record));
    }
    series.summary = stats::aggregate(series.series);
    summary.models.push_back(std::move(series));
  }
  // Second model against the first: positive t means the second scores higher.
  try {
    summary.t_test =
        stats::two_sample_t(summary.models[1].series, summary.models[0].series, config.t_test);
  } catch (const ZeroVariance& e) {
    summary.t_test_note = e.what();
  }

  fs::create_directories(config.output_dir);
  for (const auto& model : summary.models) {
    for (const auto& run : model.runs) {
      auto out = open_output(output_file(config, model.model_tag, run.run_index, ".csv"));
      write_preamble(out, config);
      out << "# run = " << run.run_index << ", seed = " << run.seed << '\n';
      out << "combination,epochs,learning_rate,momentum,activation,optimizer,layers,cr\n";
      for (std::size_t i = 0; i < run.grid.size(); ++i) {
        out << i << ',' << train_config_cells(run.grid[i].train_config) << ','
            << format_double(run.grid[i].cr) << '\n';
      }
      out << "best," << run.best << ',' << format_double(run.best_cr()) << '\n';
    }
  }
  const fs::path csv_path = fs::path(config.output_dir) / (config.dataset_tag + "_comparison.csv");
  const fs::path text_path = fs::path(config.output_dir) / (config.dataset_tag + "_comparison.txt");
  {
    auto out = open_output(csv_path);
    write_comparison_csv(out, config, summary);
  }
  {
    auto out = open_output(text_path);
    write_comparison_text(out, config, summary);
  }
  summary.comparison_csv = csv_path.string();
  summary.comparison_text = text_path.string();
  return summary;
}

void write_comparison_csv(std::ostream& out, const ExperimentConfig& config,
                          const ExperimentSummary& summary) {
  write_preamble(out, config);
  out << "dataset,model,mean_cr,std_cr,t_statistic,df,p_value,significant_05,significant_01\n";
  for (const auto& model : summary.models) {
    out << config.dataset_tag << ',' << model.model_tag << ',' << format_double(model.summary->mean)
        << ',' << format_double(model.summary->std_dev) << ",,,,,\n";
  }
  const std::string pair = summary.models[0].model_tag + " vs " + summary.models[1].model_tag;
  out << config.dataset_tag << ',' << pair << ",,,";
  if (summary.t_test) {
    const auto& t = *summary.t_test;
    out << format_double(t.t_statistic) << ',' << format_double(t.degrees_of_freedom) << ','
        << format_double(t.p_value) << ',' << (t.significant_05 ? "true" : "false") << ','
        << (t.significant_01 ? "true" : "false") << '\n';
  } else {
    out << "undefined,"
        << format_double(static_cast<double>(summary.models[0].runs.size() +
                                             summary.models[1].runs.size() - 2))
        << ",undefined,false,false\n";
  }
  out << "\nrun,seed";
  for (const auto& model : summary.models) out << ',' << model.model_tag << "_best_cr";
  out << '\n';
  for (std::size_t run = 0; run < config.run_count; ++run) {
    out << run << ',' << summary.models[0].runs[run].seed;
    for (const auto& model : summary.models) out << ',' << format_double(model.runs[run].best_cr());
    out << '\n';
  }
}

void write_comparison_text(std::ostream& out, const ExperimentConfig& config,
                           const ExperimentSummary& summary) {
  out << "Classification rate over " << config.run_count << " runs (best over "
      << config.grid.size() << (config.single_config ? " grid combinations, first only)\n"
                                                     : " grid combinations)\n");
  out << "Dataset\tModel\tMean Classification Rate (Standard Deviation)\n";
  for (const auto& model : summary.models) {
    out << config.dataset_tag << '\t' << model.model_tag << '\t'
        << stats::format_mean_std(*model.summary) << '\n';
  }
  out << "\nDataset\tModel\tt-statistic\tdf\tp-value\tsignificant at 5%\tsignificant at 1%\n";
  out << config.dataset_tag << '\t' << summary.models[0].model_tag << " vs "
      << summary.models[1].model_tag << '\t';
  if (summary.t_test) {
    const auto& t = *summary.t_test;
    char line[160];
    std::snprintf(line, sizeof line, "%.2f\t%g\t%.3g\t%s\t%s\n", t.t_statistic,
                  t.degrees_of_freedom, t.p_value, t.significant_05 ? "yes" : "no",
                  t.significant_01 ? "yes" : "no");
    out << line;
  } else {
    out << "undefined\t-\tundefined\tno\tno\n";
    out << "note: " << summary.t_test_note << '\n';
  }
}

void cmd_chaos_dump(std::ostream& out, double seed, double lambda, std::size_t burn_in,
                    std::size_t count, chaos::NoiseMode transform) {
  chaos::ChaoticGenerator generator(seed, lambda, burn_in);
  const chaos::NoiseTransform t{transform};
  for (std::size_t i = 0; i < count; ++i) out << format_double(t.apply(generator.next())) << '\n';
}

}  // namespace cvae::experiment
