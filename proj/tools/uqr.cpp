// SPDX-License-Identifier: Apache-2.0
// uqr: synthetic data, training and benchmark front end.
#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "uqr/cli.hpp"
#include "uqr/metrics.hpp"
#include "uqr/synth.hpp"

namespace fs = std::filesystem;
using namespace uqr;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("config file not found: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

std::pair<std::string, std::string> split_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + text + "'");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

struct Common {
  std::string config;
  std::string features;
  std::string annotations;
  std::string splits;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string dimension = "both";
  std::size_t jobs = 1;
  bool continuous = false;
  std::vector<std::string> overrides;
};

void add_data_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--features", c.features, "Features CSV (stimulus_id,f0,...)")->envname("UQR_FEATURES");
  cmd->add_option("--annotations", c.annotations, "Per-rater annotations CSV")->envname("UQR_ANNOTATIONS");
  cmd->add_option("--splits", c.splits, "Split assignment CSV")->envname("UQR_SPLITS");
  cmd->add_option("--dimension", c.dimension, "valence, arousal or both")
      ->check(CLI::IsMember({"valence", "arousal", "both"}))
      ->envname("UQR_DIMENSION");
  cmd->add_flag("--continuous-ratings", c.continuous, "Accept non-integer ratings")->envname("UQR_CONTINUOUS_RATINGS");
}

void add_common_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key = value config file")->envname("UQR_CONFIG");
  cmd->add_option("--out", c.out, "Output directory")->required()->envname("UQR_OUT");
  cmd->add_option("--seed", c.seed, "Base seed")->envname("UQR_SEED");
  cmd->add_option("--set", c.overrides, "Config override key=value (repeatable)");
}

TrainConfig build_train_config(const Common& c) {
  TrainConfig config;
  if (!c.config.empty()) config = parse_train_config(read_file(c.config));
  for (const auto& o : c.overrides) {
    const auto [k, v] = split_assignment(o);
    set_config_value(config, k, v);
  }
  if (c.seed) config.seed = *c.seed;
  config.validate();
  return config;
}

DataPaths data_paths(const Common& c) {
  return {c.features, c.annotations, c.splits, c.continuous};
}

std::map<std::string, std::string> input_map(const Common& c) {
  std::map<std::string, std::string> m{
      {"features", c.features}, {"annotations", c.annotations}, {"splits", c.splits}};
  if (!c.config.empty()) m["config"] = c.config;
  return m;
}

int run_synth(const Common& c) {
  SynthConfig config;
  if (!c.config.empty()) config = parse_synth_config(read_file(c.config));
  for (const auto& o : c.overrides) {
    const auto [k, v] = split_assignment(o);
    set_synth_value(config, k, v);
  }
  if (c.seed) config.seed = *c.seed;
  if (c.continuous) config.quantize = false;
  const SynthOutputs out = cmd_synth(config, c.out);
  std::cout << "wrote synthetic dataset to " << c.out << " (" << config.n_stimuli << " stimuli, "
            << config.raters_per_stimulus << " raters each)\n";
  (void)out;
  return 0;
}

int run_train(const Common& c) {
  const TrainConfig config = build_train_config(c);
  LoadSummary summary;
  const Dataset dataset = load_inputs(data_paths(c), &summary);
  for (const auto& w : summary.warnings) std::cerr << "warning: " << w << "\n";
  const TrainOutputs out = cmd_train(dataset, config, parse_dimensions(c.dimension), c.out, input_map(c));
  for (const auto& p : out.checkpoints) std::cout << "checkpoint: " << p.string() << "\n";
  return 0;
}

struct BenchFlags {
  std::string method = "all";
  std::size_t runs = 1;
  std::size_t ensemble_size = 15;
  std::size_t mc_draws = 50;
  std::string oracle;
  std::string checkpoint;
};

int run_benchmark_cmd(const Common& c, const BenchFlags& b) {
  const auto start = std::chrono::steady_clock::now();
  BenchmarkOptions options;
  options.methods = parse_methods(b.method);
  options.dims = parse_dimensions(c.dimension);
  options.config = build_train_config(c);
  options.base_seed = options.config.seed;
  options.ensemble_size = b.ensemble_size;
  options.mc_draws = b.mc_draws;
  options.runs = b.runs;
  options.jobs = c.jobs;
  if (!b.checkpoint.empty()) {
    if (!fs::is_regular_file(b.checkpoint)) throw UsageError("checkpoint file not found: " + b.checkpoint);
    options.checkpoint = fs::path(b.checkpoint);
  }
  if (!b.oracle.empty()) {
    if (!fs::is_regular_file(b.oracle)) throw UsageError("oracle file not found: " + b.oracle);
    options.oracle = read_oracle(b.oracle);
  }

  LoadSummary summary;
  const Dataset dataset = load_inputs(data_paths(c), &summary);
  for (const auto& w : summary.warnings) std::cerr << "warning: " << w << "\n";

  const fs::path out_dir = c.out;
  const BenchmarkResult result = run_benchmark(dataset, options, out_dir);
  for (const auto& line : result.log) std::cerr << line << "\n";

  const std::string table = report_to_table(result.report);
  write_file(out_dir / "report.json", report_to_json(result.report) + "\n");
  write_file(out_dir / "report.txt", table);
  std::cout << table;

  RunManifest manifest;
  manifest.command = "benchmark";
  manifest.config = config_snapshot(options.config);
  manifest.config["method"] = b.method;
  manifest.config["dimension"] = c.dimension;
  manifest.config["runs"] = std::to_string(b.runs);
  manifest.config["ensemble_size"] = std::to_string(b.ensemble_size);
  manifest.config["mc_draws"] = std::to_string(b.mc_draws);
  for (std::size_t r = 0; r < std::max(b.runs, b.ensemble_size); ++r) manifest.seeds.push_back(options.base_seed + r);
  manifest.inputs = input_map(c);
  if (!b.oracle.empty()) manifest.inputs["oracle"] = b.oracle;
  if (!b.checkpoint.empty()) manifest.inputs["checkpoint"] = b.checkpoint;
  for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json") {
      manifest.outputs.push_back(fs::relative(entry.path(), out_dir).generic_string());
    }
  }
  std::sort(manifest.outputs.begin(), manifest.outputs.end());
  manifest.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_manifest(out_dir / "manifest.json", manifest);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributional regression with uncertainty estimates"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  Common synth_opts, train_opts, bench_opts;
  BenchFlags bench;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with known mean and SD maps");
  add_common_flags(synth, synth_opts);
  synth->add_flag("--continuous-ratings", synth_opts.continuous, "Skip Likert quantization");

  auto* train_cmd = app.add_subcommand("train", "Train one network per affect dimension");
  add_common_flags(train_cmd, train_opts);
  add_data_flags(train_cmd, train_opts);

  auto* bench_cmd = app.add_subcommand("benchmark", "Train, estimate and score uncertainty methods");
  add_common_flags(bench_cmd, bench_opts);
  add_data_flags(bench_cmd, bench_opts);
  bench_cmd->add_option("--method", bench.method, "seeds, mc_dropout, nll, mse, kld, comma list or all")
      ->envname("UQR_METHOD");
  bench_cmd->add_option("--jobs", bench_opts.jobs, "Parallel training runs")
      ->check(CLI::PositiveNumber)
      ->envname("UQR_JOBS");
  bench_cmd->add_option("--runs", bench.runs, "Independent runs for single-model methods")->envname("UQR_RUNS");
  bench_cmd->add_option("--ensemble-size", bench.ensemble_size, "Members of the seeds ensemble")
      ->envname("UQR_ENSEMBLE_SIZE");
  bench_cmd->add_option("--mc-draws", bench.mc_draws, "Dropout inference passes")->envname("UQR_MC_DRAWS");
  bench_cmd->add_option("--oracle", bench.oracle, "Oracle CSV from synth; adds oracle-scored rows")
      ->envname("UQR_ORACLE");
  bench_cmd->add_option("--checkpoint", bench.checkpoint, "Evaluate a trained checkpoint instead of training")
      ->envname("UQR_CHECKPOINT");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) return run_synth(synth_opts);
    if (*train_cmd) return run_train(train_opts);
    return run_benchmark_cmd(bench_opts, bench);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
