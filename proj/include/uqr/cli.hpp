// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "uqr/data.hpp"
#include "uqr/metrics.hpp"
#include "uqr/optimize.hpp"
#include "uqr/synth.hpp"

namespace uqr {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Bad input or configuration; commands map it to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Method { seeds, mc_dropout, nll, mse, kld };

/// Training target, output and run multiplicity of each method.
struct MethodTraits {
  Method method;
  std::string_view name;
  LossKind loss;
  bool needs_empirical_sd;
  bool multiple_training_runs;
  bool multiple_inference_runs;
};

const MethodTraits& method_traits(Method method);
Method parse_method(const std::string& text);
/// "all" or a comma-separated list.
std::vector<Method> parse_methods(const std::string& text);
std::string to_string(Method method);

/// "valence", "arousal" or "both".
std::vector<AffectDimension> parse_dimensions(const std::string& text);

struct DataPaths {
  std::filesystem::path features;
  std::filesystem::path annotations;
  std::filesystem::path splits;
  bool continuous_ratings = false;
};

/// Checks that the files exist, then loads and validates. Any failure is a
/// UsageError naming the path or record.
Dataset load_inputs(const DataPaths& paths, LoadSummary* summary = nullptr);

struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::string> inputs;
  std::vector<std::string> outputs;
  double wall_clock_seconds = 0.0;
  std::string started_at;
};

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

struct TrainOutputs {
  std::vector<std::filesystem::path> checkpoints;
  std::vector<std::filesystem::path> reports;
  std::filesystem::path manifest;
};

/// Trains one model per requested dimension and writes
/// <out>/<dimension>/{checkpoint.json,train_report.json} plus manifest.json.
TrainOutputs cmd_train(const Dataset& dataset, const TrainConfig& config, const std::vector<AffectDimension>& dims,
                       const std::filesystem::path& out_dir, const std::map<std::string, std::string>& inputs = {});

struct BenchmarkOptions {
  std::vector<Method> methods;
  std::vector<AffectDimension> dims{AffectDimension::valence, AffectDimension::arousal};
  TrainConfig config;
  std::size_t ensemble_size = 15;
  std::size_t mc_draws = 50;
  /// Independent training runs for the single-model methods.
  std::size_t runs = 1;
  std::uint64_t base_seed = 41;
  std::size_t jobs = 1;
  /// Evaluate this trained model instead of training (single-model methods).
  std::optional<std::filesystem::path> checkpoint;
  /// Ground truth for synthetic data; adds rows scored against it.
  std::optional<std::map<std::string, OracleEntry>> oracle;
};

/// Test-split predictions of one method on one dimension, one entry per run.
struct MethodPredictions {
  Method method;
  AffectDimension dim;
  std::vector<std::string> ids;
  std::vector<std::vector<double>> mean_runs;
  std::vector<std::vector<double>> sd_runs;
};

struct BenchmarkResult {
  MetricReport report;
  std::vector<MethodPredictions> predictions;
  std::vector<std::string> log;
};

/// Trains, estimates and evaluates each method. When out_dir is nonempty,
/// also writes checkpoints, ensemble manifests, scatter CSVs and reports.
BenchmarkResult run_benchmark(const Dataset& dataset, const BenchmarkOptions& options,
                              const std::filesystem::path& out_dir = {});

struct SynthOutputs {
  SynthFiles files;
  std::filesystem::path manifest;
};

SynthOutputs cmd_synth(const SynthConfig& config, const std::filesystem::path& out_dir);

}  // namespace uqr
