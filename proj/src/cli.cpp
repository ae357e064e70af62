// SPDX-License-Identifier: Apache-2.0
#include "uqr/cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "uqr/parallel.hpp"
#include "uqr/uq.hpp"

namespace uqr {

namespace fs = std::filesystem;

namespace {

constexpr MethodTraits kMethods[] = {
    {Method::seeds, "seeds", LossKind::mse_mean_only, false, true, true},
    {Method::mc_dropout, "mc_dropout", LossKind::mse_mean_only, false, false, true},
    {Method::nll, "nll", LossKind::nll, false, false, false},
    {Method::mse, "mse", LossKind::mse, true, false, false},
    {Method::kld, "kld", LossKind::kld, true, false, false},
};

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace

const MethodTraits& method_traits(Method method) {
  for (const auto& t : kMethods) {
    if (t.method == method) return t;
  }
  throw std::invalid_argument("unknown method");
}

std::string to_string(Method method) { return std::string(method_traits(method).name); }

Method parse_method(const std::string& text) {
  for (const auto& t : kMethods) {
    if (t.name == text) return t.method;
  }
  throw UsageError("unknown method '" + text + "' (expected seeds, mc_dropout, nll, mse, kld or all)");
}

std::vector<Method> parse_methods(const std::string& text) {
  if (text == "all") return {Method::seeds, Method::mc_dropout, Method::nll, Method::mse, Method::kld};
  std::vector<Method> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const Method m = parse_method(item);
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  if (out.empty()) throw UsageError("no method given");
  return out;
}

std::vector<AffectDimension> parse_dimensions(const std::string& text) {
  if (text == "both") return {AffectDimension::valence, AffectDimension::arousal};
  try {
    return {parse_affect_dimension(text)};
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

Dataset load_inputs(const DataPaths& paths, LoadSummary* summary) {
  const std::pair<const char*, const fs::path*> files[] = {
      {"features", &paths.features}, {"annotations", &paths.annotations}, {"splits", &paths.splits}};
  for (const auto& [what, path] : files) {
    if (path->empty()) throw UsageError(std::string("no ") + what + " file given");
    if (!fs::is_regular_file(*path)) throw UsageError(std::string(what) + " file not found: " + path->string());
  }
  try {
    LoadOptions options;
    options.allow_fractional_ratings = paths.continuous_ratings;
    return load_dataset(paths.features, paths.annotations, paths.splits, RatingScale::likert9(), options, summary);
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
}

void write_manifest(const fs::path& path, const RunManifest& m) {
  nlohmann::json j;
  j["command"] = m.command;
  j["tool_version"] = kToolVersion;
  j["config"] = m.config;
  j["seeds"] = m.seeds;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["started_at"] = m.started_at;
  j["wall_clock_seconds"] = m.wall_clock_seconds;
  write_text(path, j.dump(2) + "\n");
}

TrainOutputs cmd_train(const Dataset& dataset, const TrainConfig& config, const std::vector<AffectDimension>& dims,
                       const fs::path& out_dir, const std::map<std::string, std::string>& inputs) {
  const auto start = std::chrono::steady_clock::now();
  RunManifest manifest;
  manifest.command = "train";
  manifest.started_at = utc_now();
  manifest.config = config_snapshot(config);
  manifest.seeds = {config.seed};
  manifest.inputs = inputs;

  TrainOutputs out;
  for (const auto dim : dims) {
    TrainConfig c = config;
    c.affect_dimension = dim;
    TrainResult result = train(dataset, c);
    const fs::path dir = out_dir / to_string(dim);
    const fs::path checkpoint = dir / "checkpoint.json";
    const fs::path report = dir / "train_report.json";
    result.report.checkpoint = checkpoint.filename().string();
    save_checkpoint(checkpoint, result.params);
    write_text(report, report_to_json(result.report, c) + "\n");
    out.checkpoints.push_back(checkpoint);
    out.reports.push_back(report);
    manifest.outputs.push_back(fs::relative(checkpoint, out_dir).generic_string());
    manifest.outputs.push_back(fs::relative(report, out_dir).generic_string());
  }
  manifest.config["affect_dimension"] = dims.size() == 2 ? "both" : to_string(dims.front());
  manifest.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.manifest = out_dir / "manifest.json";
  write_manifest(out.manifest, manifest);
  return out;
}

// ---------------------------------------------------------------------------
// Benchmark

namespace {

struct RunOutput {
  NetworkParameters params;
  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<std::vector<double>> samples;  // MC draws per stimulus
};

NetworkParameters obtain_model(const BenchmarkOptions& options, const MethodTraits& traits, const SplitView& train_v,
                               const SplitView& val_v, TrainConfig config) {
  if (!options.checkpoint) return train(train_v, val_v, config).params;
  NetworkParameters params = load_checkpoint(*options.checkpoint);
  const Architecture& arch = params.architecture();
  if (arch.input_dim != static_cast<std::size_t>(train_v.features.rows())) {
    throw UsageError("checkpoint expects " + std::to_string(arch.input_dim) + " features, data has " +
                     std::to_string(train_v.features.rows()));
  }
  if (traits.method != Method::mc_dropout && arch.head_mode != HeadMode::mean_variance) {
    throw UsageError("method " + std::string(traits.name) + " needs a mean_variance checkpoint, got mean_only");
  }
  return params;
}

MetricCell score(const std::vector<std::vector<double>>& runs, const std::vector<double>& truth) {
  return evaluate(runs, truth);
}

// Shared-bin marginal histograms of empirical and predicted values.
void write_histogram_csv(const fs::path& path, const std::vector<double>& empirical,
                         const std::vector<double>& predicted, std::size_t bins = 20) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto* v : {&empirical, &predicted}) {
    for (double x : *v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  if (!(hi > lo)) hi = lo + 1.0;
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<std::size_t> ce(bins, 0), cp(bins, 0);
  auto bin = [&](double x) {
    return std::min(bins - 1, static_cast<std::size_t>((x - lo) / width));
  };
  for (double x : empirical) ++ce[bin(x)];
  for (double x : predicted) ++cp[bin(x)];
  std::ostringstream out;
  out << "bin_lo,bin_hi,empirical_count,predicted_count\n";
  for (std::size_t b = 0; b < bins; ++b) {
    out << format_double(lo + width * b) << ',' << format_double(lo + width * (b + 1)) << ',' << ce[b] << ','
        << cp[b] << '\n';
  }
  write_text(path, out.str());
}

}  // namespace

BenchmarkResult run_benchmark(const Dataset& dataset, const BenchmarkOptions& options, const fs::path& out_dir) {
  if (options.methods.empty()) throw UsageError("no method selected");
  if (options.runs == 0) throw UsageError("--runs must be at least 1");
  if (options.checkpoint && options.dims.size() != 1) {
    throw UsageError("--checkpoint evaluates one model; select a single --dimension");
  }
  const bool write = !out_dir.empty();
  BenchmarkResult result;
  std::map<Method, MethodMetrics> rows;
  std::map<Method, MethodMetrics> oracle_rows;

  for (const auto dim : options.dims) {
    const SplitView train_v = make_view(dataset, Split::train, dim);
    const SplitView val_v = make_view(dataset, Split::val, dim);
    const SplitView test_v = make_view(dataset, Split::test, dim);
    if (test_v.size() == 0) throw UsageError("test split is empty");
    const std::vector<double> truth_mu = to_std(test_v.mu);
    const std::vector<double> truth_sd = to_std(test_v.sigma);

    for (const Method method : options.methods) {
      const MethodTraits& traits = method_traits(method);
      TrainConfig config = options.config;
      config.loss_kind = traits.loss;
      config.affect_dimension = dim;
      if (method != Method::seeds) config.force_mean_variance_head = false;
      const std::string tag = std::string(traits.name) + "_" + to_string(dim);
      const fs::path method_dir = out_dir / std::string(traits.name) / to_string(dim);

      MethodPredictions preds{method, dim, test_v.ids, {}, {}};
      std::vector<double> ensemble_mean;

      if (method == Method::seeds) {
        if (options.checkpoint) throw UsageError("seeds trains its own ensemble; --checkpoint is not accepted");
        if (options.ensemble_size < 2) {
          throw UsageError("seeds needs at least 2 training runs (got " + std::to_string(options.ensemble_size) + ")");
        }
        EnsembleConfig ensemble{options.ensemble_size, {}, options.base_seed};
        result.log.push_back(tag + ": " + std::to_string(ensemble.n) + " training runs, " + std::to_string(ensemble.n) +
                             " inference passes per stimulus");
        SeedsResult seeds = seeds_pipeline(train_v, val_v, test_v, config, ensemble, options.jobs);
        for (const auto& w : seeds.warnings) result.log.push_back(tag + ": warning: " + w);
        for (const auto& p : seeds.member_predictions) preds.mean_runs.push_back(to_std(p));
        preds.sd_runs.push_back(to_std(seeds.estimates.sds()));
        ensemble_mean = to_std(seeds.estimates.means());
        if (write) {
          EnsembleManifest manifest{"seeds", seeds.seeds, {}, seeds.estimates.ids, seeds.estimates.samples};
          for (std::size_t i = 0; i < seeds.members.size(); ++i) {
            const fs::path ckpt = method_dir / ("seed_" + std::to_string(seeds.seeds[i]) + ".json");
            save_checkpoint(ckpt, seeds.members[i].params);
            manifest.checkpoints.push_back(fs::relative(ckpt, out_dir).generic_string());
          }
          write_ensemble_manifest(method_dir / "ensemble.json", manifest);
        }
        try {
          result.log.push_back(tag + ": ensemble-mean test R2 = " + format_double(r2(truth_mu, ensemble_mean)));
        } catch (const MetricUndefined&) {
        }
      } else {
        if (method == Method::mc_dropout && options.mc_draws < 2) {
          throw UsageError("mc_dropout needs at least 2 inference passes (got " + std::to_string(options.mc_draws) + ")");
        }
        const std::size_t runs = options.checkpoint ? 1 : options.runs;
        result.log.push_back(tag + ": " + std::to_string(runs) + " independent training run(s), " +
                             (method == Method::mc_dropout ? std::to_string(options.mc_draws) : std::string("1")) +
                             " inference pass(es) per stimulus");
        std::vector<RunOutput> outputs(runs);
        parallel_for(runs, options.jobs, [&](std::size_t r) {
          TrainConfig c = config;
          c.seed = options.base_seed + r;
          RunOutput& out = outputs[r];
          out.params = obtain_model(options, traits, train_v, val_v, c);
          if (method == Method::mc_dropout) {
            if (!(out.params.architecture().dropout_rate > 0.0)) {
              throw UsageError("mc_dropout needs a model trained with dropout_rate > 0");
            }
            const EnsembleConfig draws{options.mc_draws, {}, c.seed};
            const SampledEstimates est = mc_dropout_pipeline(out.params, test_v, draws, c.seed);
            out.mean = to_std(est.means());
            out.sd = to_std(est.sds());
            out.samples = est.samples;
          } else {
            const DirectEstimates est = direct_estimator(out.params, test_v);
            out.mean = to_std(est.mu_hat);
            out.sd = to_std(est.sigma_hat);
          }
        });
        for (std::size_t r = 0; r < runs; ++r) {
          preds.mean_runs.push_back(outputs[r].mean);
          preds.sd_runs.push_back(outputs[r].sd);
          if (!write) continue;
          const std::uint64_t seed = options.base_seed + r;
          const fs::path ckpt = method_dir / ("seed_" + std::to_string(seed) + ".json");
          if (!options.checkpoint) save_checkpoint(ckpt, outputs[r].params);
          if (method == Method::mc_dropout) {
            EnsembleManifest manifest{"mc_dropout", {seed}, {}, test_v.ids, outputs[r].samples};
            manifest.checkpoints.push_back(options.checkpoint ? options.checkpoint->string()
                                                               : fs::relative(ckpt, out_dir).generic_string());
            write_ensemble_manifest(method_dir / ("draws_seed_" + std::to_string(seed) + ".json"), manifest);
          }
        }
      }

      auto& row = rows[method];
      row.method = std::string(traits.name);
      row.at(dim, Target::mean) = score(preds.mean_runs, truth_mu);
      row.at(dim, Target::sd) = score(preds.sd_runs, truth_sd);
      if (options.oracle) {
        std::vector<double> oracle_mu;
        std::vector<double> oracle_sd;
        for (const auto& id : test_v.ids) {
          const auto it = options.oracle->find(id);
          if (it == options.oracle->end()) throw UsageError("oracle has no entry for stimulus '" + id + "'");
          oracle_mu.push_back(it->second.mu(dim));
          oracle_sd.push_back(it->second.sigma(dim));
        }
        auto& orow = oracle_rows[method];
        orow.method = std::string(traits.name) + " vs oracle";
        orow.at(dim, Target::mean) = score(preds.mean_runs, oracle_mu);
        orow.at(dim, Target::sd) = score(preds.sd_runs, oracle_sd);
      }

      if (write) {
        const std::vector<double>& mean_pred = ensemble_mean.empty() ? preds.mean_runs.front() : ensemble_mean;
        write_scatter_csv(out_dir / "scatter" / (tag + "_mean.csv"), test_v.ids, truth_mu, mean_pred);
        write_scatter_csv(out_dir / "scatter" / (tag + "_sd.csv"), test_v.ids, truth_sd, preds.sd_runs.front());
        write_histogram_csv(out_dir / "scatter" / (tag + "_mean_hist.csv"), truth_mu, mean_pred);
        write_histogram_csv(out_dir / "scatter" / (tag + "_sd_hist.csv"), truth_sd, preds.sd_runs.front());
      }
      result.predictions.push_back(std::move(preds));
      if (!ensemble_mean.empty()) {
        result.predictions.back().mean_runs.insert(result.predictions.back().mean_runs.begin(), ensemble_mean);
      }
    }
  }

  for (const Method m : options.methods) result.report.methods.push_back(rows.at(m));
  for (const Method m : options.methods) {
    if (oracle_rows.contains(m)) result.report.methods.push_back(oracle_rows.at(m));
  }
  result.report.notes.push_back(
      "mean and SD metrics are scored on the test split against the empirical rater mean and SD");
  result.report.notes.push_back(
      "seeds mean row: across-member metrics; seeds SD row: ensemble spread (one value, no +/-)");
  result.report.notes.push_back(
      "ref:DEAM rows are published results on DEAM with a frozen audio foundation model; there, no "
      "method's SD estimate correlated with interrater SD and every SD R2 was far below zero");
  for (const auto& line : result.log) result.report.notes.push_back(line);
  return result;
}

SynthOutputs cmd_synth(const SynthConfig& config, const fs::path& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  SynthDataset synth;
  try {
    synth = generate(config);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("invalid synth config: ") + e.what());
  }
  SynthOutputs out;
  out.files = write_synth(out_dir, synth);
  RunManifest manifest;
  manifest.command = "synth";
  manifest.started_at = utc_now();
  manifest.config = {
      {"n_stimuli", std::to_string(config.n_stimuli)},
      {"feature_dim", std::to_string(config.feature_dim)},
      {"raters_per_stimulus", std::to_string(config.raters_per_stimulus)},
      {"mean_scale", format_double(config.mean_scale)},
      {"mean_gain", format_double(config.mean_gain)},
      {"sd_gain", format_double(config.sd_gain)},
      {"sd_min", format_double(config.sd_min)},
      {"sd_max", format_double(config.sd_max)},
      {"genres", std::to_string(config.genres)},
      {"quantize", config.quantize ? "true" : "false"},
  };
  manifest.seeds = {config.seed};
  for (const auto* p : {&out.files.features, &out.files.annotations, &out.files.splits, &out.files.oracle,
                        &out.files.genres}) {
    manifest.outputs.push_back(p->filename().string());
  }
  manifest.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.manifest = out_dir / "manifest.json";
  write_manifest(out.manifest, manifest);
  return out;
}

}  // namespace uqr
