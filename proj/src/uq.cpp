// SPDX-License-Identifier: Apache-2.0
#include "uqr/uq.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "uqr/parallel.hpp"

namespace uqr {

std::vector<std::uint64_t> EnsembleConfig::seed_list() const {
  if (!seeds.empty()) return seeds;
  std::vector<std::uint64_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = base_seed + i;
  return out;
}

void EnsembleConfig::validate() const {
  const std::size_t count = seeds.empty() ? n : seeds.size();
  if (count < 2) throw std::invalid_argument("ensemble needs at least 2 members or draws, got " + std::to_string(count));
}

UncertaintyEstimate sample_statistics(std::span<const double> samples) {
  if (samples.size() < 2) {
    throw std::invalid_argument("sample statistics need at least 2 samples, got " + std::to_string(samples.size()));
  }
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  // Offsets from the smallest sample: identical samples give exactly zero
  // variance.
  const double n = static_cast<double>(sorted.size());
  const double origin = sorted.front();
  double shift = 0.0;
  for (double v : sorted) shift += v - origin;
  shift /= n;
  double ss = 0.0;
  for (double v : sorted) ss += (v - origin - shift) * (v - origin - shift);
  const double variance = ss / (n - 1.0);
  return {origin + shift, variance, std::sqrt(variance)};
}

Eigen::VectorXd SampledEstimates::means() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(estimates.size()));
  for (std::size_t i = 0; i < estimates.size(); ++i) out(static_cast<Eigen::Index>(i)) = estimates[i].mean;
  return out;
}

Eigen::VectorXd SampledEstimates::sds() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(estimates.size()));
  for (std::size_t i = 0; i < estimates.size(); ++i) out(static_cast<Eigen::Index>(i)) = estimates[i].sd;
  return out;
}

SampledEstimates estimate_from_samples(std::vector<std::string> ids, std::vector<std::vector<double>> samples) {
  if (ids.size() != samples.size()) throw std::invalid_argument("ids and samples differ in length");
  SampledEstimates out;
  out.estimates.reserve(samples.size());
  for (const auto& s : samples) out.estimates.push_back(sample_statistics(s));
  out.ids = std::move(ids);
  out.samples = std::move(samples);
  return out;
}

namespace {

// Transposes run-major predictions into per-stimulus sample lists.
std::vector<std::vector<double>> per_stimulus(const std::vector<Eigen::VectorXd>& runs, std::size_t stimuli) {
  std::vector<std::vector<double>> out(stimuli, std::vector<double>(runs.size()));
  for (std::size_t r = 0; r < runs.size(); ++r) {
    for (std::size_t i = 0; i < stimuli; ++i) out[i][r] = runs[r](static_cast<Eigen::Index>(i));
  }
  return out;
}

}  // namespace

SeedsResult seeds_pipeline(const SplitView& train_split, const SplitView& val_split, const SplitView& evaluate_on,
                           const TrainConfig& config, const EnsembleConfig& ensemble, std::size_t jobs) {
  ensemble.validate();
  SeedsResult result;
  result.seeds = ensemble.seed_list();
  if (config.loss_kind != LossKind::mse_mean_only) {
    result.warnings.push_back("seed ensemble trained with loss '" + to_string(config.loss_kind) +
                              "' instead of the mean-only objective");
  }
  if (std::set<std::uint64_t>(result.seeds.begin(), result.seeds.end()).size() != result.seeds.size()) {
    result.warnings.push_back("seed list contains duplicates; those members are identical");
  }

  result.members.resize(result.seeds.size());
  result.member_predictions.resize(result.seeds.size());
  parallel_for(result.seeds.size(), jobs, [&](std::size_t i) {
    TrainConfig member = config;
    member.seed = result.seeds[i];
    try {
      result.members[i] = train(train_split, val_split, member);
    } catch (const std::exception& e) {
      throw TrainingError("ensemble member with seed " + std::to_string(member.seed) + " failed: " + e.what());
    }
    result.member_predictions[i] = predict(result.members[i].params, evaluate_on.features).mu_hat;
  });
  result.estimates = estimate_from_samples(evaluate_on.ids, per_stimulus(result.member_predictions, evaluate_on.size()));
  return result;
}

SeedsResult seeds_pipeline(const Dataset& dataset, const TrainConfig& config, const EnsembleConfig& ensemble,
                           std::size_t jobs) {
  const auto dim = config.affect_dimension;
  return seeds_pipeline(make_view(dataset, Split::train, dim), make_view(dataset, Split::val, dim),
                        make_view(dataset, Split::test, dim), config, ensemble, jobs);
}

Eigen::VectorXd mc_dropout_draw(const NetworkParameters& params, const SplitView& split, std::uint64_t seed,
                                std::uint64_t draw) {
  Random rng(seed, draw);
  const auto fwd = forward_batch(params, split.features, ForwardMode::mc_dropout, &rng);
  Eigen::VectorXd out(static_cast<Eigen::Index>(fwd.predictions.size()));
  for (std::size_t i = 0; i < fwd.predictions.size(); ++i) out(static_cast<Eigen::Index>(i)) = fwd.predictions[i].mu_hat;
  return out;
}

SampledEstimates mc_dropout_pipeline(const NetworkParameters& params, const SplitView& split,
                                     const EnsembleConfig& ensemble, std::uint64_t seed) {
  ensemble.validate();
  if (!(params.architecture().dropout_rate > 0.0)) {
    throw std::invalid_argument("MC dropout needs a model trained with dropout_rate > 0");
  }
  const std::size_t draws = ensemble.seeds.empty() ? ensemble.n : ensemble.seeds.size();
  std::vector<Eigen::VectorXd> runs;
  runs.reserve(draws);
  for (std::size_t d = 0; d < draws; ++d) runs.push_back(mc_dropout_draw(params, split, seed, d));
  return estimate_from_samples(split.ids, per_stimulus(runs, split.size()));
}

DirectEstimates direct_estimator(const NetworkParameters& params, const SplitView& split) {
  if (params.architecture().head_mode != HeadMode::mean_variance) {
    throw std::invalid_argument("direct estimation needs a mean_variance model");
  }
  auto p = predict(params, split.features);
  return {split.ids, std::move(p.mu_hat), std::move(p.sigma_hat)};
}

void write_ensemble_manifest(const std::filesystem::path& path, const EnsembleManifest& m) {
  nlohmann::json j;
  j["format"] = "uqr-ensemble";
  j["version"] = 1;
  j["method"] = m.method;
  j["seeds"] = m.seeds;
  j["checkpoints"] = m.checkpoints;
  nlohmann::json stimuli = nlohmann::json::array();
  for (std::size_t i = 0; i < m.ids.size(); ++i) stimuli.push_back({{"stimulus_id", m.ids[i]}, {"samples", m.samples.at(i)}});
  j["stimuli"] = std::move(stimuli);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(1) << '\n';
}

EnsembleManifest read_ensemble_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format") != "uqr-ensemble") throw std::runtime_error("not an ensemble manifest");
    EnsembleManifest m;
    m.method = j.at("method").get<std::string>();
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    m.checkpoints = j.at("checkpoints").get<std::vector<std::string>>();
    for (const auto& s : j.at("stimuli")) {
      m.ids.push_back(s.at("stimulus_id").get<std::string>());
      m.samples.push_back(s.at("samples").get<std::vector<double>>());
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed ensemble manifest '" + path.string() + "': " + e.what());
  }
}

SampledEstimates reaggregate(const EnsembleManifest& manifest) {
  return estimate_from_samples(manifest.ids, manifest.samples);
}

}  // namespace uqr
