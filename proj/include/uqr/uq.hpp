// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "uqr/data.hpp"
#include "uqr/network.hpp"
#include "uqr/optimize.hpp"

namespace uqr {

struct EnsembleConfig {
  std::size_t n = 15;
  /// Explicit seeds; when empty the list is base_seed, base_seed + 1, ...
  std::vector<std::uint64_t> seeds;
  std::uint64_t base_seed = 41;

  static EnsembleConfig seeds_default() { return {15, {}, 41}; }
  static EnsembleConfig mc_default() { return {50, {}, 41}; }

  std::vector<std::uint64_t> seed_list() const;
  void validate() const;
};

struct UncertaintyEstimate {
  double mean = 0.0;
  double variance = 0.0;
  double sd = 0.0;
};

/// Mean and n-1 sample variance. The reduction runs over the sorted samples,
/// so the result does not depend on sample order. Needs n >= 2.
UncertaintyEstimate sample_statistics(std::span<const double> samples);

/// Per-stimulus samples and their statistics, in split order.
struct SampledEstimates {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> samples;
  std::vector<UncertaintyEstimate> estimates;

  Eigen::VectorXd means() const;
  Eigen::VectorXd sds() const;
};

SampledEstimates estimate_from_samples(std::vector<std::string> ids, std::vector<std::vector<double>> samples);

struct SeedsResult {
  std::vector<std::uint64_t> seeds;
  std::vector<TrainResult> members;
  /// Eval-mode mean prediction of each member on the evaluated split.
  std::vector<Eigen::VectorXd> member_predictions;
  SampledEstimates estimates;
  std::vector<std::string> warnings;
};

/// Trains one model per seed (only the seed differs) and summarizes the
/// members' eval-mode predictions on `evaluate_on`.
SeedsResult seeds_pipeline(const SplitView& train_split, const SplitView& val_split, const SplitView& evaluate_on,
                           const TrainConfig& config, const EnsembleConfig& ensemble, std::size_t jobs = 1);

SeedsResult seeds_pipeline(const Dataset& dataset, const TrainConfig& config, const EnsembleConfig& ensemble,
                           std::size_t jobs = 1);

/// n stochastic forward passes per stimulus. Draw i uses its own random
/// stream derived from (seed, i), so draws are independent of each other and
/// of evaluation order.
/// One stochastic pass over the split using the stream (seed, draw).
Eigen::VectorXd mc_dropout_draw(const NetworkParameters& params, const SplitView& split, std::uint64_t seed,
                                std::uint64_t draw);

SampledEstimates mc_dropout_pipeline(const NetworkParameters& params, const SplitView& split,
                                     const EnsembleConfig& ensemble, std::uint64_t seed);

struct DirectEstimates {
  std::vector<std::string> ids;
  Eigen::VectorXd mu_hat;
  Eigen::VectorXd sigma_hat;
};

/// Single eval-mode pass of a mean-variance model; sigma_hat is the
/// uncertainty.
DirectEstimates direct_estimator(const NetworkParameters& params, const SplitView& split);

struct EnsembleManifest {
  std::string method;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> checkpoints;
  std::vector<std::string> ids;
  std::vector<std::vector<double>> samples;
};

void write_ensemble_manifest(const std::filesystem::path& path, const EnsembleManifest& manifest);
EnsembleManifest read_ensemble_manifest(const std::filesystem::path& path);
/// Recomputes the estimates from the stored samples without retraining.
SampledEstimates reaggregate(const EnsembleManifest& manifest);

}  // namespace uqr
