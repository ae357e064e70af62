// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "uqr/data.hpp"

namespace uqr {

/// Ground-truth maps for one affect dimension:
///   mu(x)    = mean_scale * tanh(mean_weights . x + mean_bias)
///   sigma(x) = sd_min + (sd_max - sd_min) * logistic(sd_weights . x + sd_bias)
/// Empty weight vectors are drawn from the generator seed with Euclidean norm
/// mean_gain / sd_gain.
struct AffectMap {
  std::vector<double> mean_weights;
  double mean_bias = 0.0;
  std::vector<double> sd_weights;
  double sd_bias = 0.5;
};

struct SynthConfig {
  std::size_t n_stimuli = 2000;
  std::size_t feature_dim = 16;
  std::size_t raters_per_stimulus = 10;
  double mean_scale = 0.6;
  double mean_gain = 1.0;
  double sd_gain = 1.0;
  double sd_min = 0.05;
  double sd_max = 0.5;
  AffectMap valence;
  AffectMap arousal;
  std::size_t genres = 4;
  SplitRatios ratios;
  /// Snap each simulated rating to the Likert grid; when false the raw
  /// ratings are fractional.
  bool quantize = true;
  std::uint64_t seed = 2024;

  /// Throws std::invalid_argument for configs that break the sigma range
  /// [0.05, 0.5] or the mean range (-0.8, 0.8).
  void validate() const;
};

struct OracleEntry {
  double mu_v = 0.0;
  double sigma_v = 0.0;
  double mu_a = 0.0;
  double sigma_a = 0.0;

  double mu(AffectDimension d) const { return d == AffectDimension::valence ? mu_v : mu_a; }
  double sigma(AffectDimension d) const { return d == AffectDimension::valence ? sigma_v : sigma_a; }
};

struct SynthDataset {
  Dataset dataset;
  std::map<std::string, AnnotationSet> annotations;
  std::map<std::string, std::string> genres;
  std::map<std::string, OracleEntry> oracle;
  /// Maps with the generated weights filled in.
  AffectMap valence;
  AffectMap arousal;
};

/// Simulates raters around known per-stimulus Gaussians and aggregates them
/// exactly as real annotations are aggregated.
SynthDataset generate(const SynthConfig& config, const RatingScale& scale = RatingScale::likert9());

/// Oracle column for one dimension, in the order of `ids`.
std::vector<double> oracle_sigma(const SynthDataset& synth, const std::vector<std::string>& ids, AffectDimension dim);
std::vector<double> oracle_mu(const SynthDataset& synth, const std::vector<std::string>& ids, AffectDimension dim);

struct SynthFiles {
  std::filesystem::path features;
  std::filesystem::path annotations;
  std::filesystem::path splits;
  std::filesystem::path oracle;
  std::filesystem::path genres;
};

/// Writes features.csv, annotations.csv, splits.csv, genres.csv and
/// oracle.csv into dir.
SynthFiles write_synth(const std::filesystem::path& dir, const SynthDataset& synth);

std::map<std::string, OracleEntry> read_oracle(const std::filesystem::path& path);

/// Parses `key = value` lines into a SynthConfig (unknown keys rejected).
SynthConfig parse_synth_config(const std::string& text, SynthConfig base = {});
void set_synth_value(SynthConfig& config, const std::string& key, const std::string& value);

}  // namespace uqr
