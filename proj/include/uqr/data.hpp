// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace uqr {

/// Raised for malformed input files and invalid annotations. The message
/// carries the file/line or stimulus/rater context.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AffectDimension { valence, arousal };

std::string to_string(AffectDimension dim);
AffectDimension parse_affect_dimension(const std::string& text);

/// Likert-scale geometry. Ratings are mapped to (r - neutral) / (R + 1),
/// which lands in [-1 + delta, 1 - delta] with delta = 1 / (R + 1).
class RatingScale {
 public:
  /// Symmetric scale from r_min to r_max; the neutral point is the midpoint.
  RatingScale(int r_min, int r_max);

  static RatingScale likert9() { return RatingScale(1, 9); }

  int min() const { return r_min_; }
  int max() const { return r_max_; }
  int neutral() const { return r_neutral_; }
  /// Non-neutral options per side.
  int options_per_side() const { return options_; }
  double delta() const { return 1.0 / (options_ + 1); }
  double normalized_min() const { return -1.0 + delta(); }
  double normalized_max() const { return 1.0 - delta(); }

  /// Maps a raw rating into the normalized range. Throws DataError when the
  /// rating lies outside [min, max].
  double normalize(double raw) const;
  double denormalize(double normalized) const;

 private:
  int r_min_;
  int r_max_;
  int r_neutral_;
  int options_;
};

double normalize_rating(int raw, const RatingScale& scale);

struct Rating {
  std::string rater_id;
  double valence_raw = 0.0;
  double arousal_raw = 0.0;
};

struct AnnotationSet {
  std::string stimulus_id;
  std::vector<Rating> ratings;
};

/// Empirical mean and sample SD per affect dimension, in normalized units.
struct EmotionTarget {
  double mu_v = 0.0;
  double mu_a = 0.0;
  double sigma_v = 0.0;
  double sigma_a = 0.0;

  double mu(AffectDimension dim) const { return dim == AffectDimension::valence ? mu_v : mu_a; }
  double sigma(AffectDimension dim) const {
    return dim == AffectDimension::valence ? sigma_v : sigma_a;
  }
};

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
};

/// Sample mean and n-1 sample SD of already normalized ratings.
Moments aggregate_normalized(std::span<const double> values);

/// Normalizes every rating and reduces to per-dimension (mean, SD).
/// Requires at least two ratings.
EmotionTarget aggregate(const AnnotationSet& annotations, const RatingScale& scale);

/// Raters below this count trigger a warning at ingest.
inline constexpr std::size_t kRecommendedRaters = 10;

enum class Split { train, val, test };

std::string to_string(Split split);
Split parse_split(const std::string& text);

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

/// Largest-remainder allocation of n items over the three ratios. Ties in the
/// fractional part go to the later split (test before val before train).
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios);

/// Shuffles each label group with a seeded stream and cuts it by
/// split_sizes. Labels are opaque strings.
std::map<std::string, Split> stratified_split(
    const std::vector<std::pair<std::string, std::string>>& ids_with_labels,
    const SplitRatios& ratios, std::uint64_t seed);

/// Features, aggregated targets and split assignment, keyed by stimulus id.
/// Immutable once loaded.
struct Dataset {
  std::size_t feature_dim = 0;
  std::map<std::string, std::vector<double>> features;
  std::map<std::string, EmotionTarget> targets;
  std::map<std::string, Split> split;

  /// Throws DataError if ids do not cross-reference or lengths disagree.
  void validate() const;

  std::vector<std::string> ids(Split which) const;
  std::size_t count(Split which) const;
};

/// Column-major design matrix (one stimulus per column) for one split and
/// affect dimension.
struct SplitView {
  std::vector<std::string> ids;
  Eigen::MatrixXd features;
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma;

  std::size_t size() const { return ids.size(); }
};

SplitView make_view(const Dataset& dataset, Split which, AffectDimension dim);

struct LoadOptions {
  /// Accept non-integer raw ratings (continuous synthetic annotations).
  bool allow_fractional_ratings = false;
};

struct LoadSummary {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
  std::vector<std::string> warnings;
};

Dataset load_dataset(const std::filesystem::path& features_path,
                     const std::filesystem::path& annotations_path,
                     const std::filesystem::path& splits_path, const RatingScale& scale,
                     const LoadOptions& options = {}, LoadSummary* summary = nullptr);

std::map<std::string, std::vector<double>> read_features(const std::filesystem::path& path);
std::map<std::string, AnnotationSet> read_annotations(const std::filesystem::path& path,
                                                      const RatingScale& scale,
                                                      const LoadOptions& options = {});
std::map<std::string, Split> read_splits(const std::filesystem::path& path);

void write_features(const std::filesystem::path& path,
                    const std::map<std::string, std::vector<double>>& features);
void write_annotations(const std::filesystem::path& path,
                       const std::map<std::string, AnnotationSet>& annotations);
void write_splits(const std::filesystem::path& path, const std::map<std::string, Split>& split);

/// Locale-independent shortest round-trip formatting.
std::string format_double(double value);

}  // namespace uqr
