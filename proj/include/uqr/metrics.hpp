// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "uqr/data.hpp"

namespace uqr {

/// Raised when a metric has no value, e.g. correlation with a constant vector.
class MetricUndefined : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// 1 - SS_res / SS_tot. Throws MetricUndefined for constant truth.
double r2(std::span<const double> truth, std::span<const double> pred);
double pearson(std::span<const double> x, std::span<const double> y);
/// Pearson correlation of average ranks.
double spearman(std::span<const double> x, std::span<const double> y);
/// 1-based ranks; tied values share the mean of their rank range.
std::vector<double> average_ranks(std::span<const double> values);

/// Across-run summary of one metric. sd is absent for a single run; mean is
/// absent when the metric was undefined in every run.
struct MetricSummary {
  std::optional<double> mean;
  std::optional<double> sd;
  std::size_t runs = 0;
  std::size_t undefined_runs = 0;
};

struct MetricCell {
  MetricSummary r2;
  MetricSummary pearson;
  MetricSummary spearman;
};

/// Metrics of each run's predictions against truth, then mean and n-1 SD
/// over runs.
MetricCell evaluate(std::span<const std::vector<double>> runs, std::span<const double> truth);

enum class Target { mean, sd };
std::string to_string(Target target);

struct MethodMetrics {
  std::string method;
  /// [dimension][target]; indices follow AffectDimension and Target.
  std::array<std::array<std::optional<MetricCell>, 2>, 2> cells;

  std::optional<MetricCell>& at(AffectDimension dim, Target target) {
    return cells[static_cast<std::size_t>(dim)][static_cast<std::size_t>(target)];
  }
  const std::optional<MetricCell>& at(AffectDimension dim, Target target) const {
    return cells[static_cast<std::size_t>(dim)][static_cast<std::size_t>(target)];
  }
};

/// A published result cell, kept for side-by-side display.
struct ReferenceValue {
  std::optional<double> mean;
  std::optional<double> sd;
  bool far_below_zero = false;
};

struct ReferenceRow {
  std::string method;
  Target target;
  /// R2 V, R2 A, Pearson V, Pearson A, Spearman V, Spearman A
  std::array<ReferenceValue, 6> values;
};

/// Published DEAM results (15 seeds) for the five methods.
const std::vector<ReferenceRow>& reference_rows();

struct MetricReport {
  std::vector<MethodMetrics> methods;
  std::vector<std::string> notes;
};

std::string report_to_json(const MetricReport& report);
/// Aligned plain-text tables (mean, then SD) with the reference rows
/// appended. R2 below -10 prints as "<<0".
std::string report_to_table(const MetricReport& report, bool include_reference = true);
std::string format_summary(const MetricSummary& summary, bool is_r2);

void write_scatter_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                       std::span<const double> empirical, std::span<const double> predicted);

}  // namespace uqr
