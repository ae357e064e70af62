// SPDX-License-Identifier: Apache-2.0
#include "uqr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace uqr {

namespace {

void check_lengths(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("metric inputs differ in length");
  if (a.size() < 2) throw MetricUndefined("metric needs at least 2 values");
}

// Offset from the first element: exact for constant input, so constant
// vectors are detected and identical runs have zero spread.
double mean_of(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x - v.front();
  return v.front() + acc / static_cast<double>(v.size());
}

}  // namespace

double r2(std::span<const double> truth, std::span<const double> pred) {
  check_lengths(truth, pred);
  const double mean = mean_of(truth);
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot == 0.0) throw MetricUndefined("R2 undefined: truth is constant");
  return 1.0 - ss_res / ss_tot;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  check_lengths(x, y);
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw MetricUndefined("correlation undefined: constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start + 1;
    while (end < order.size() && values[order[end]] == values[order[start]]) ++end;
    // Positions start..end-1 hold rank start+1 .. end.
    const double rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) ranks[order[k]] = rank;
    start = end;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  check_lengths(x, y);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

namespace {

template <typename Metric>
MetricSummary summarize(std::span<const std::vector<double>> runs, std::span<const double> truth, Metric metric) {
  MetricSummary s;
  s.runs = runs.size();
  std::vector<double> values;
  for (const auto& run : runs) {
    try {
      values.push_back(metric(truth, std::span<const double>(run)));
    } catch (const MetricUndefined&) {
      ++s.undefined_runs;
    }
  }
  if (values.empty()) return s;
  const double mean = mean_of(values);
  s.mean = mean;
  if (runs.size() > 1 && values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

}  // namespace

MetricCell evaluate(std::span<const std::vector<double>> runs, std::span<const double> truth) {
  if (truth.empty()) throw std::invalid_argument("evaluation split is empty");
  if (runs.empty()) throw std::invalid_argument("no predictions to evaluate");
  for (const auto& run : runs) {
    if (run.size() != truth.size()) throw std::invalid_argument("prediction count does not match the split");
  }
  MetricCell cell;
  cell.r2 = summarize(runs, truth, [](auto t, auto p) { return r2(t, p); });
  cell.pearson = summarize(runs, truth, [](auto t, auto p) { return pearson(t, p); });
  cell.spearman = summarize(runs, truth, [](auto t, auto p) { return spearman(t, p); });
  return cell;
}

std::string to_string(Target target) { return target == Target::mean ? "mean" : "sd"; }

const std::vector<ReferenceRow>& reference_rows() {
  using V = ReferenceValue;
  const V far{std::nullopt, std::nullopt, true};
  static const std::vector<ReferenceRow> rows = {
      {"seeds", Target::mean, {V{0.59, 0.04}, V{0.62, 0.02}, V{0.78, 0.02}, V{0.80, 0.01}, V{0.78, 0.02}, V{0.80, 0.01}}},
      {"nll", Target::mean, {V{0.61, 0.03}, V{0.61, 0.02}, V{0.79, 0.02}, V{0.80, 0.01}, V{0.79, 0.02}, V{0.80, 0.01}}},
      {"mse", Target::mean, {V{0.59, 0.02}, V{0.62, 0.01}, V{0.78, 0.02}, V{0.80, 0.01}, V{0.78, 0.02}, V{0.80, 0.01}}},
      {"kld", Target::mean, {V{0.55, 0.02}, V{0.62, 0.02}, V{0.76, 0.01}, V{0.81, 0.01}, V{0.76, 0.01}, V{0.80, 0.01}}},
      {"seeds", Target::sd, {far, far, V{-0.06, {}}, V{0.07, {}}, V{-0.05, {}}, V{0.08, {}}}},
      {"mc_dropout", Target::sd, {far, far, V{0.01, 0.04}, V{-0.01, 0.05}, V{0.03, 0.03}, V{-0.07, 0.05}}},
      {"nll", Target::sd, {far, far, V{-0.07, 0.03}, V{-0.08, 0.02}, V{-0.02, 0.05}, V{0.03, 0.04}}},
      {"mse", Target::sd, {far, far, V{-0.16, 0.05}, V{-0.15, 0.02}, V{-0.16, 0.05}, V{-0.14, 0.03}}},
      {"kld", Target::sd, {far, far, V{-0.12, 0.03}, V{-0.17, 0.02}, V{-0.10, 0.03}, V{-0.16, 0.03}}},
  };
  return rows;
}

namespace {

nlohmann::json summary_json(const MetricSummary& s) {
  nlohmann::json j;
  j["mean"] = s.mean ? nlohmann::json(*s.mean) : nlohmann::json(nullptr);
  j["sd"] = s.sd ? nlohmann::json(*s.sd) : nlohmann::json(nullptr);
  j["runs"] = s.runs;
  j["undefined_runs"] = s.undefined_runs;
  return j;
}

nlohmann::json reference_json(const ReferenceValue& v) {
  if (v.far_below_zero) return "<<0";
  nlohmann::json j;
  j["mean"] = v.mean ? nlohmann::json(*v.mean) : nlohmann::json(nullptr);
  j["sd"] = v.sd ? nlohmann::json(*v.sd) : nlohmann::json(nullptr);
  return j;
}

std::string fixed2(double v) {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out << std::fixed << std::setprecision(2) << v;
  std::string s = out.str();
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string format_reference(const ReferenceValue& v) {
  if (v.far_below_zero) return "<<0";
  if (!v.mean) return "-";
  return v.sd ? fixed2(*v.mean) + "(" + fixed2(*v.sd) + ")" : fixed2(*v.mean);
}

constexpr std::array<AffectDimension, 2> kDims{AffectDimension::valence, AffectDimension::arousal};

}  // namespace

std::string format_summary(const MetricSummary& s, bool is_r2) {
  if (!s.mean) return s.runs == 0 ? "-" : "n/a";
  if (is_r2 && *s.mean < -10.0) return "<<0";
  return s.sd ? fixed2(*s.mean) + "(" + fixed2(*s.sd) + ")" : fixed2(*s.mean);
}

std::string report_to_json(const MetricReport& report) {
  nlohmann::json j;
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& m : report.methods) {
    nlohmann::json mj;
    mj["method"] = m.method;
    for (auto dim : kDims) {
      for (auto target : {Target::mean, Target::sd}) {
        const auto& cell = m.at(dim, target);
        if (!cell) continue;
        mj[to_string(dim)][to_string(target)] = {{"r2", summary_json(cell->r2)},
                                                 {"pearson", summary_json(cell->pearson)},
                                                 {"spearman", summary_json(cell->spearman)}};
      }
    }
    methods.push_back(std::move(mj));
  }
  j["methods"] = std::move(methods);
  nlohmann::json refs = nlohmann::json::array();
  static const std::array<const char*, 6> columns{"r2_valence", "r2_arousal", "pearson_valence",
                                                  "pearson_arousal", "spearman_valence", "spearman_arousal"};
  for (const auto& row : reference_rows()) {
    nlohmann::json rj{{"method", row.method}, {"target", to_string(row.target)}};
    for (std::size_t k = 0; k < columns.size(); ++k) rj[columns[k]] = reference_json(row.values[k]);
    refs.push_back(std::move(rj));
  }
  j["reference_deam"] = std::move(refs);
  j["notes"] = report.notes;
  return j.dump(2);
}

std::string report_to_table(const MetricReport& report, bool include_reference) {
  std::ostringstream out;
  const int label_width = 24;
  const int cell_width = 13;
  for (auto target : {Target::mean, Target::sd}) {
    out << (target == Target::mean ? "Mean" : "Standard Deviation") << '\n';
    out << std::left << std::setw(label_width) << "" << std::right;
    for (const char* metric : {"R2", "Pearson r_p", "Spearman r_s"}) out << std::setw(2 * cell_width) << metric;
    out << '\n' << std::left << std::setw(label_width) << "Method" << std::right;
    for (int k = 0; k < 3; ++k) out << std::setw(cell_width) << "Valence" << std::setw(cell_width) << "Arousal";
    out << '\n' << std::string(label_width + 6 * cell_width, '-') << '\n';

    for (const auto& m : report.methods) {
      if (!m.at(AffectDimension::valence, target) && !m.at(AffectDimension::arousal, target)) continue;
      out << std::left << std::setw(label_width) << m.method << std::right;
      for (int metric = 0; metric < 3; ++metric) {
        for (auto dim : kDims) {
          const auto& cell = m.at(dim, target);
          std::string text = "-";
          if (cell) {
            const MetricSummary& s = metric == 0 ? cell->r2 : metric == 1 ? cell->pearson : cell->spearman;
            text = format_summary(s, metric == 0);
          }
          out << std::setw(cell_width) << text;
        }
      }
      out << '\n';
    }
    if (include_reference) {
      for (const auto& row : reference_rows()) {
        if (row.target != target) continue;
        out << std::left << std::setw(label_width) << ("ref:DEAM " + row.method) << std::right;
        for (const auto& v : row.values) out << std::setw(cell_width) << format_reference(v);
        out << '\n';
      }
    }
    out << '\n';
  }
  for (const auto& note : report.notes) out << "note: " << note << '\n';
  return out.str();
}

void write_scatter_csv(const std::filesystem::path& path, std::span<const std::string> ids,
                       std::span<const double> empirical, std::span<const double> predicted) {
  if (ids.size() != empirical.size() || ids.size() != predicted.size()) {
    throw std::invalid_argument("scatter columns differ in length");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "stimulus_id,empirical,predicted\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i] << ',' << format_double(empirical[i]) << ',' << format_double(predicted[i]) << '\n';
  }
}

}  // namespace uqr
