// SPDX-License-Identifier: Apache-2.0
#include "uqr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "uqr/random.hpp"

namespace uqr {

namespace fs = std::filesystem;

std::string to_string(AffectDimension dim) {
  return dim == AffectDimension::valence ? "valence" : "arousal";
}

AffectDimension parse_affect_dimension(const std::string& text) {
  if (text == "valence") return AffectDimension::valence;
  if (text == "arousal") return AffectDimension::arousal;
  throw std::invalid_argument("unknown affect dimension '" + text + "'");
}

RatingScale::RatingScale(int r_min, int r_max) : r_min_(r_min), r_max_(r_max) {
  if (r_max <= r_min || (r_max - r_min) % 2 != 0) {
    throw std::invalid_argument("rating scale needs an odd number of points with a neutral midpoint");
  }
  r_neutral_ = r_min + (r_max - r_min) / 2;
  options_ = r_max - r_neutral_;
}

double RatingScale::normalize(double raw) const {
  if (!(raw >= r_min_ && raw <= r_max_)) {
    throw DataError("rating " + format_double(raw) + " outside [" + std::to_string(r_min_) + ", " +
                    std::to_string(r_max_) + "]");
  }
  return (raw - r_neutral_) / (options_ + 1);
}

double RatingScale::denormalize(double normalized) const {
  return normalized * (options_ + 1) + r_neutral_;
}

double normalize_rating(int raw, const RatingScale& scale) { return scale.normalize(raw); }

Moments aggregate_normalized(std::span<const double> values) {
  if (values.size() < 2) {
    throw DataError("sample SD needs at least 2 ratings");
  }
  // Accumulating offsets from the first value keeps identical ratings at an
  // exact zero SD.
  const double n = static_cast<double>(values.size());
  const double origin = values.front();
  double shift = 0.0;
  for (double v : values) shift += v - origin;
  shift /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - origin - shift) * (v - origin - shift);
  return {origin + shift, std::sqrt(ss / (n - 1.0))};
}

EmotionTarget aggregate(const AnnotationSet& annotations, const RatingScale& scale) {
  if (annotations.ratings.size() < 2) {
    throw DataError("stimulus '" + annotations.stimulus_id + "' has " +
                    std::to_string(annotations.ratings.size()) +
                    " rating(s); at least 2 are required");
  }
  std::vector<double> valence;
  std::vector<double> arousal;
  valence.reserve(annotations.ratings.size());
  arousal.reserve(annotations.ratings.size());
  for (const auto& r : annotations.ratings) {
    try {
      valence.push_back(scale.normalize(r.valence_raw));
      arousal.push_back(scale.normalize(r.arousal_raw));
    } catch (const DataError& e) {
      throw DataError("stimulus '" + annotations.stimulus_id + "', rater '" + r.rater_id +
                      "': " + e.what());
    }
  }
  // Sorting makes the reduction independent of rater order.
  std::sort(valence.begin(), valence.end());
  std::sort(arousal.begin(), arousal.end());
  const Moments v = aggregate_normalized(valence);
  const Moments a = aggregate_normalized(arousal);
  return {v.mean, a.mean, v.sd, a.sd};
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw DataError("unknown split '" + text + "'");
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios) {
  const std::array<double, 3> r{ratios.train, ratios.val, ratios.test};
  const double total = r[0] + r[1] + r[2];
  if (!(r[0] > 0 && r[1] > 0 && r[2] > 0) || std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must be positive and sum to 1");
  }
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double quota = static_cast<double>(n) * r[k] / total;
    // Snap quotas within rounding noise of an integer so 0.7 * 10 counts as 7.
    const double snapped = std::abs(quota - std::round(quota)) < 1e-9 ? std::round(quota) : quota;
    sizes[k] = static_cast<std::size_t>(std::floor(snapped));
    remainder[k] = snapped - std::floor(snapped);
    assigned += sizes[k];
  }
  std::array<std::size_t, 3> order{2, 1, 0};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainder[a] > remainder[b] + 1e-9;
  });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++sizes[order[i % 3]];
  return sizes;
}

std::map<std::string, Split> stratified_split(
    const std::vector<std::pair<std::string, std::string>>& ids_with_labels,
    const SplitRatios& ratios, std::uint64_t seed) {
  if (ids_with_labels.empty()) throw std::invalid_argument("stratified_split: empty input");
  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& [id, label] : ids_with_labels) groups[label].push_back(id);

  std::map<std::string, Split> out;
  std::uint64_t stream = 0;
  for (auto& [label, ids] : groups) {
    std::sort(ids.begin(), ids.end());
    Random rng(seed, stream++);
    for (std::size_t i = ids.size(); i > 1; --i) {
      std::swap(ids[i - 1], ids[rng.index(i)]);
    }
    const auto sizes = split_sizes(ids.size(), ratios);
    std::size_t pos = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t j = 0; j < sizes[k]; ++j, ++pos) {
        if (!out.emplace(ids[pos], static_cast<Split>(k)).second) {
          throw std::invalid_argument("duplicate id '" + ids[pos] + "' in split input");
        }
      }
    }
  }
  return out;
}

void Dataset::validate() const {
  for (const auto& [id, target] : targets) {
    auto it = features.find(id);
    if (it == features.end()) throw DataError("annotated stimulus '" + id + "' has no feature vector");
    if (!split.contains(id)) throw DataError("stimulus '" + id + "' has no split assignment");
    for (double s : {target.sigma_v, target.sigma_a}) {
      if (!std::isfinite(s) || s < 0) throw DataError("stimulus '" + id + "' has invalid sigma");
    }
  }
  for (const auto& [id, values] : features) {
    if (values.size() != feature_dim) {
      throw DataError("stimulus '" + id + "' has " + std::to_string(values.size()) +
                      " features, expected " + std::to_string(feature_dim));
    }
    if (!targets.contains(id)) throw DataError("feature vector '" + id + "' has no annotations");
  }
  for (const auto& [id, s] : split) {
    if (!targets.contains(id)) throw DataError("split entry '" + id + "' has no annotations");
  }
}

std::vector<std::string> Dataset::ids(Split which) const {
  std::vector<std::string> out;
  for (const auto& [id, s] : split) {
    if (s == which) out.push_back(id);
  }
  return out;
}

std::size_t Dataset::count(Split which) const {
  return static_cast<std::size_t>(
      std::count_if(split.begin(), split.end(), [&](const auto& kv) { return kv.second == which; }));
}

SplitView make_view(const Dataset& dataset, Split which, AffectDimension dim) {
  SplitView view;
  view.ids = dataset.ids(which);
  const auto n = static_cast<Eigen::Index>(view.ids.size());
  view.features.resize(static_cast<Eigen::Index>(dataset.feature_dim), n);
  view.mu.resize(n);
  view.sigma.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& id = view.ids[static_cast<std::size_t>(j)];
    const auto& f = dataset.features.at(id);
    view.features.col(j) = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
    const auto& t = dataset.targets.at(id);
    view.mu(j) = t.mu(dim);
    view.sigma(j) = t.sigma(dim);
  }
  return view;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

struct CsvReader {
  fs::path path;
  std::ifstream in;
  std::size_t line_no = 0;

  explicit CsvReader(const fs::path& p) : path(p), in(p, std::ios::binary) {
    if (!in) throw DataError("cannot open '" + p.string() + "'");
  }

  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      fields.clear();
      std::size_t start = 0;
      while (true) {
        const auto comma = line.find(',', start);
        fields.push_back(line.substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + what);
  }

  double number(const std::string& field) const {
    double value = 0.0;
    const char* first = field.data();
    const char* last = first + field.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) fail("cannot parse number '" + field + "'");
    return value;
  }

  void expect_header(const std::vector<std::string>& expected) {
    std::vector<std::string> fields;
    if (!next(fields)) fail("empty file");
    if (fields != expected) {
      std::string want;
      for (const auto& e : expected) want += (want.empty() ? "" : ",") + e;
      fail("expected header '" + want + "'");
    }
  }
};

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::map<std::string, std::vector<double>> read_features(const fs::path& path) {
  CsvReader csv(path);
  std::vector<std::string> header;
  if (!csv.next(header)) csv.fail("empty file");
  if (header.size() < 2 || header[0] != "stimulus_id") csv.fail("header must start with 'stimulus_id'");
  for (std::size_t k = 1; k < header.size(); ++k) {
    if (header[k] != "f" + std::to_string(k - 1)) csv.fail("unexpected column '" + header[k] + "'");
  }
  const std::size_t dim = header.size() - 1;

  std::map<std::string, std::vector<double>> out;
  std::vector<std::string> fields;
  while (csv.next(fields)) {
    if (fields.size() != dim + 1) {
      csv.fail("expected " + std::to_string(dim + 1) + " fields, got " + std::to_string(fields.size()));
    }
    std::vector<double> values(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      values[k] = csv.number(fields[k + 1]);
      if (!std::isfinite(values[k])) csv.fail("non-finite feature value");
    }
    if (!out.emplace(fields[0], std::move(values)).second) csv.fail("duplicate stimulus id '" + fields[0] + "'");
  }
  return out;
}

std::map<std::string, AnnotationSet> read_annotations(const fs::path& path, const RatingScale& scale,
                                                      const LoadOptions& options) {
  CsvReader csv(path);
  csv.expect_header({"stimulus_id", "rater_id", "valence", "arousal"});
  std::map<std::string, AnnotationSet> out;
  std::map<std::string, std::set<std::string>> seen;
  std::vector<std::string> fields;
  while (csv.next(fields)) {
    if (fields.size() != 4) csv.fail("expected 4 fields, got " + std::to_string(fields.size()));
    Rating r{fields[1], csv.number(fields[2]), csv.number(fields[3])};
    for (double raw : {r.valence_raw, r.arousal_raw}) {
      if (!options.allow_fractional_ratings && raw != std::floor(raw)) {
        csv.fail("non-integer rating for stimulus '" + fields[0] + "', rater '" + r.rater_id + "'");
      }
      if (!(raw >= scale.min() && raw <= scale.max())) {
        csv.fail("rating " + format_double(raw) + " out of range for stimulus '" + fields[0] +
                 "', rater '" + r.rater_id + "'");
      }
    }
    if (!seen[fields[0]].insert(r.rater_id).second) {
      csv.fail("duplicate rater '" + r.rater_id + "' for stimulus '" + fields[0] + "'");
    }
    auto& set = out[fields[0]];
    set.stimulus_id = fields[0];
    set.ratings.push_back(std::move(r));
  }
  return out;
}

std::map<std::string, Split> read_splits(const fs::path& path) {
  CsvReader csv(path);
  csv.expect_header({"stimulus_id", "split"});
  std::map<std::string, Split> out;
  std::vector<std::string> fields;
  while (csv.next(fields)) {
    if (fields.size() != 2) csv.fail("expected 2 fields, got " + std::to_string(fields.size()));
    Split s;
    try {
      s = parse_split(fields[1]);
    } catch (const DataError& e) {
      csv.fail(e.what());
    }
    if (!out.emplace(fields[0], s).second) csv.fail("duplicate stimulus id '" + fields[0] + "'");
  }
  return out;
}

Dataset load_dataset(const fs::path& features_path, const fs::path& annotations_path,
                     const fs::path& splits_path, const RatingScale& scale, const LoadOptions& options,
                     LoadSummary* summary) {
  Dataset ds;
  ds.features = read_features(features_path);
  const auto annotations = read_annotations(annotations_path, scale, options);
  ds.split = read_splits(splits_path);
  ds.feature_dim = ds.features.empty() ? 0 : ds.features.begin()->second.size();

  LoadSummary local;
  for (const auto& [id, set] : annotations) {
    if (set.ratings.size() < kRecommendedRaters) {
      local.warnings.push_back("stimulus '" + id + "' has only " + std::to_string(set.ratings.size()) +
                               " raters");
    }
    ds.targets.emplace(id, aggregate(set, scale));
  }
  ds.validate();
  local.train = ds.count(Split::train);
  local.val = ds.count(Split::val);
  local.test = ds.count(Split::test);
  if (summary) *summary = std::move(local);
  return ds;
}

void write_features(const fs::path& path, const std::map<std::string, std::vector<double>>& features) {
  auto out = open_output(path);
  const std::size_t dim = features.empty() ? 0 : features.begin()->second.size();
  out << "stimulus_id";
  for (std::size_t k = 0; k < dim; ++k) out << ",f" << k;
  out << '\n';
  for (const auto& [id, values] : features) {
    out << id;
    for (double v : values) out << ',' << format_double(v);
    out << '\n';
  }
}

void write_annotations(const fs::path& path, const std::map<std::string, AnnotationSet>& annotations) {
  auto out = open_output(path);
  out << "stimulus_id,rater_id,valence,arousal\n";
  for (const auto& [id, set] : annotations) {
    for (const auto& r : set.ratings) {
      out << id << ',' << r.rater_id << ',' << format_double(r.valence_raw) << ','
          << format_double(r.arousal_raw) << '\n';
    }
  }
}

void write_splits(const fs::path& path, const std::map<std::string, Split>& split) {
  auto out = open_output(path);
  out << "stimulus_id,split\n";
  for (const auto& [id, s] : split) out << id << ',' << to_string(s) << '\n';
}

}  // namespace uqr
