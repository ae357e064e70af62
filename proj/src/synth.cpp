// SPDX-License-Identifier: Apache-2.0
#include "uqr/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "uqr/random.hpp"

namespace uqr {

void SynthConfig::validate() const {
  if (n_stimuli < 3) throw std::invalid_argument("n_stimuli must be at least 3");
  if (feature_dim == 0) throw std::invalid_argument("feature_dim must be positive");
  if (raters_per_stimulus < 2) throw std::invalid_argument("raters_per_stimulus must be at least 2");
  if (!(sd_min >= 0.05 && sd_max <= 0.5 && sd_min <= sd_max)) {
    throw std::invalid_argument("sigma range [" + format_double(sd_min) + ", " + format_double(sd_max) +
                                "] must lie within [0.05, 0.5]");
  }
  if (!(mean_scale > 0.0 && mean_scale < 0.8)) throw std::invalid_argument("mean_scale must lie in (0, 0.8)");
  if (!(mean_gain >= 0.0) || !(sd_gain >= 0.0)) throw std::invalid_argument("gains must be nonnegative");
  if (genres == 0) throw std::invalid_argument("genres must be positive");
  for (const AffectMap* m : {&valence, &arousal}) {
    for (const auto* w : {&m->mean_weights, &m->sd_weights}) {
      if (!w->empty() && w->size() != feature_dim) throw std::invalid_argument("map weights must have feature_dim entries");
    }
  }
}

namespace {

std::vector<double> random_direction(Random& rng, std::size_t dim, double norm) {
  std::vector<double> w(dim);
  for (auto& v : w) v = rng.normal();
  const double len = std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
  for (auto& v : w) v *= len > 0.0 ? norm / len : 0.0;
  return w;
}

void fill_map(AffectMap& map, Random& rng, const SynthConfig& c) {
  // Draw both directions unconditionally so explicit weights on one map do
  // not shift the stream for the other.
  auto mean_dir = random_direction(rng, c.feature_dim, c.mean_gain);
  auto sd_dir = random_direction(rng, c.feature_dim, c.sd_gain);
  if (map.mean_weights.empty()) map.mean_weights = std::move(mean_dir);
  if (map.sd_weights.empty()) map.sd_weights = std::move(sd_dir);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double true_mu(const AffectMap& m, const SynthConfig& c, const std::vector<double>& x) {
  return c.mean_scale * std::tanh(dot(m.mean_weights, x) + m.mean_bias);
}

double true_sigma(const AffectMap& m, const SynthConfig& c, const std::vector<double>& x) {
  const double logistic = 1.0 / (1.0 + std::exp(-(dot(m.sd_weights, x) + m.sd_bias)));
  return c.sd_min + (c.sd_max - c.sd_min) * logistic;
}

double simulate_rating(Random& rng, double mu, double sigma, const SynthConfig& c, const RatingScale& scale) {
  double v = std::clamp(mu + sigma * rng.normal(), scale.normalized_min(), scale.normalized_max());
  const double step = scale.delta();
  if (c.quantize) return static_cast<double>(scale.neutral() + std::lround(v / step));
  return std::clamp(scale.denormalize(v), static_cast<double>(scale.min()), static_cast<double>(scale.max()));
}

std::string stimulus_name(std::size_t i, std::size_t n) {
  const std::size_t width = std::to_string(n - 1).size();
  std::string digits = std::to_string(i);
  return "s" + std::string(width - std::min(width, digits.size()), '0') + digits;
}

}  // namespace

SynthDataset generate(const SynthConfig& config, const RatingScale& scale) {
  config.validate();
  SynthDataset out;
  out.valence = config.valence;
  out.arousal = config.arousal;
  Random map_rng(config.seed, 1);
  fill_map(out.valence, map_rng, config);
  fill_map(out.arousal, map_rng, config);

  Dataset& ds = out.dataset;
  ds.feature_dim = config.feature_dim;
  std::vector<std::pair<std::string, std::string>> labelled;
  for (std::size_t i = 0; i < config.n_stimuli; ++i) {
    const std::string id = stimulus_name(i, config.n_stimuli);
    Random rng(config.seed, 1'000'000 + i);
    std::vector<double> x(config.feature_dim);
    for (auto& v : x) v = rng.normal();
    const std::string genre = "g" + std::to_string(rng.index(config.genres));

    OracleEntry truth{true_mu(out.valence, config, x), true_sigma(out.valence, config, x),
                      true_mu(out.arousal, config, x), true_sigma(out.arousal, config, x)};
    AnnotationSet set{id, {}};
    set.ratings.reserve(config.raters_per_stimulus);
    for (std::size_t r = 0; r < config.raters_per_stimulus; ++r) {
      const double valence = simulate_rating(rng, truth.mu_v, truth.sigma_v, config, scale);
      const double arousal = simulate_rating(rng, truth.mu_a, truth.sigma_a, config, scale);
      set.ratings.push_back({"r" + std::to_string(r), valence, arousal});
    }
    ds.targets.emplace(id, aggregate(set, scale));
    ds.features.emplace(id, std::move(x));
    out.annotations.emplace(id, std::move(set));
    out.genres.emplace(id, genre);
    out.oracle.emplace(id, truth);
    labelled.emplace_back(id, genre);
  }
  ds.split = stratified_split(labelled, config.ratios, config.seed);
  ds.validate();
  return out;
}

std::vector<double> oracle_sigma(const SynthDataset& synth, const std::vector<std::string>& ids, AffectDimension dim) {
  std::vector<double> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(synth.oracle.at(id).sigma(dim));
  return out;
}

std::vector<double> oracle_mu(const SynthDataset& synth, const std::vector<std::string>& ids, AffectDimension dim) {
  std::vector<double> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(synth.oracle.at(id).mu(dim));
  return out;
}

SynthFiles write_synth(const std::filesystem::path& dir, const SynthDataset& synth) {
  std::filesystem::create_directories(dir);
  SynthFiles files{dir / "features.csv", dir / "annotations.csv", dir / "splits.csv", dir / "oracle.csv",
                   dir / "genres.csv"};
  write_features(files.features, synth.dataset.features);
  write_annotations(files.annotations, synth.annotations);
  write_splits(files.splits, synth.dataset.split);

  std::ofstream oracle(files.oracle, std::ios::binary | std::ios::trunc);
  oracle << "stimulus_id,true_mu_valence,true_sigma_valence,true_mu_arousal,true_sigma_arousal\n";
  for (const auto& [id, o] : synth.oracle) {
    oracle << id << ',' << format_double(o.mu_v) << ',' << format_double(o.sigma_v) << ',' << format_double(o.mu_a)
           << ',' << format_double(o.sigma_a) << '\n';
  }
  std::ofstream genres(files.genres, std::ios::binary | std::ios::trunc);
  genres << "stimulus_id,genre\n";
  for (const auto& [id, g] : synth.genres) genres << id << ',' << g << '\n';
  if (!oracle || !genres) throw DataError("cannot write synthetic dataset to '" + dir.string() + "'");
  return files;
}

std::map<std::string, OracleEntry> read_oracle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  if (line != "stimulus_id,true_mu_valence,true_sigma_valence,true_mu_arousal,true_sigma_arousal") {
    throw DataError(path.string() + ":1: unexpected oracle header");
  }
  std::map<std::string, OracleEntry> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id;
    std::getline(ss, id, ',');
    std::array<double, 4> v{};
    for (auto& value : v) {
      std::string field;
      if (!std::getline(ss, field, ',')) throw DataError(path.string() + ":" + std::to_string(line_no) + ": too few fields");
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
      if (ec != std::errc() || ptr != field.data() + field.size()) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": cannot parse '" + field + "'");
      }
    }
    out[id] = {v[0], v[1], v[2], v[3]};
  }
  return out;
}

void set_synth_value(SynthConfig& c, const std::string& key, const std::string& value) {
  auto number = [&](auto& target) {
    using T = std::remove_reference_t<decltype(target)>;
    T parsed{};
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), parsed);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
      throw std::invalid_argument("synth key '" + key + "': cannot parse '" + value + "'");
    }
    target = parsed;
  };
  if (key == "n_stimuli") number(c.n_stimuli);
  else if (key == "feature_dim") number(c.feature_dim);
  else if (key == "raters_per_stimulus") number(c.raters_per_stimulus);
  else if (key == "mean_scale") number(c.mean_scale);
  else if (key == "mean_gain") number(c.mean_gain);
  else if (key == "sd_gain") number(c.sd_gain);
  else if (key == "sd_min") number(c.sd_min);
  else if (key == "sd_max") number(c.sd_max);
  else if (key == "genres") number(c.genres);
  else if (key == "seed") number(c.seed);
  else if (key == "train_ratio") number(c.ratios.train);
  else if (key == "val_ratio") number(c.ratios.val);
  else if (key == "test_ratio") number(c.ratios.test);
  else if (key == "quantize") {
    if (value != "true" && value != "false") throw std::invalid_argument("synth key 'quantize' expects true/false");
    c.quantize = value == "true";
  } else {
    throw std::invalid_argument("unknown synth config key '" + key + "'");
  }
}

SynthConfig parse_synth_config(const std::string& text, SynthConfig base) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::erase_if(line, [](char ch) { return ch == ' ' || ch == '\t' || ch == '\r' || ch == '"'; });
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("synth config: expected key = value in '" + line + "'");
    set_synth_value(base, line.substr(0, eq), line.substr(eq + 1));
  }
  base.validate();
  return base;
}

}  // namespace uqr
