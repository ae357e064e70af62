// SPDX-License-Identifier: Apache-2.0
#include "uqr/optimize.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace uqr {

void adam_step(std::span<double> params, std::span<const double> gradients, AdamState& state, double lr) {
  if (params.size() != gradients.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  for (std::size_t i = 0; i < gradients.size(); ++i) {
    if (!std::isfinite(gradients[i])) {
      throw TrainingError("non-finite gradient at parameter " + std::to_string(i) + " on step " +
                          std::to_string(state.step_count + 1));
    }
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = gradients[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g * g;
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  if (!(lr_factor > 0.0 && lr_factor < 1.0)) throw std::invalid_argument("lr_factor must lie in (0, 1)");
  if (!(initial_lr > 0.0) || !(min_lr > 0.0) || min_lr > initial_lr) {
    throw std::invalid_argument("learning rates must satisfy 0 < min_lr <= initial_lr");
  }
  if (batches_per_epoch == 0 || batch_size == 0 || patience_epochs == 0) {
    throw std::invalid_argument("batch counts and patience must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("dropout_rate must lie in [0, 1)");
  if (!(loss_options.sigma_floor > 0.0)) throw std::invalid_argument("sigma_floor must be positive");
}

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  s = s.substr(first, last - first + 1);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) s = s.substr(1, s.size() - 2);
  return s;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument("config key '" + key + "': expected true/false, got '" + text + "'");
}

std::vector<std::size_t> parse_sizes(const std::string& key, std::string text) {
  std::erase_if(text, [](char c) { return c == '[' || c == ']' || c == ' '; });
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_number<std::size_t>(key, item));
  }
  return out;
}

std::string join(const std::vector<std::size_t>& sizes) {
  std::string out = "[";
  for (std::size_t i = 0; i < sizes.size(); ++i) out += (i ? ", " : "") + std::to_string(sizes[i]);
  return out + "]";
}

}  // namespace

void set_config_value(TrainConfig& c, const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "initial_lr") c.initial_lr = parse_number<double>(key, value);
  else if (key == "lr_factor") c.lr_factor = parse_number<double>(key, value);
  else if (key == "patience_epochs") c.patience_epochs = parse_number<std::size_t>(key, value);
  else if (key == "min_lr") c.min_lr = parse_number<double>(key, value);
  else if (key == "max_epochs") c.max_epochs = parse_number<std::size_t>(key, value);
  else if (key == "batches_per_epoch") c.batches_per_epoch = parse_number<std::size_t>(key, value);
  else if (key == "batch_size") c.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "loss_kind") c.loss_kind = parse_loss_kind(value);
  else if (key == "affect_dimension") c.affect_dimension = parse_affect_dimension(value);
  else if (key == "hidden_sizes") c.hidden_sizes = parse_sizes(key, value);
  else if (key == "dropout_rate") c.dropout_rate = parse_number<double>(key, value);
  else if (key == "sigma_floor") c.loss_options.sigma_floor = parse_number<double>(key, value);
  else if (key == "textbook_losses") c.loss_options.textbook = parse_bool(key, value);
  else if (key == "force_mean_variance_head") c.force_mean_variance_head = parse_bool(key, value);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

TrainConfig parse_train_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;  // blank or [section]
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    set_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  base.validate();
  return base;
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_train_config(buf.str(), std::move(base));
}

std::map<std::string, std::string> config_snapshot(const TrainConfig& c) {
  return {
      {"initial_lr", format_double(c.initial_lr)},
      {"lr_factor", format_double(c.lr_factor)},
      {"patience_epochs", std::to_string(c.patience_epochs)},
      {"min_lr", format_double(c.min_lr)},
      {"max_epochs", std::to_string(c.max_epochs)},
      {"batches_per_epoch", std::to_string(c.batches_per_epoch)},
      {"batch_size", std::to_string(c.batch_size)},
      {"seed", std::to_string(c.seed)},
      {"loss_kind", to_string(c.loss_kind)},
      {"affect_dimension", to_string(c.affect_dimension)},
      {"hidden_sizes", join(c.hidden_sizes)},
      {"dropout_rate", format_double(c.dropout_rate)},
      {"sigma_floor", format_double(c.loss_options.sigma_floor)},
      {"textbook_losses", c.loss_options.textbook ? "true" : "false"},
      {"force_mean_variance_head", c.force_mean_variance_head ? "true" : "false"},
  };
}

// ---------------------------------------------------------------------------
// Schedule

PlateauScheduler::PlateauScheduler(double initial_lr, double factor, std::size_t patience, double min_lr)
    : lr_(initial_lr), factor_(factor), patience_(patience), min_lr_(min_lr) {}

double PlateauScheduler::step(double val_loss) {
  if (!has_best_ || val_loss < best_) {
    best_ = val_loss;
    has_best_ = true;
    bad_epochs_ = 0;
    return lr_;
  }
  if (++bad_epochs_ >= patience_) {
    lr_ = std::max(lr_ * factor_, min_lr_);
    bad_epochs_ = 0;
  }
  return lr_;
}

double plateau_schedule(std::span<const double> val_history, const TrainConfig& config) {
  if (val_history.empty()) throw std::invalid_argument("plateau_schedule: empty history");
  PlateauScheduler scheduler(config);
  for (double v : val_history) scheduler.step(v);
  return scheduler.lr();
}

// ---------------------------------------------------------------------------
// Training

std::string report_to_json(const TrainReport& report, const TrainConfig& config) {
  nlohmann::json j;
  j["train_loss"] = report.train_loss;
  j["val_loss"] = report.val_loss;
  j["learning_rate"] = report.learning_rate;
  j["best_epoch"] = report.best_epoch;
  j["samples_per_epoch"] = report.samples_per_epoch;
  j["improvement_rule"] = report.improvement_rule;
  j["checkpoint"] = report.checkpoint;
  j["config"] = config_snapshot(config);
  return j.dump(2);
}

double evaluate_loss(const NetworkParameters& params, const SplitView& split, LossKind kind,
                     const LossOptions& options) {
  const auto result = forward_batch(params, split.features, ForwardMode::eval, nullptr);
  return batch_loss(kind, result.predictions, split.mu, split.sigma, options).value;
}

TrainResult train(const SplitView& train_split, const SplitView& val_split, const TrainConfig& config) {
  config.validate();
  Architecture arch;
  arch.input_dim = static_cast<std::size_t>(train_split.features.rows());
  arch.hidden_sizes = config.hidden_sizes;
  arch.head_mode = config.head_mode();
  arch.dropout_rate = config.dropout_rate;

  TrainResult result{init_parameters(arch, config.seed), {}};
  TrainReport& report = result.report;
  report.samples_per_epoch = config.batches_per_epoch * config.batch_size;
  if (config.max_epochs == 0) return result;
  if (train_split.size() == 0 || val_split.size() == 0) {
    throw TrainingError("training needs nonempty train and val splits");
  }
  if (val_split.features.rows() != train_split.features.rows()) {
    throw TrainingError("train and val feature dimensions differ");
  }

  NetworkParameters params = result.params;
  Random sampler(config.seed, 1);
  Random dropout(config.seed, 2);
  AdamState adam(params.size());
  PlateauScheduler scheduler(config);
  double best_val = 0.0;

  const auto batch = static_cast<Eigen::Index>(config.batch_size);
  const auto dim = train_split.features.rows();
  Eigen::MatrixXd x(dim, batch);
  Eigen::VectorXd mu(batch);
  Eigen::VectorXd sigma(batch);

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const double lr = scheduler.lr();
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < config.batches_per_epoch; ++b) {
      for (Eigen::Index j = 0; j < batch; ++j) {
        const auto k = static_cast<Eigen::Index>(sampler.index(train_split.size()));
        x.col(j) = train_split.features.col(k);
        mu(j) = train_split.mu(k);
        sigma(j) = train_split.sigma(k);
      }
      const auto fwd = forward_batch(params, x, ForwardMode::train, &dropout);
      const auto loss = batch_loss(config.loss_kind, fwd.predictions, mu, sigma, config.loss_options);
      if (!std::isfinite(loss.value)) {
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b) + " (seed " + std::to_string(config.seed) + ")");
      }
      const auto grads = backward(params, fwd.tape, loss.upstream);
      adam_step(params.values(), grads.values(), adam, lr);
      epoch_loss += loss.value;
    }
    const double val = evaluate_loss(params, val_split, config.loss_kind, config.loss_options);
    if (!std::isfinite(val)) {
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch) + " (seed " +
                          std::to_string(config.seed) + ")");
    }
    report.train_loss.push_back(epoch_loss / static_cast<double>(config.batches_per_epoch));
    report.val_loss.push_back(val);
    report.learning_rate.push_back(lr);
    if (report.best_epoch < 0 || val < best_val) {
      best_val = val;
      report.best_epoch = static_cast<int>(epoch);
      result.params = params;
    }
    scheduler.step(val);
  }
  return result;
}

TrainResult train(const Dataset& dataset, const TrainConfig& config) {
  return train(make_view(dataset, Split::train, config.affect_dimension),
               make_view(dataset, Split::val, config.affect_dimension), config);
}

}  // namespace uqr
