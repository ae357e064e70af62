// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "uqr/data.hpp"
#include "uqr/losses.hpp"
#include "uqr/network.hpp"

namespace uqr {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamState {
  std::size_t step_count = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(std::size_t n = 0) : first_moment(n, 0.0), second_moment(n, 0.0) {}
};

/// One bias-corrected Adam update, in place. Throws TrainingError on a
/// non-finite gradient, naming the offending index.
void adam_step(std::span<double> params, std::span<const double> gradients, AdamState& state, double lr);

struct TrainConfig {
  double initial_lr = 1e-3;
  double lr_factor = 0.9;
  std::size_t patience_epochs = 3;
  double min_lr = 1e-5;
  std::size_t max_epochs = 100;
  std::size_t batches_per_epoch = 128;
  std::size_t batch_size = 32;
  std::uint64_t seed = 41;
  LossKind loss_kind = LossKind::mse_mean_only;
  AffectDimension affect_dimension = AffectDimension::valence;
  std::vector<std::size_t> hidden_sizes{128, 128};
  double dropout_rate = 0.5;
  LossOptions loss_options;
  /// Use the mean-variance head even for mse_mean_only (SD logit untrained).
  bool force_mean_variance_head = false;

  HeadMode head_mode() const {
    return force_mean_variance_head ? HeadMode::mean_variance : required_head(loss_kind);
  }
  void validate() const;
};

/// Reads `key = value` lines ('#' comments, optional quotes) into a config.
/// Unknown keys are an error.
TrainConfig parse_train_config(const std::string& text, TrainConfig base = {});
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});
/// Applies a single key/value pair; shared by the file parser and CLI overrides.
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);
std::map<std::string, std::string> config_snapshot(const TrainConfig& config);

/// Multiplies the learning rate by lr_factor once the best validation loss
/// has gone patience_epochs consecutive epochs without a strict improvement,
/// never going below min_lr. The counter resets after each drop.
class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, double factor, std::size_t patience, double min_lr);
  explicit PlateauScheduler(const TrainConfig& config)
      : PlateauScheduler(config.initial_lr, config.lr_factor, config.patience_epochs, config.min_lr) {}

  /// Records one epoch's validation loss and returns the rate for the next epoch.
  double step(double val_loss);
  double lr() const { return lr_; }
  std::size_t epochs_without_improvement() const { return bad_epochs_; }

 private:
  double lr_;
  double factor_;
  std::size_t patience_;
  double min_lr_;
  double best_ = 0.0;
  bool has_best_ = false;
  std::size_t bad_epochs_ = 0;
};

/// Replays a validation-loss history from config.initial_lr and returns the
/// rate after its last entry.
double plateau_schedule(std::span<const double> val_history, const TrainConfig& config);

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  /// Rate used during each epoch.
  std::vector<double> learning_rate;
  /// -1 when no epoch ran.
  int best_epoch = -1;
  std::size_t samples_per_epoch = 0;
  std::string improvement_rule = "strict";
  std::string checkpoint;
};

std::string report_to_json(const TrainReport& report, const TrainConfig& config);

struct TrainResult {
  NetworkParameters params;
  TrainReport report;
};

/// Mini-batch training with uniform sampling with replacement from the
/// train split, eval-mode validation after every epoch and best-epoch
/// parameter selection.
TrainResult train(const Dataset& dataset, const TrainConfig& config);

/// Same, on prepared split views.
TrainResult train(const SplitView& train_split, const SplitView& val_split, const TrainConfig& config);

/// Mean loss over a split with eval-mode forward.
double evaluate_loss(const NetworkParameters& params, const SplitView& split, LossKind kind,
                     const LossOptions& options = {});

}  // namespace uqr
