// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "uqr/random.hpp"

namespace uqr {

enum class HeadMode { mean_only, mean_variance };

std::string to_string(HeadMode mode);
HeadMode parse_head_mode(const std::string& text);

enum class ForwardMode { train, eval, mc_dropout };

/// Shape of the fully connected network: input -> hidden (ELU + dropout)...
/// -> one mean logit, plus one SD logit in mean_variance mode.
struct Architecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_sizes{128, 128};
  HeadMode head_mode = HeadMode::mean_variance;
  double dropout_rate = 0.5;

  std::size_t output_dim() const { return head_mode == HeadMode::mean_only ? 1 : 2; }
  /// input_dim, hidden sizes..., output_dim
  std::vector<std::size_t> layer_widths() const;
  std::size_t parameter_count() const;
  void validate() const;

  bool operator==(const Architecture&) const = default;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Weights and biases stored contiguously, layer by layer, each layer as a
/// row-major (out x in) weight block followed by its bias. Gradients use the
/// same type.
class NetworkParameters {
 public:
  NetworkParameters() = default;
  explicit NetworkParameters(Architecture arch);

  const Architecture& architecture() const { return arch_; }
  std::size_t num_layers() const { return offsets_.size(); }

  Eigen::Map<const RowMatrix> weight(std::size_t layer) const;
  Eigen::Map<RowMatrix> weight(std::size_t layer);
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;
  Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  std::size_t size() const { return values_.size(); }

  bool all_finite() const;
  void set_zero();

  /// Seed of the run that produced these parameters (checkpoint metadata).
  std::uint64_t seed = 0;

  bool operator==(const NetworkParameters& other) const {
    return arch_ == other.arch_ && values_ == other.values_ && seed == other.seed;
  }

 private:
  std::size_t rows(std::size_t layer) const { return widths_[layer + 1]; }
  std::size_t cols(std::size_t layer) const { return widths_[layer]; }

  Architecture arch_;
  std::vector<std::size_t> widths_;
  std::vector<std::size_t> offsets_;
  std::vector<double> values_;
};

using ParameterGradients = NetworkParameters;

/// Fan-in scaled uniform weights on [-sqrt(6/fan_in), sqrt(6/fan_in)], zero
/// biases.
NetworkParameters init_parameters(const Architecture& arch, std::uint64_t seed);

/// ELU with alpha = 1.
double elu(double z);
double elu_derivative(double z);

/// -log(1 + e^z) evaluated without overflow. Equals log(sigma_hat) for the SD
/// logit z.
double neg_softplus(double z);

/// Model output for one stimulus. sigma_hat = 1 / (1 + e^sd_logit), and
/// log_sigma_hat is always neg_softplus(sd_logit).
struct GaussianPrediction {
  double mean_logit = 0.0;
  double mu_hat = 0.0;
  bool has_sigma = false;
  double sd_logit = 0.0;
  double sigma_hat = 0.0;
  double log_sigma_hat = 0.0;

  static GaussianPrediction from_logits(double mean_logit);
  static GaussianPrediction from_logits(double mean_logit, double sd_logit);
  /// Inverts the heads; mu_hat in (-1, 1), sigma_hat in (0, 1).
  static GaussianPrediction from_values(double mu_hat, double sigma_hat);
  static GaussianPrediction from_mean(double mu_hat);
};

/// Binary keep masks (one hidden_size x batch matrix per hidden layer).
struct DropoutMask {
  std::vector<Eigen::MatrixXd> layers;
  double keep_probability = 1.0;
};

/// Intermediate values of a forward pass, consumed by backward.
struct ForwardTape {
  ForwardMode mode = ForwardMode::eval;
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> pre_activations;
  /// Post-activation, post-dropout outputs of each hidden layer.
  std::vector<Eigen::MatrixXd> hidden_outputs;
  DropoutMask mask;
  Eigen::MatrixXd logits;
};

struct BatchForward {
  std::vector<GaussianPrediction> predictions;
  ForwardTape tape;
};

/// Evaluates the network on a (input_dim x batch) matrix. train and
/// mc_dropout draw a fresh keep mask per hidden unit and sample from rng and
/// rescale kept activations by 1 / keep_probability; eval applies no mask.
BatchForward forward_batch(const NetworkParameters& params, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                           ForwardMode mode, Random* rng);

std::pair<GaussianPrediction, ForwardTape> forward(const NetworkParameters& params,
                                                   std::span<const double> x, ForwardMode mode,
                                                   Random* rng);

/// Reverse pass. upstream holds d(loss)/d(logits), output_dim x batch, with
/// the mean logit in row 0 and the SD logit in row 1.
ParameterGradients backward(const NetworkParameters& params, const ForwardTape& tape,
                            const Eigen::Ref<const Eigen::MatrixXd>& upstream);

/// Single-sample convenience form.
ParameterGradients backward(const NetworkParameters& params, const ForwardTape& tape,
                            double d_mean_logit, double d_sd_logit);

struct PointPredictions {
  Eigen::VectorXd mu_hat;
  Eigen::VectorXd sigma_hat;  ///< empty for mean_only
};

/// Eval-mode forward over the columns of inputs.
PointPredictions predict(const NetworkParameters& params, const Eigen::Ref<const Eigen::MatrixXd>& inputs);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string checkpoint_to_json(const NetworkParameters& params);
NetworkParameters checkpoint_from_json(const std::string& text);
void save_checkpoint(const std::filesystem::path& path, const NetworkParameters& params);
NetworkParameters load_checkpoint(const std::filesystem::path& path);

}  // namespace uqr
