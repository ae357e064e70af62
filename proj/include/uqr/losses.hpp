// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "uqr/network.hpp"

namespace uqr {

/// mse_mean_only trains the mean head alone (seed ensembles, MC dropout);
/// the other three need the mean-variance head.
enum class LossKind { mse_mean_only, mse, kld, nll };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& text);
HeadMode required_head(LossKind kind);

struct LossOptions {
  /// Floor applied to the empirical SD in the KLD denominator.
  double sigma_floor = 1e-3;
  /// Use the closed-form Gaussian KL and the log(sigma) NLL instead of the
  /// default objectives.
  bool textbook = false;
};

/// Per-sample loss and its derivatives with respect to the two logits.
struct LossSample {
  double value = 0.0;
  double d_mean_logit = 0.0;
  double d_sd_logit = 0.0;
};

/// (mu_hat - mu)^2 + (sigma_hat^2 - sigma^2)^2
LossSample mse_loss(const GaussianPrediction& pred, double mu, double sigma);

/// (mu_hat - mu)^2 on the mean head only.
LossSample mse_mean_only_loss(const GaussianPrediction& pred, double mu);

/// 1/2 ((mu_hat - mu) / sigma_hat)^2 - log sigma_hat + 1/2 sigma_hat^2 / sigma^2
///
/// The quadratic term is scaled by the predicted SD and there is no -1/2
/// constant, so the value at a perfect match is 1/2, not 0. With
/// options.textbook the closed-form KL(N(mu_hat, sigma_hat^2) || N(mu, sigma^2))
/// is used instead.
LossSample kld_loss(const GaussianPrediction& pred, double mu, double sigma, const LossOptions& options = {});

/// 1/2 ((mu_hat - mu) / sigma_hat)^2 + 1/2 log sigma_hat
///
/// Stationary in sigma_hat at sigma_hat^2 = 2 (mu_hat - mu)^2. The textbook
/// variant uses a full log sigma_hat term.
LossSample nll_loss(const GaussianPrediction& pred, double mu, const LossOptions& options = {});

LossSample sample_loss(LossKind kind, const GaussianPrediction& pred, double mu, double sigma,
                       const LossOptions& options = {});

struct BatchLoss {
  double value = 0.0;
  /// d(mean loss)/d(logits), output_dim x batch; feeds backward directly.
  Eigen::MatrixXd upstream;
};

/// Arithmetic mean over the batch, with gradients averaged the same way.
BatchLoss batch_loss(LossKind kind, std::span<const GaussianPrediction> predictions,
                     const Eigen::Ref<const Eigen::VectorXd>& mu, const Eigen::Ref<const Eigen::VectorXd>& sigma,
                     const LossOptions& options = {});

}  // namespace uqr
