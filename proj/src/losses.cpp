// SPDX-License-Identifier: Apache-2.0
#include "uqr/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace uqr {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::mse_mean_only: return "mse_mean_only";
    case LossKind::mse: return "mse";
    case LossKind::kld: return "kld";
    case LossKind::nll: return "nll";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& text) {
  if (text == "mse_mean_only") return LossKind::mse_mean_only;
  if (text == "mse") return LossKind::mse;
  if (text == "kld") return LossKind::kld;
  if (text == "nll") return LossKind::nll;
  throw std::invalid_argument("unknown loss kind '" + text + "'");
}

HeadMode required_head(LossKind kind) {
  return kind == LossKind::mse_mean_only ? HeadMode::mean_only : HeadMode::mean_variance;
}

namespace {

void require_sigma(const GaussianPrediction& pred, const char* loss) {
  if (!pred.has_sigma) throw std::invalid_argument(std::string(loss) + " loss needs a mean-variance prediction");
}

// d mu_hat / d mean_logit for the tanh head.
double tanh_slope(const GaussianPrediction& pred) { return 1.0 - pred.mu_hat * pred.mu_hat; }

// d log(sigma_hat) / d sd_logit = -logistic(z) = -(1 - sigma_hat).
double log_sigma_slope(const GaussianPrediction& pred) { return -1.0 / (1.0 + std::exp(-pred.sd_logit)); }

}  // namespace

LossSample mse_loss(const GaussianPrediction& pred, double mu, double sigma) {
  require_sigma(pred, "mse");
  const double diff = pred.mu_hat - mu;
  const double s2 = pred.sigma_hat * pred.sigma_hat;
  const double var_gap = s2 - sigma * sigma;
  LossSample out;
  out.value = diff * diff + var_gap * var_gap;
  out.d_mean_logit = 2.0 * diff * tanh_slope(pred);
  // d/dlog(s) of (s^2 - t^2)^2 is 4 s^2 (s^2 - t^2).
  out.d_sd_logit = 4.0 * s2 * var_gap * log_sigma_slope(pred);
  return out;
}

LossSample mse_mean_only_loss(const GaussianPrediction& pred, double mu) {
  const double diff = pred.mu_hat - mu;
  return {diff * diff, 2.0 * diff * tanh_slope(pred), 0.0};
}

LossSample kld_loss(const GaussianPrediction& pred, double mu, double sigma, const LossOptions& options) {
  require_sigma(pred, "kld");
  const double t = std::max(sigma, options.sigma_floor);
  const double t2 = t * t;
  const double diff = pred.mu_hat - mu;
  const double log_s = pred.log_sigma_hat;
  const double s2 = std::exp(2.0 * log_s);
  LossSample out;
  double d_log_s;
  if (!options.textbook) {
    const double inv_s2 = std::exp(-2.0 * log_s);
    out.value = 0.5 * diff * diff * inv_s2 - log_s + 0.5 * s2 / t2;
    out.d_mean_logit = diff * inv_s2 * tanh_slope(pred);
    d_log_s = -diff * diff * inv_s2 - 1.0 + s2 / t2;
  } else {
    out.value = std::log(t) - log_s + 0.5 * (s2 + diff * diff) / t2 - 0.5;
    out.d_mean_logit = diff / t2 * tanh_slope(pred);
    d_log_s = -1.0 + s2 / t2;
  }
  out.d_sd_logit = d_log_s * log_sigma_slope(pred);
  return out;
}

LossSample nll_loss(const GaussianPrediction& pred, double mu, const LossOptions& options) {
  require_sigma(pred, "nll");
  const double diff = pred.mu_hat - mu;
  const double log_s = pred.log_sigma_hat;
  const double inv_s2 = std::exp(-2.0 * log_s);
  const double log_coeff = options.textbook ? 1.0 : 0.5;
  LossSample out;
  out.value = 0.5 * diff * diff * inv_s2 + log_coeff * log_s;
  out.d_mean_logit = diff * inv_s2 * tanh_slope(pred);
  out.d_sd_logit = (-diff * diff * inv_s2 + log_coeff) * log_sigma_slope(pred);
  return out;
}

LossSample sample_loss(LossKind kind, const GaussianPrediction& pred, double mu, double sigma,
                       const LossOptions& options) {
  switch (kind) {
    case LossKind::mse_mean_only: return mse_mean_only_loss(pred, mu);
    case LossKind::mse: return mse_loss(pred, mu, sigma);
    case LossKind::kld: return kld_loss(pred, mu, sigma, options);
    case LossKind::nll: return nll_loss(pred, mu, options);
  }
  throw std::invalid_argument("unknown loss kind");
}

BatchLoss batch_loss(LossKind kind, std::span<const GaussianPrediction> predictions,
                     const Eigen::Ref<const Eigen::VectorXd>& mu, const Eigen::Ref<const Eigen::VectorXd>& sigma,
                     const LossOptions& options) {
  if (predictions.empty()) throw std::invalid_argument("batch_loss: empty batch");
  const auto n = static_cast<Eigen::Index>(predictions.size());
  if (mu.size() != n || sigma.size() != n) throw std::invalid_argument("batch_loss: target size mismatch");
  const Eigen::Index outputs = predictions.front().has_sigma ? 2 : 1;

  BatchLoss out;
  out.upstream = Eigen::MatrixXd::Zero(outputs, n);
  const double scale = 1.0 / static_cast<double>(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const LossSample s = sample_loss(kind, predictions[static_cast<std::size_t>(j)], mu(j), sigma(j), options);
    out.value += s.value;
    out.upstream(0, j) = s.d_mean_logit * scale;
    if (outputs > 1) out.upstream(1, j) = s.d_sd_logit * scale;
  }
  out.value *= scale;
  return out;
}

}  // namespace uqr
