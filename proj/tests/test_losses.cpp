#include <gtest/gtest.h>

#include "uqr/losses.hpp"
#include "uqr/random.hpp"

using namespace uqr;

namespace {
// σ̂ → 1 from below: sd logit → −∞.
GaussianPrediction sigma_near_one(double mu_hat) { return GaussianPrediction::from_logits(std::atanh(mu_hat), -40.0); }
}  // namespace

TEST(Mse, WorkedExamples) {
  EXPECT_NEAR(mse_loss(GaussianPrediction::from_values(0.3, 0.2), 0.3, 0.2).value, 0.0, 1e-30);
  EXPECT_NEAR(mse_loss(GaussianPrediction::from_values(0.5, 0.5), 0.0, 0.3).value, 0.2756, 1e-9);
  EXPECT_NEAR(mse_loss(GaussianPrediction::from_values(0.1, 0.1), 0.1, 0.0).value, 1e-4, 1e-12);
}

TEST(Kld, AsPrintedLimits) {
  EXPECT_NEAR(kld_loss(sigma_near_one(0.2), 0.2, 1.0).value, 0.5, 1e-9);
  EXPECT_NEAR(kld_loss(sigma_near_one(0.5), -0.5, 1.0).value, 1.0, 1e-9);
  EXPECT_NEAR(kld_loss(GaussianPrediction::from_values(0.0, 0.5), 0.0, 0.5).value, 0.5 + std::log(2.0), 1e-12);
  EXPECT_NEAR(kld_loss(GaussianPrediction::from_values(0.0, 0.5), 0.0, 0.5).value, 1.19315, 1e-5);
}

TEST(Kld, SigmaFloorKeepsUnanimousTargetsFinite) {
  const auto v = kld_loss(GaussianPrediction::from_values(0.1, 0.01), 0.1, 0.0).value;
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, -std::log(0.01) + 0.5 * 1e-4 / 1e-6, 1e-9);
}

TEST(Kld, TextbookVariantVanishesAtMatch) {
  LossOptions opts;
  opts.textbook = true;
  EXPECT_NEAR(kld_loss(GaussianPrediction::from_values(0.2, 0.3), 0.2, 0.3, opts).value, 0.0, 1e-12);
}

TEST(Nll, WorkedExamples) {
  EXPECT_NEAR(nll_loss(sigma_near_one(0.3), 0.3).value, 0.0, 1e-9);
  EXPECT_NEAR(nll_loss(sigma_near_one(0.4), -0.6).value, 0.5, 1e-9);
  EXPECT_NEAR(nll_loss(GaussianPrediction::from_values(0.1, 0.5), 0.1).value, 0.5 * std::log(0.5), 1e-12);
  EXPECT_NEAR(nll_loss(GaussianPrediction::from_values(0.1, 0.5), 0.1).value, -0.34657, 1e-5);
}

TEST(Losses, MinimizedAtMatchingMean) {
  Random rng(3);
  for (LossKind kind : {LossKind::mse_mean_only, LossKind::mse, LossKind::kld, LossKind::nll}) {
    for (int trial = 0; trial < 20; ++trial) {
      const double mu = rng.uniform(-0.6, 0.6);
      const double sigma_hat = rng.uniform(0.05, 0.9);
      const double sigma = rng.uniform(0.05, 0.5);
      double best = std::numeric_limits<double>::infinity();
      double best_mu = 0.0;
      for (int k = -990; k <= 990; ++k) {
        const double m = k * 1e-3;
        const auto pred = kind == LossKind::mse_mean_only ? GaussianPrediction::from_mean(m)
                                                           : GaussianPrediction::from_values(m, sigma_hat);
        const double v = sample_loss(kind, pred, mu, sigma).value;
        if (v < best) {
          best = v;
          best_mu = m;
        }
      }
      EXPECT_NEAR(best_mu, mu, 1e-3 + 1e-12) << to_string(kind);
    }
  }
}

TEST(Nll, StationaryPointInSigma) {
  Random rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const double mu = rng.uniform(-0.4, 0.4);
    const double mu_hat = mu + rng.uniform(-0.5, 0.5);
    if (std::abs(mu_hat) >= 0.99) continue;
    double best = std::numeric_limits<double>::infinity();
    double best_s = 0.0;
    for (int k = 1; k < 1000; ++k) {
      const double s = k * 1e-3;
      const double v = nll_loss(GaussianPrediction::from_values(mu_hat, s), mu).value;
      if (v < best) {
        best = v;
        best_s = s;
      }
    }
    const double expected = std::max(std::sqrt(2.0) * std::abs(mu_hat - mu), 1e-3);
    EXPECT_NEAR(best_s, expected, 1e-3);
  }
}

TEST(Losses, GradientsMatchFiniteDifferencesInLogits) {
  Random rng(5);
  const double h = 1e-6;
  for (LossKind kind : {LossKind::mse_mean_only, LossKind::mse, LossKind::kld, LossKind::nll}) {
    for (int trial = 0; trial < 50; ++trial) {
      const double m = rng.uniform(-1.5, 1.5);
      const double z = rng.uniform(-3, 3);
      const double mu = rng.uniform(-0.8, 0.8);
      const double sigma = rng.uniform(0.0, 0.5);
      auto at = [&](double mm, double zz) {
        const auto p = kind == LossKind::mse_mean_only ? GaussianPrediction::from_logits(mm)
                                                       : GaussianPrediction::from_logits(mm, zz);
        return sample_loss(kind, p, mu, sigma);
      };
      const LossSample s = at(m, z);
      const double dm = (at(m + h, z).value - at(m - h, z).value) / (2 * h);
      EXPECT_NEAR(s.d_mean_logit, dm, 1e-5 * std::max(1.0, std::abs(dm))) << to_string(kind);
      if (kind != LossKind::mse_mean_only) {
        const double dz = (at(m, z + h).value - at(m, z - h).value) / (2 * h);
        EXPECT_NEAR(s.d_sd_logit, dz, 1e-5 * std::max(1.0, std::abs(dz))) << to_string(kind);
      }
    }
  }
}

TEST(Batch, AveragesSamples) {
  const std::vector<GaussianPrediction> preds{GaussianPrediction::from_values(0.5, 0.5),
                                              GaussianPrediction::from_values(0.0, 0.2)};
  Eigen::Vector2d mu(0.0, 0.1), sigma(0.3, 0.3);
  const double a = mse_loss(preds[0], 0.0, 0.3).value;
  const double b = mse_loss(preds[1], 0.1, 0.3).value;
  const auto batch = batch_loss(LossKind::mse, preds, mu, sigma);
  EXPECT_NEAR(batch.value, (a + b) / 2, 1e-15);
  EXPECT_EQ(batch.upstream.rows(), 2);
  EXPECT_EQ(batch.upstream.cols(), 2);

  const std::vector<GaussianPrediction> same(4, preds[0]);
  Eigen::Vector4d mu4 = Eigen::Vector4d::Zero(), s4 = Eigen::Vector4d::Constant(0.3);
  EXPECT_NEAR(batch_loss(LossKind::mse, same, mu4, s4).value, a, 1e-15);
}

TEST(Losses, HeadRequirements) {
  EXPECT_EQ(required_head(LossKind::mse_mean_only), HeadMode::mean_only);
  for (LossKind k : {LossKind::mse, LossKind::kld, LossKind::nll}) EXPECT_EQ(required_head(k), HeadMode::mean_variance);
  EXPECT_EQ(parse_loss_kind("kld"), LossKind::kld);
  EXPECT_THROW(parse_loss_kind("huber"), std::invalid_argument);
}
