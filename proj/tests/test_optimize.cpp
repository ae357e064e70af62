#include <gtest/gtest.h>

#include "support.hpp"
#include "uqr/metrics.hpp"
#include "uqr/optimize.hpp"
#include "uqr/synth.hpp"

using namespace uqr;

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> p{0.0};
  AdamState state(1);
  adam_step(p, std::vector<double>{1.0}, state, 1e-3);
  EXPECT_NEAR(p[0], -1e-3, 1e-10);
  EXPECT_EQ(state.step_count, 1u);
}

TEST(Adam, ZeroGradientLeavesParametersAndDecaysMoments) {
  std::vector<double> p{0.5, -0.25};
  AdamState fresh(2);
  adam_step(p, std::vector<double>{0.0, 0.0}, fresh, 1e-3);
  EXPECT_EQ(p, (std::vector<double>{0.5, -0.25}));

  AdamState state(2);
  adam_step(p, std::vector<double>{1.0, -2.0}, state, 1e-3);
  const auto m = state.first_moment;
  const auto v = state.second_moment;
  adam_step(p, std::vector<double>{0.0, 0.0}, state, 1e-3);
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(state.first_moment[i], 0.9 * m[i], 1e-15);
    EXPECT_NEAR(state.second_moment[i], 0.999 * v[i], 1e-15);
  }
}

TEST(Adam, EqualGradientsGiveEqualUpdates) {
  std::vector<double> p{1.0, 1.0};
  AdamState state(2);
  for (int i = 0; i < 5; ++i) adam_step(p, std::vector<double>{0.3, 0.3}, state, 1e-2);
  EXPECT_EQ(p[0], p[1]);
}

TEST(Adam, RejectsNonFiniteGradient) {
  std::vector<double> p{1.0};
  AdamState state(1);
  EXPECT_THROW(adam_step(p, std::vector<double>{std::nan("")}, state, 1e-3), TrainingError);
}

TEST(Plateau, StrictlyDecreasingKeepsRate) {
  TrainConfig c;
  const std::vector<double> h{1.0, 0.9, 0.8, 0.7, 0.6, 0.5};
  EXPECT_EQ(plateau_schedule(h, c), 1e-3);
}

TEST(Plateau, ThreeFlatEpochsAfterBestReduce) {
  TrainConfig c;
  EXPECT_EQ(plateau_schedule(std::vector<double>{1.0, 1.0, 1.0}, c), 1e-3);
  EXPECT_NEAR(plateau_schedule(std::vector<double>{1.0, 1.0, 1.0, 1.0}, c), 9e-4, 1e-18);
  // counter resets on the drop: three more flat epochs reduce again
  EXPECT_NEAR(plateau_schedule(std::vector<double>{1.0, 1.0, 1.0, 1.0, 1.0, 1.0}, c), 9e-4, 1e-18);
  EXPECT_NEAR(plateau_schedule(std::vector<double>{1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0}, c), 8.1e-4, 1e-18);
}

TEST(Plateau, EqualLossIsNotAnImprovement) {
  PlateauScheduler s(1e-3, 0.9, 3, 1e-5);
  s.step(0.5);
  s.step(0.5);
  EXPECT_EQ(s.epochs_without_improvement(), 1u);
  s.step(0.4);
  EXPECT_EQ(s.epochs_without_improvement(), 0u);
}

TEST(Plateau, FloorAtMinimum) {
  PlateauScheduler s(1e-5, 0.9, 3, 1e-5);
  for (int i = 0; i < 20; ++i) s.step(1.0);
  EXPECT_EQ(s.lr(), 1e-5);
  PlateauScheduler t(1.1e-5, 0.9, 1, 1e-5);
  t.step(1.0);
  t.step(1.0);
  EXPECT_EQ(t.lr(), 1e-5);
}

TEST(Config, ParseAndSnapshot) {
  const TrainConfig c = parse_train_config(
      "# comment\n[train]\nmax_epochs = 7\nloss_kind = kld\nhidden_sizes = 32,16\ndropout_rate=0.25\nsigma_floor = 1e-2\n");
  EXPECT_EQ(c.max_epochs, 7u);
  EXPECT_EQ(c.loss_kind, LossKind::kld);
  EXPECT_EQ(c.hidden_sizes, (std::vector<std::size_t>{32, 16}));
  EXPECT_EQ(c.dropout_rate, 0.25);
  EXPECT_EQ(c.loss_options.sigma_floor, 1e-2);
  const auto snap = config_snapshot(c);
  TrainConfig again;
  for (const auto& [k, v] : snap) set_config_value(again, k, v);
  EXPECT_EQ(config_snapshot(again), snap);
  EXPECT_THROW(parse_train_config("unknown_key = 3\n"), std::invalid_argument);
  EXPECT_THROW(parse_train_config("max_epochs = lots\n"), std::invalid_argument);
}

namespace {
SynthDataset small_synth(bool low_noise = false) {
  SynthConfig s;
  s.n_stimuli = low_noise ? 600 : 200;
  s.feature_dim = 8;
  if (low_noise) {
    s.quantize = false;
    s.mean_gain = 0.5;
    s.sd_min = 0.05;
    s.sd_max = 0.06;
  }
  return generate(s);
}
}  // namespace

TEST(Train, ZeroEpochsReturnsInitialization) {
  const auto synth = small_synth();
  TrainConfig c;
  c.max_epochs = 0;
  const TrainResult r = train(synth.dataset, c);
  Architecture arch;
  arch.input_dim = 8;
  arch.head_mode = HeadMode::mean_only;
  EXPECT_EQ(r.params, init_parameters(arch, c.seed));
  EXPECT_TRUE(r.report.train_loss.empty());
  EXPECT_TRUE(r.report.val_loss.empty());
}

TEST(Train, FixedSeedIsReproducible) {
  const auto synth = small_synth();
  TrainConfig c;
  c.max_epochs = 3;
  c.batches_per_epoch = 8;
  c.loss_kind = LossKind::kld;
  const TrainResult a = train(synth.dataset, c);
  const TrainResult b = train(synth.dataset, c);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.report.train_loss, b.report.train_loss);
  EXPECT_EQ(a.report.val_loss, b.report.val_loss);
  EXPECT_EQ(report_to_json(a.report, c), report_to_json(b.report, c));
  c.seed = 42;
  EXPECT_NE(train(synth.dataset, c).params, a.params);
}

TEST(Train, ReportTracksBestEpoch) {
  const auto synth = small_synth();
  TrainConfig c;
  c.max_epochs = 6;
  c.batches_per_epoch = 8;
  const TrainResult r = train(synth.dataset, c);
  ASSERT_EQ(r.report.val_loss.size(), 6u);
  ASSERT_GE(r.report.best_epoch, 0);
  const auto best = std::min_element(r.report.val_loss.begin(), r.report.val_loss.end());
  EXPECT_EQ(r.report.best_epoch, best - r.report.val_loss.begin());
  EXPECT_EQ(r.report.samples_per_epoch, 8u * 32u);
  const SplitView val = make_view(synth.dataset, Split::val, AffectDimension::valence);
  EXPECT_NEAR(evaluate_loss(r.params, val, LossKind::mse_mean_only), *best, 1e-12);
}

TEST(Train, RecoversNearLinearMean) {
  const auto synth = small_synth(true);
  TrainConfig c;
  c.max_epochs = 30;
  const TrainResult r = train(synth.dataset, c);
  const SplitView test = make_view(synth.dataset, Split::test, AffectDimension::valence);
  const auto pred = predict(r.params, test.features);
  const std::vector<double> truth(test.mu.data(), test.mu.data() + test.mu.size());
  const std::vector<double> p(pred.mu_hat.data(), pred.mu_hat.data() + pred.mu_hat.size());
  EXPECT_GE(r2(truth, p), 0.95);
}
