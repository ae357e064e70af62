#include <gtest/gtest.h>

#include <cstdlib>
#include <json.hpp>
#include <sys/wait.h>

#include "support.hpp"
#include "uqr/cli.hpp"
#include "uqr/synth.hpp"

using namespace uqr;
namespace fs = std::filesystem;

namespace {
struct Workspace {
  uqr::testing::TempDir dir{"cli"};
  SynthFiles files;
  Dataset dataset;
  Workspace() {
    SynthConfig c;
    c.n_stimuli = 160;
    c.feature_dim = 6;
    files = cmd_synth(c, dir / "data").files;
    dataset = load_inputs({files.features, files.annotations, files.splits});
  }
  TrainConfig quick() const {
    TrainConfig t;
    t.max_epochs = 2;
    t.batches_per_epoch = 4;
    t.hidden_sizes = {16, 16};
    return t;
  }
};

int run(const std::string& args) {
  const std::string cmd = std::string(UQR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
}  // namespace

TEST(Cli, MethodParsing) {
  EXPECT_EQ(parse_methods("all").size(), 5u);
  EXPECT_EQ(parse_methods("kld,seeds,kld"), (std::vector<Method>{Method::kld, Method::seeds}));
  EXPECT_THROW(parse_methods("bayes"), UsageError);
  EXPECT_EQ(parse_dimensions("both").size(), 2u);
  EXPECT_THROW(parse_dimensions("dominance"), UsageError);
}

TEST(Cli, MethodTraitsFollowTaxonomy) {
  EXPECT_TRUE(method_traits(Method::seeds).multiple_training_runs);
  EXPECT_TRUE(method_traits(Method::seeds).multiple_inference_runs);
  EXPECT_FALSE(method_traits(Method::mc_dropout).multiple_training_runs);
  EXPECT_TRUE(method_traits(Method::mc_dropout).multiple_inference_runs);
  for (Method m : {Method::nll, Method::mse, Method::kld}) {
    EXPECT_FALSE(method_traits(m).multiple_training_runs);
    EXPECT_FALSE(method_traits(m).multiple_inference_runs);
    EXPECT_EQ(required_head(method_traits(m).loss), HeadMode::mean_variance);
  }
  EXPECT_FALSE(method_traits(Method::nll).needs_empirical_sd);
  EXPECT_TRUE(method_traits(Method::kld).needs_empirical_sd);
}

TEST(Cli, MissingFeatureFileNamesPath) {
  try {
    load_inputs({"/nonexistent/feats.csv", "a.csv", "b.csv"});
    FAIL() << "expected UsageError";
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/feats.csv"), std::string::npos);
  }
}

TEST(Cli, TrainWritesArtifactsAndIsReproducible) {
  Workspace ws;
  const auto a = cmd_train(ws.dataset, ws.quick(), {AffectDimension::valence}, ws.dir / "run_a", {});
  const auto b = cmd_train(ws.dataset, ws.quick(), {AffectDimension::valence}, ws.dir / "run_b", {});
  ASSERT_EQ(a.checkpoints.size(), 1u);
  EXPECT_TRUE(fs::exists(a.manifest));
  EXPECT_EQ(uqr::testing::slurp(a.checkpoints[0]), uqr::testing::slurp(b.checkpoints[0]));
  EXPECT_EQ(uqr::testing::slurp(a.reports[0]), uqr::testing::slurp(b.reports[0]));
  const auto report = nlohmann::json::parse(uqr::testing::slurp(a.reports[0]));
  EXPECT_EQ(report["val_loss"].size(), 2u);
  const auto manifest = nlohmann::json::parse(uqr::testing::slurp(a.manifest));
  EXPECT_EQ(manifest["command"], "train");
  EXPECT_EQ(manifest["outputs"].size(), 2u);
}

TEST(Cli, BenchmarkKldReportsSdMetrics) {
  Workspace ws;
  BenchmarkOptions o;
  o.methods = {Method::kld};
  o.dims = {AffectDimension::valence};
  o.config = ws.quick();
  const auto r = run_benchmark(ws.dataset, o, ws.dir / "bench");
  ASSERT_EQ(r.report.methods.size(), 1u);
  const auto& sd = r.report.methods[0].at(AffectDimension::valence, Target::sd);
  ASSERT_TRUE(sd.has_value());
  EXPECT_TRUE(sd->pearson.mean.has_value());
  EXPECT_TRUE(fs::exists(ws.dir / "bench" / "scatter" / "kld_valence_sd.csv"));
  EXPECT_TRUE(fs::exists(ws.dir / "bench" / "scatter" / "kld_valence_sd_hist.csv"));
}

TEST(Cli, BenchmarkEnforcesMethodContracts) {
  Workspace ws;
  BenchmarkOptions o;
  o.dims = {AffectDimension::valence};
  o.config = ws.quick();
  o.methods = {Method::seeds};
  o.ensemble_size = 1;
  EXPECT_THROW(run_benchmark(ws.dataset, o), UsageError);

  const auto trained = cmd_train(ws.dataset, ws.quick(), {AffectDimension::valence}, ws.dir / "mean_only", {});
  o.methods = {Method::kld};
  o.checkpoint = trained.checkpoints[0];
  EXPECT_THROW(run_benchmark(ws.dataset, o), UsageError);

  TrainConfig no_dropout = ws.quick();
  no_dropout.dropout_rate = 0.0;
  const auto plain = cmd_train(ws.dataset, no_dropout, {AffectDimension::valence}, ws.dir / "plain", {});
  o.methods = {Method::mc_dropout};
  o.checkpoint = plain.checkpoints[0];
  EXPECT_THROW(run_benchmark(ws.dataset, o), UsageError);
}

TEST(Cli, BenchmarkIsIdempotent) {
  Workspace ws;
  BenchmarkOptions o;
  o.methods = {Method::seeds, Method::mc_dropout, Method::nll};
  o.dims = {AffectDimension::arousal};
  o.config = ws.quick();
  o.ensemble_size = 3;
  o.mc_draws = 4;
  const auto a = run_benchmark(ws.dataset, o, ws.dir / "a");
  const auto b = run_benchmark(ws.dataset, o, ws.dir / "b");
  for (const auto& entry : fs::recursive_directory_iterator(ws.dir / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), ws.dir / "a");
    EXPECT_EQ(uqr::testing::slurp(entry.path()), uqr::testing::slurp(ws.dir / "b" / rel)) << rel;
  }
  EXPECT_EQ(report_to_json(a.report), report_to_json(b.report));
}

TEST(Cli, SynthIsIdempotentAndRejectsBadConfig) {
  uqr::testing::TempDir dir("cli_synth");
  SynthConfig c;
  c.n_stimuli = 60;
  const auto a = cmd_synth(c, dir / "x");
  const auto first = uqr::testing::slurp(a.files.annotations);
  cmd_synth(c, dir / "x");
  EXPECT_EQ(uqr::testing::slurp(a.files.annotations), first);
  c.sd_max = 0.9;
  EXPECT_THROW(cmd_synth(c, dir / "y"), UsageError);
}

TEST(CliBinary, ExitCodes) {
  uqr::testing::TempDir dir("cli_bin");
  const std::string out = (dir / "data").string();
  EXPECT_EQ(run("synth --out " + out + " --set n_stimuli=80 --set feature_dim=4"), 0);
  const std::string data = " --features " + out + "/features.csv --annotations " + out +
                           "/annotations.csv --splits " + out + "/splits.csv";
  EXPECT_EQ(run("train --features " + out + "/missing.csv --annotations " + out + "/annotations.csv --splits " + out +
                "/splits.csv --out " + (dir / "t").string()),
            2);
  EXPECT_EQ(run("benchmark" + data + " --method seeds --ensemble-size 1 --out " + (dir / "b").string()), 2);
  EXPECT_EQ(run("benchmark" + data + " --method nope --out " + (dir / "b").string()), 2);
  EXPECT_EQ(run("synth --out " + (dir / "bad").string() + " --set sd_min=0.6"), 2);
  EXPECT_EQ(run("train" + data + " --set max_epochs=1 --set batches_per_epoch=2 --dimension valence --out " +
                (dir / "t").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "t" / "valence" / "checkpoint.json"));
  EXPECT_EQ(run("frobnicate"), 2);
}

TEST(CliBinary, EnvironmentOverrides) {
  uqr::testing::TempDir dir("cli_env");
  const std::string out = (dir / "data").string();
  ASSERT_EQ(run("synth --out " + out + " --set n_stimuli=80 --set feature_dim=4"), 0);
  const std::string env = "UQR_FEATURES=" + out + "/features.csv UQR_ANNOTATIONS=" + out +
                          "/annotations.csv UQR_SPLITS=" + out + "/splits.csv UQR_DIMENSION=arousal ";
  const std::string cmd = env + UQR_CLI_PATH + " train --set max_epochs=1 --set batches_per_epoch=2 --out " +
                          (dir / "t").string() + " >/dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(dir / "t" / "arousal" / "checkpoint.json"));
  EXPECT_FALSE(fs::exists(dir / "t" / "valence"));
}
