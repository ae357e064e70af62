#include <gtest/gtest.h>

#include <set>

#include "support.hpp"
#include "uqr/data.hpp"

using namespace uqr;
using uqr::testing::TempDir;

TEST(Normalize, LikertExtremesAndNeutral) {
  const auto scale = RatingScale::likert9();
  EXPECT_EQ(normalize_rating(5, scale), 0.0);
  EXPECT_DOUBLE_EQ(normalize_rating(9, scale), 0.8);
  EXPECT_DOUBLE_EQ(normalize_rating(1, scale), -0.8);
  EXPECT_EQ(normalize_rating(1, scale), -normalize_rating(9, scale));
}

TEST(Normalize, IntegerRoundTripIsExact) {
  for (const auto& scale : {RatingScale::likert9(), RatingScale(1, 5), RatingScale(1, 7)}) {
    for (int r = scale.min(); r <= scale.max(); ++r) {
      EXPECT_EQ(scale.denormalize(scale.normalize(r)), static_cast<double>(r)) << r;
    }
  }
}

TEST(Normalize, RejectsOutOfRange) {
  EXPECT_THROW(normalize_rating(0, RatingScale::likert9()), DataError);
  EXPECT_THROW(normalize_rating(10, RatingScale::likert9()), DataError);
}

TEST(Aggregate, WorkedExamples) {
  const Moments same = aggregate_normalized(std::vector<double>{0.2, 0.2, 0.2});
  EXPECT_DOUBLE_EQ(same.mean, 0.2);
  EXPECT_EQ(same.sd, 0.0);

  const Moments pair = aggregate_normalized(std::vector<double>{-0.2, 0.2});
  EXPECT_NEAR(pair.mean, 0.0, 1e-15);
  EXPECT_NEAR(pair.sd, std::sqrt(0.08), 1e-12);
  EXPECT_NEAR(pair.sd, 0.28284, 1e-5);

  AnnotationSet set{"song", {{"a", 1, 5}, {"b", 9, 5}}};
  const EmotionTarget t = aggregate(set, RatingScale::likert9());
  EXPECT_NEAR(t.mu_v, 0.0, 1e-15);
  EXPECT_NEAR(t.sigma_v, 1.13137, 1e-5);
  EXPECT_EQ(t.sigma_a, 0.0);
}

TEST(Aggregate, TooFewRatingsNamesStimulus) {
  AnnotationSet set{"lonely_song", {{"a", 3, 4}}};
  try {
    aggregate(set, RatingScale::likert9());
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("lonely_song"), std::string::npos);
  }
}

TEST(Aggregate, InvariantToRaterOrder) {
  AnnotationSet a{"s", {{"r1", 2, 7}, {"r2", 9, 3}, {"r3", 4, 4}, {"r4", 6, 8}}};
  AnnotationSet b{"s", {{"r4", 6, 8}, {"r2", 9, 3}, {"r1", 2, 7}, {"r3", 4, 4}}};
  const auto ta = aggregate(a, RatingScale::likert9());
  const auto tb = aggregate(b, RatingScale::likert9());
  EXPECT_EQ(ta.mu_v, tb.mu_v);
  EXPECT_EQ(ta.sigma_v, tb.sigma_v);
  EXPECT_EQ(ta.mu_a, tb.mu_a);
  EXPECT_EQ(ta.sigma_a, tb.sigma_a);
}

TEST(Split, LargestRemainderSizes) {
  EXPECT_EQ(split_sizes(1744, {}), (std::array<std::size_t, 3>{1221, 261, 262}));
  EXPECT_EQ(split_sizes(10, {}), (std::array<std::size_t, 3>{7, 1, 2}));
  for (std::size_t n : {1u, 3u, 17u, 100u, 2000u}) {
    const auto s = split_sizes(n, {});
    EXPECT_EQ(s[0] + s[1] + s[2], n);
  }
}

namespace {
std::vector<std::pair<std::string, std::string>> labelled(std::size_t n, const std::string& genre,
                                                          const std::string& prefix) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(prefix + std::to_string(i), genre);
  return out;
}

std::array<std::size_t, 3> count(const std::map<std::string, Split>& split, const std::string& prefix = "") {
  std::array<std::size_t, 3> c{};
  for (const auto& [id, s] : split) {
    if (id.starts_with(prefix)) ++c[static_cast<std::size_t>(s)];
  }
  return c;
}
}  // namespace

TEST(Split, StratifiedIsDeterministicPartition) {
  const auto ids = labelled(10, "rock", "r");
  const auto a = stratified_split(ids, {}, 7);
  const auto b = stratified_split(ids, {}, 7);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), 10u);
  EXPECT_EQ(count(a), (std::array<std::size_t, 3>{7, 1, 2}));
  EXPECT_NE(a, stratified_split(ids, {}, 8));
}

TEST(Split, PerGenreSizesMatchSingleGenre) {
  auto ids = labelled(10, "rock", "r");
  const auto jazz = labelled(10, "jazz", "j");
  ids.insert(ids.end(), jazz.begin(), jazz.end());
  const auto split = stratified_split(ids, {}, 3);
  EXPECT_EQ(count(split, "r"), (std::array<std::size_t, 3>{7, 1, 2}));
  EXPECT_EQ(count(split, "j"), (std::array<std::size_t, 3>{7, 1, 2}));
}

namespace {
struct Fixture {
  TempDir dir{"data"};
  std::filesystem::path features = dir / "features.csv";
  std::filesystem::path annotations = dir / "annotations.csv";
  std::filesystem::path splits = dir / "splits.csv";

  Fixture() {
    uqr::testing::spit(features, "stimulus_id,f0,f1\nsong_a,0.1,0.2\nsong_b,-1,2\nsong_c,3.5,0\n");
    uqr::testing::spit(annotations,
                       "stimulus_id,rater_id,valence,arousal\n"
                       "song_a,r1,5,5\nsong_a,r2,9,1\n"
                       "song_b,r1,1,2\nsong_b,r2,3,4\nsong_b,r3,2,3\n"
                       "song_c,r1,7,7\nsong_c,r2,7,8\n");
    uqr::testing::spit(splits, "stimulus_id,split\nsong_a,train\nsong_b,val\nsong_c,test\n");
  }
};
}  // namespace

TEST(Load, ThreeSongFixture) {
  Fixture fx;
  LoadSummary summary;
  const Dataset ds = load_dataset(fx.features, fx.annotations, fx.splits, RatingScale::likert9(), {}, &summary);
  EXPECT_EQ(ds.targets.size(), 3u);
  EXPECT_EQ(ds.feature_dim, 2u);
  EXPECT_EQ(summary.train + summary.val + summary.test, 3u);
  EXPECT_NEAR(ds.targets.at("song_a").mu_v, 0.4, 1e-15);
  EXPECT_NEAR(ds.targets.at("song_a").sigma_a, std::sqrt(0.32), 1e-12);
  EXPECT_EQ(ds.split.at("song_c"), Split::test);
  EXPECT_FALSE(summary.warnings.empty());  // fewer raters than recommended
}

TEST(Load, WriterRoundTrip) {
  Fixture fx;
  const Dataset ds = load_dataset(fx.features, fx.annotations, fx.splits, RatingScale::likert9());
  TempDir out("roundtrip");
  write_features(out / "features.csv", ds.features);
  write_annotations(out / "annotations.csv", read_annotations(fx.annotations, RatingScale::likert9()));
  write_splits(out / "splits.csv", ds.split);
  const Dataset again =
      load_dataset(out / "features.csv", out / "annotations.csv", out / "splits.csv", RatingScale::likert9());
  EXPECT_EQ(again.features, ds.features);
  EXPECT_EQ(again.split, ds.split);
  for (const auto& [id, t] : ds.targets) {
    EXPECT_EQ(again.targets.at(id).mu_v, t.mu_v);
    EXPECT_EQ(again.targets.at(id).sigma_a, t.sigma_a);
  }
}

TEST(Load, MissingFeatureRowNamesId) {
  Fixture fx;
  uqr::testing::spit(fx.features, "stimulus_id,f0,f1\nsong_a,0.1,0.2\nsong_c,3.5,0\n");
  try {
    load_dataset(fx.features, fx.annotations, fx.splits, RatingScale::likert9());
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("song_b"), std::string::npos) << e.what();
  }
}

TEST(Load, OutOfRangeRatingNamesStimulusAndRater) {
  Fixture fx;
  uqr::testing::spit(fx.annotations,
                     "stimulus_id,rater_id,valence,arousal\nsong_a,r1,5,5\nsong_a,r9,10,1\n"
                     "song_b,r1,1,2\nsong_b,r2,3,4\nsong_c,r1,7,7\nsong_c,r2,7,8\n");
  try {
    load_dataset(fx.features, fx.annotations, fx.splits, RatingScale::likert9());
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("song_a"), std::string::npos) << msg;
    EXPECT_NE(msg.find("r9"), std::string::npos) << msg;
  }
}

TEST(Load, FractionalRatingsNeedOptIn) {
  Fixture fx;
  uqr::testing::spit(fx.annotations,
                     "stimulus_id,rater_id,valence,arousal\nsong_a,r1,5.5,5\nsong_a,r2,9,1\n"
                     "song_b,r1,1,2\nsong_b,r2,3,4\nsong_c,r1,7,7\nsong_c,r2,7,8\n");
  EXPECT_THROW(load_dataset(fx.features, fx.annotations, fx.splits, RatingScale::likert9()), DataError);
  LoadOptions opts;
  opts.allow_fractional_ratings = true;
  const Dataset ds = load_dataset(fx.features, fx.annotations, fx.splits, RatingScale::likert9(), opts);
  EXPECT_NEAR(ds.targets.at("song_a").mu_v, (0.1 + 0.8) / 2.0, 1e-12);
}

TEST(View, ColumnsFollowSortedIds) {
  Fixture fx;
  const Dataset ds = load_dataset(fx.features, fx.annotations, fx.splits, RatingScale::likert9());
  const SplitView v = make_view(ds, Split::train, AffectDimension::arousal);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v.ids[0], "song_a");
  EXPECT_EQ(v.features(1, 0), 0.2);
  EXPECT_NEAR(v.mu(0), -0.4, 1e-15);
}
