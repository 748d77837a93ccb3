#include "cknn/bank_search.hpp"
#include "cknn/cleanse.hpp"
#include "cknn/eval.hpp"
#include "cknn/io.hpp"
#include "cknn/synth.hpp"

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace cknn;

namespace {

std::string bytes(const DatasetManifest& m) {
  std::ostringstream os;
  write_dataset(os, m, DatasetFormat::Binary);
  return os.str();
}

double dist(const std::vector<float>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double dist(const std::vector<float>& a, const std::vector<float>& b) {
  return dist(a, std::vector<double>(b.begin(), b.end()));
}

}  // namespace

TEST(Synth, NoEventsMeansNoAnomalies) {
  SynthConfig c;
  c.anomaly_event_rate = 0;
  c.n_train_videos = 3;
  c.n_test_videos = 3;
  auto ds = generate(c);
  for (auto f : ds.truth.train_abnormal) EXPECT_EQ(f, 0);
  for (auto f : ds.truth.test_abnormal) EXPECT_EQ(f, 0);
  for (const auto& v : ds.test.videos) {
    for (auto l : *v.labels) EXPECT_EQ(l, 0);
  }
  EXPECT_TRUE(ds.truth.events.empty());
  EXPECT_EQ(ds.truth.expected_contamination, 0.0);
}

TEST(Synth, OneFixedEventLabelsItsFramesContiguously) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SynthConfig c;
    c.seed = seed;
    c.n_train_videos = 0;
    c.n_test_videos = 1;
    c.anomaly_event_rate = 1;
    c.event_duration_frames = 10;
    c.duration_model = DurationModel::Fixed;
    auto ds = generate(c);
    ASSERT_EQ(ds.truth.events.size(), 1u);
    const auto& ev = ds.truth.events[0];
    const auto& labels = *ds.test.videos[0].labels;
    std::size_t count = 0;
    for (std::size_t t = 0; t < labels.size(); ++t) {
      const bool inside = t >= ev.start_frame && t < ev.start_frame + 10u;
      EXPECT_EQ(labels[t], inside ? 1 : 0);
      count += labels[t];
    }
    EXPECT_EQ(count, 10u);
  }
}

TEST(Synth, Deterministic) {
  SynthConfig c;
  c.seed = 17;
  c.n_train_videos = 3;
  c.n_test_videos = 2;
  auto a = generate(c);
  auto b = generate(c);
  EXPECT_EQ(bytes(a.train), bytes(b.train));
  EXPECT_EQ(bytes(a.test), bytes(b.test));
  EXPECT_EQ(a.truth.train_abnormal, b.truth.train_abnormal);
  c.seed = 18;
  EXPECT_NE(bytes(generate(c).train), bytes(a.train));
  EXPECT_EQ(a.train.videos[0].video_id, "train_000");
  EXPECT_FALSE(a.train.has_labels());
  EXPECT_TRUE(a.test.has_labels());
}

TEST(Synth, ContaminationMatchesExpectation) {
  SynthConfig c;
  double observed = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    c.seed = seed;
    auto ds = generate(c);
    std::size_t abn = 0;
    for (auto f : ds.truth.train_abnormal) abn += f;
    observed += static_cast<double>(abn) / ds.truth.train_abnormal.size();
  }
  observed /= 10;
  const double expected = expected_contamination(c);
  EXPECT_NEAR(observed, expected, 0.2 * expected);
}

TEST(Synth, EventsFormTightClusters) {
  SynthConfig c;
  c.seed = 4;
  auto ds = generate(c);
  double within = 0, across = 0;
  std::size_t n_within = 0, n_across = 0;
  for (const auto& ev : ds.truth.events) {
    if (!ev.app_center.empty() && ev.video_id.rfind("train", 0) == 0) {
      std::vector<const ObjectRecord*> members;
      for (std::size_t i = 0; i < ds.train.objects.size(); ++i) {
        const auto& o = ds.train.objects[i];
        if (!ds.truth.train_abnormal[i] || o.video_id != ev.video_id) continue;
        if (o.frame_idx < ev.start_frame || o.frame_idx >= ev.start_frame + ev.duration) continue;
        if (dist(o.app_feature, ev.app_center) < 1.0) members.push_back(&o);
      }
      EXPECT_EQ(members.size(), ev.duration);
      for (std::size_t a = 0; a < members.size(); ++a) {
        for (std::size_t b = a + 1; b < members.size(); ++b) {
          within += dist(members[a]->app_feature, members[b]->app_feature);
          ++n_within;
        }
      }
      for (const auto& center : ds.truth.app_normal_centers) {
        double s = 0;
        for (std::size_t j = 0; j < center.size(); ++j) {
          s += (center[j] - ev.app_center[j]) * (center[j] - ev.app_center[j]);
        }
        across += std::sqrt(s);
        ++n_across;
      }
    }
  }
  ASSERT_GT(n_within, 0u);
  EXPECT_LT(within / n_within, 0.1 * across / n_across);
}

TEST(Synth, OverlapWarningAndValidation) {
  SynthConfig c;
  c.n_train_videos = 1;
  c.n_test_videos = 1;
  c.anomaly_offset = 1.5;
  EXPECT_TRUE(generate(c).truth.overlap_warning);
  c.anomaly_offset = 8;
  EXPECT_FALSE(generate(c).truth.overlap_warning);
  c.anomaly_offset = 0;
  EXPECT_THROW(generate(c), InvalidInput);
  c.anomaly_offset = 8;
  c.event_duration_frames = 0.5;
  EXPECT_THROW(generate(c), InvalidInput);
}

// Raw kNN cannot separate clustered anomalies in the training set because
// each one has close neighbours from its own event; cleansing removes them.
TEST(Synth, CleansingSeparatesObjectScores) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SynthConfig c;
    c.seed = seed;
    auto ds = generate(c);
    const auto view = ds.train.training_view();
    const auto& truth = ds.truth.train_abnormal;
    std::size_t abn = 0;
    for (auto f : truth) abn += f;
    const double contamination = static_cast<double>(abn) / truth.size();

    const auto x = stack_features(view.objects, Modality::App, view.d_app);
    SearchIndex raw_idx(x);
    const auto raw = knn_score_batch(raw_idx, x, 4, true);

    CleanseConfig cc;
    cc.hyperparams.tau = 2 * 100 * contamination;
    cc.hyperparams.p = 100;
    cc.hyperparams.seed = seed;
    const auto cleansed = cleanse_modality(view, Modality::App, cc.app_scorer, cc);
    SearchIndex clean_idx(cleansed.bank.matrix);
    const auto clean = knn_score_batch(clean_idx, x, 4, true);

    const double a_raw = auroc(raw, truth);
    const double a_clean = auroc(clean, truth);
    EXPECT_LT(a_raw, 0.8) << "seed " << seed;
    EXPECT_GE(a_clean, 0.95) << "seed " << seed;
  }
}

TEST(Synth, DurationModels) {
  SynthConfig c;
  c.n_train_videos = 4;
  c.n_test_videos = 1;
  auto ds = generate(c);
  ASSERT_FALSE(ds.truth.events.empty());
  for (const auto& ev : ds.truth.events) {
    EXPECT_GE(ev.duration, 6u);
    EXPECT_LE(ev.duration, 18u);
  }
  c.duration_model = DurationModel::Geometric;
  EXPECT_GT(expected_contamination(c), 0.0);
  EXPECT_EQ(parse_duration_model(to_string(DurationModel::Fixed)), DurationModel::Fixed);
  EXPECT_THROW(parse_duration_model("poisson"), InvalidInput);
}
