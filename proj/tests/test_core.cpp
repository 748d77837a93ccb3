#include "cknn/core.hpp"

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

using namespace cknn;

TEST(SelectTopFraction, QuartileOfDistinctIntegers) {
  std::vector<double> s(100);
  for (int i = 0; i < 100; ++i) s[i] = i + 1;
  auto removed = select_top_fraction(s, 25);
  ASSERT_EQ(removed.size(), 25u);
  for (std::size_t i = 0; i < removed.size(); ++i) EXPECT_EQ(s[removed[i]], 76.0 + i);
}

TEST(SelectTopFraction, TauZeroRemovesNothing) {
  std::vector<double> s{3, 1, 2};
  EXPECT_TRUE(select_top_fraction(s, 0).empty());
  EXPECT_TRUE(select_top_fraction(std::vector<double>{}, 50).empty());
}

TEST(SelectTopFraction, MatchesSortOracle) {
  std::mt19937_64 g(7);
  std::uniform_real_distribution<double> u;
  std::vector<double> s(200);
  for (auto& v : s) v = u(g);
  auto removed = select_top_fraction(s, 15);
  EXPECT_EQ(removed.size(), 30u);
  EXPECT_EQ(removed, oracle::top_fraction(s, 15));
}

TEST(SelectTopFraction, TiesRemoveLaterIndexFirst) {
  std::vector<double> s{1, 5, 5, 5, 0};
  auto removed = select_top_fraction(s, 40);  // 2 of 5
  EXPECT_EQ(removed, (std::vector<std::size_t>{2, 3}));
}

TEST(SelectTopFraction, ExactCountAndNesting) {
  std::mt19937_64 g(11);
  for (std::size_t n : {0u, 1u, 7u, 99u, 100u, 101u, 333u}) {
    std::vector<double> s(n);
    for (auto& v : s) v = static_cast<double>(g() % 17);  // many ties
    std::vector<std::size_t> prev;
    for (double tau : {0.0, 0.5, 3.0, 10.0, 25.0, 33.3, 50.0, 99.9, 100.0}) {
      auto r = select_top_fraction(s, tau);
      EXPECT_EQ(r.size(), static_cast<std::size_t>(std::floor(tau * n / 100.0 + 1e-9)));
      EXPECT_TRUE(std::includes(r.begin(), r.end(), prev.begin(), prev.end()));
      prev = r;
    }
  }
}

TEST(SelectTopFraction, TiePermutationKeepsSurvivingValues) {
  std::vector<double> a{4, 4, 4, 1, 2, 9, 9, 3};
  std::vector<double> b{9, 1, 4, 3, 4, 2, 9, 4};
  auto survivors = [](const std::vector<double>& s) {
    auto r = select_top_fraction(s, 50);
    std::multiset<double> out(s.begin(), s.end());
    for (auto i : r) out.erase(out.find(s[i]));
    return out;
  };
  EXPECT_EQ(survivors(a), survivors(b));
}

TEST(SelectTopFraction, RejectsNaNAndBadTau) {
  std::vector<double> s{1, std::numeric_limits<double>::quiet_NaN()};
  EXPECT_THROW(select_top_fraction(s, 10), InvalidInput);
  EXPECT_THROW(select_top_fraction(std::vector<double>{1}, 101), InvalidInput);
  EXPECT_THROW(select_top_fraction(std::vector<double>{1}, -1), InvalidInput);
}

TEST(Hyperparams, DefaultsAndValidation) {
  Hyperparams hp;
  EXPECT_EQ(hp.k, 4u);
  EXPECT_EQ(hp.n_components, 8u);
  EXPECT_DOUBLE_EQ(hp.tau, 25.0);
  EXPECT_DOUBLE_EQ(hp.p, 1.0);
  EXPECT_DOUBLE_EQ(hp.smoothing_sigma, 5.0);
  EXPECT_NO_THROW(hp.validate());
  auto bad = hp;
  bad.p = 0;
  EXPECT_THROW(bad.validate(), InvalidInput);
  bad = hp;
  bad.k = 0;
  EXPECT_THROW(bad.validate(), InvalidInput);
  bad = hp;
  bad.tau = 100.5;
  EXPECT_THROW(bad.validate(), InvalidInput);
}

TEST(Rng, DeterministicAndSplitIndependent) {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.engine()(), b.engine()());
  Rng c(42);
  c.engine()();  // consuming the parent does not move its children
  EXPECT_EQ(Rng(42).split("x").engine()(), c.split("x").engine()());
  EXPECT_NE(Rng(42).split("x").engine()(), Rng(42).split("y").engine()());
}

TEST(Rng, SampleWithoutReplacementIsSortedAndDistinct) {
  Rng r(3);
  auto s = r.sample_without_replacement(50, 20);
  ASSERT_EQ(s.size(), 20u);
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
  EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()).size(), 20u);
  EXPECT_LT(s.back(), 50u);
  EXPECT_THROW(r.sample_without_replacement(3, 4), InvalidInput);
}

TEST(Rng, GeometricSupportAndMean) {
  Rng r(5);
  double sum = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    auto v = r.geometric(12.0);
    ASSERT_GE(v, 1u);
    sum += static_cast<double>(v);
  }
  EXPECT_NEAR(sum / n, 12.0, 0.5);
}

class ManifestValidation : public ::testing::Test {
 protected:
  DatasetManifest base() {
    DatasetManifest m;
    m.d_app = 2;
    m.d_mot = 1;
    m.videos.push_back({"a", 3, std::nullopt});
    m.objects.push_back({"a", 0, 0, std::nullopt, {1, 2}, {3}});
    m.objects.push_back({"a", 2, 0, std::nullopt, {1, 2}, {3}});
    return m;
  }
};

TEST_F(ManifestValidation, AcceptsValid) { EXPECT_NO_THROW(base().validate()); }

TEST_F(ManifestValidation, RejectsEachViolation) {
  auto m = base();
  m.objects[0].app_feature.push_back(1);
  EXPECT_THROW(m.validate(), InvalidInput);

  m = base();
  m.objects[1].mot_feature[0] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(m.validate(), InvalidInput);

  m = base();
  m.objects[1].frame_idx = 0;
  EXPECT_THROW(m.validate(), InvalidInput);  // duplicate key

  m = base();
  m.objects[1].frame_idx = 3;
  EXPECT_THROW(m.validate(), InvalidInput);  // frame out of range

  m = base();
  m.objects[1].video_id = "zzz";
  EXPECT_THROW(m.validate(), InvalidInput);

  m = base();
  m.videos[0].labels = std::vector<std::uint8_t>{0, 1};
  EXPECT_THROW(m.validate(), InvalidInput);  // wrong label length

  m = base();
  m.videos[0].labels = std::vector<std::uint8_t>{0, 1, 0};
  m.videos.push_back({"b", 2, std::nullopt});
  EXPECT_THROW(m.validate(), InvalidInput);  // labels on some videos only
}

TEST_F(ManifestValidation, TrainingViewDropsLabels) {
  auto m = base();
  m.videos[0].labels = std::vector<std::uint8_t>{0, 1, 0};
  auto v = m.training_view();
  EXPECT_EQ(v.objects.size(), 2u);
  EXPECT_EQ(v.videos.size(), 1u);
  EXPECT_EQ(v.videos[0].frame_count, 3u);
}

TEST(StackFeatures, CopiesRowsInOrder) {
  std::vector<ObjectRecord> objs{{"a", 0, 0, std::nullopt, {1, 2}, {3}},
                                 {"a", 1, 0, std::nullopt, {4, 5}, {6}}};
  auto app = stack_features(objs, Modality::App, 2);
  auto mot = stack_features(objs, Modality::Mot, 1);
  EXPECT_EQ(app(1, 0), 4.0);
  EXPECT_EQ(mot(1, 0), 6.0);
  EXPECT_THROW(stack_features(objs, Modality::App, 3), InvalidInput);
}
