#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "afdcd/checks.hpp"
#include "afdcd/errors.hpp"
#include "afdcd/metrics.hpp"
#include "afdcd/rng.hpp"

using namespace afdcd;

namespace {

// Independent enumeration: every unordered pair of (pixel, group) reps inside each window.
std::vector<double> enumerate_window_pairs(const FeatureMap& f, std::size_t w, std::size_t m) {
  const std::size_t len = f.channels() / m;
  std::vector<double> out;
  for (std::size_t wy = 0; wy < f.height(); wy += w)
    for (std::size_t wx = 0; wx < f.width(); wx += w) {
      std::vector<const double*> reps;
      for (std::size_t y = wy; y < wy + w; ++y)
        for (std::size_t x = wx; x < wx + w; ++x)
          for (std::size_t k = 0; k < m; ++k) reps.push_back(f.pixel(y, x) + k * len);
      for (std::size_t a = 0; a < reps.size(); ++a)
        for (std::size_t b = a + 1; b < reps.size(); ++b) {
          long double s = 0;
          for (std::size_t e = 0; e < len; ++e) s += static_cast<long double>(reps[a][e] - reps[b][e]) * (reps[a][e] - reps[b][e]);
          out.push_back(static_cast<double>(s));
        }
    }
  return out;
}

long double mean_of(const std::vector<double>& v) {
  long double s = 0;
  for (double d : v) s += d;
  return s / v.size();
}

}  // namespace

TEST(Histogram, BinsCountsAndMoments) {
  const std::vector<double> d{0.0, 1.0, 2.0, 3.0, 4.0};
  const auto h = make_histogram(d);
  EXPECT_EQ(h.sample_count, 5u);
  EXPECT_EQ(h.bin_edges.size(), kHistogramBins + 1);
  EXPECT_EQ(h.bin_edges.back(), 4.0);
  EXPECT_EQ(std::accumulate(h.counts.begin(), h.counts.end(), std::uint64_t{0}), 5u);
  EXPECT_EQ(h.counts.front(), 1u);
  EXPECT_EQ(h.counts.back(), 1u);
  EXPECT_DOUBLE_EQ(h.mean, 2.0);
  EXPECT_DOUBLE_EQ(h.variance, 2.0);
}

TEST(DefaultSampleCount, FullPopulationUpToAMillion) {
  EXPECT_EQ(default_sample_count(1'000'000), 1'000'000u);
  EXPECT_EQ(default_sample_count(1'000'001), 10'000u);
}

TEST(TsDistance, IdenticalMapsGiveZero) {
  Rng rng(1);
  const auto f = random_feature_map(4, 4, 8, rng);
  const auto h = ts_distance_stats(f, f, 4, 64, rng);
  EXPECT_EQ(h.mean, 0.0);
  EXPECT_EQ(h.variance, 0.0);
  EXPECT_EQ(h.sample_count, 64u);
}

TEST(TsDistance, ConstantGroupOffsetGivesSquaredNorm) {
  Rng rng(2);
  const auto f = random_feature_map(4, 4, 4, rng);
  const std::vector<double> c{0.5, -1.5};
  FeatureMap g = f;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += c[i % 2];
  for (double d : ts_distances(g, f, 2)) EXPECT_NEAR(d, 2.5, 1e-14);
  const auto h = ts_distance_stats(g, f, 2, 20, rng);
  EXPECT_NEAR(h.mean, 2.5, 1e-14);
  EXPECT_NEAR(h.variance, 0.0, 1e-14);
}

TEST(TsDistance, FullPopulationMatchesEnumerationAndSampleIsCloseToIt) {
  Rng rng(3);
  const auto s = random_feature_map(16, 16, 8, rng);
  const auto t = random_feature_map(16, 16, 8, rng);
  const auto all = ts_distances(s, t, 4);
  ASSERT_EQ(all.size(), 16u * 16 * 4);
  Rng r(0);
  const auto full = ts_distance_stats(s, t, 4, all.size(), r);
  EXPECT_NEAR(full.mean, static_cast<double>(mean_of(all)), 1e-12);
  const auto sub = ts_distance_stats(s, t, 4, 300, r);
  EXPECT_NEAR(sub.mean, full.mean, 4 * std::sqrt(full.variance / 300));
  EXPECT_THROW(ts_distance_stats(s, t, 4, all.size() + 1, r), ParameterError);
  EXPECT_THROW(ts_distance_stats(s, t, 3, 1, r), ShapeError);
}

TEST(TsDistance, SamplingIsSeeded) {
  Rng rng(4);
  const auto s = random_feature_map(8, 8, 4, rng);
  const auto t = random_feature_map(8, 8, 4, rng);
  Rng a(7), b(7);
  const auto ha = ts_distance_stats(s, t, 2, 50, a), hb = ts_distance_stats(s, t, 2, 50, b);
  EXPECT_EQ(ha.mean, hb.mean);
  EXPECT_EQ(ha.counts, hb.counts);
}

TEST(SelfSimilarity, ConstantMapGivesZero) {
  Rng rng(5);
  const auto h = self_similarity_stats(FeatureMap(8, 8, 4, 1.25), 4, 2, 100, rng);
  EXPECT_EQ(h.mean, 0.0);
  EXPECT_EQ(h.variance, 0.0);
}

TEST(SelfSimilarity, CheckerboardIsTwoPoint) {
  FeatureMap f(4, 4, 2);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) {
      const double v = (x + y) % 2 == 0 ? 0.0 : 1.0;
      f.at(y, x, 0) = v;
      f.at(y, x, 1) = 2 * v;
    }
  const auto d = self_similarity_distances(f, 4, 1);
  ASSERT_EQ(d.size(), 120u);
  std::size_t zeros = 0;
  for (double v : d) {
    EXPECT_TRUE(v == 0.0 || v == 5.0);
    zeros += v == 0.0;
  }
  EXPECT_EQ(zeros, 2u * (8 * 7 / 2));
}

TEST(SelfSimilarity, SampledFullPopulationEqualsEnumeration) {
  Rng rng(6);
  const auto f = random_feature_map(16, 16, 8, rng);
  const auto oracle = enumerate_window_pairs(f, 4, 4);
  ASSERT_EQ(self_similarity_population(f, 4, 4), oracle.size());
  const auto listed = self_similarity_distances(f, 4, 4);
  ASSERT_EQ(listed.size(), oracle.size());
  for (std::size_t i = 0; i < listed.size(); ++i) ASSERT_NEAR(listed[i], oracle[i], 1e-12);

  Rng r(1);
  const auto full = self_similarity_stats(f, 4, 4, oracle.size(), r);
  const long double mu = mean_of(oracle);
  long double var = 0;
  for (double d : oracle) var += (d - mu) * (d - mu);
  var /= oracle.size();
  EXPECT_NEAR(full.mean, static_cast<double>(mu), 1e-12);
  EXPECT_NEAR(full.variance, static_cast<double>(var), 1e-12);
  EXPECT_EQ(full.counts, make_histogram(oracle).counts);

  const auto sub = self_similarity_stats(f, 4, 4, 2000, r);
  EXPECT_NEAR(sub.mean, full.mean, 4 * std::sqrt(full.variance / 2000));
}

TEST(SelfSimilarity, DivisibilityErrors) {
  Rng rng(7);
  EXPECT_THROW(self_similarity_stats(FeatureMap(6, 8, 4), 4, 2, 1, rng), ShapeError);
  EXPECT_THROW(self_similarity_stats(FeatureMap(8, 8, 4), 4, 3, 1, rng), ShapeError);
}

TEST(HistogramCsv, Format) {
  const std::vector<double> d{1.0, 3.0};
  std::ostringstream out;
  write_histogram_csv(out, make_histogram(d));
  const std::string s = out.str();
  EXPECT_EQ(s.rfind("bin_lo,bin_hi,count\n0,0.046875,0\n", 0), 0u);
  EXPECT_NE(s.find("\nmean,variance,n\n2,1,2\n"), std::string::npos);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), static_cast<long>(kHistogramBins + 3));
}

TEST(Miou, HandEnumeratedExample) {
  const LabelMap pred(2, 2, std::vector<int>{0, 0, 1, 1});
  const LabelMap label(2, 2, std::vector<int>{0, 1, 1, 1});
  const auto r = miou(pred, label, 2);
  EXPECT_DOUBLE_EQ(*r.per_class[0], 0.5);
  EXPECT_DOUBLE_EQ(*r.per_class[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.miou, 7.0 / 12.0);
}

TEST(Miou, PerfectDisjointAndAbsentClasses) {
  const LabelMap label(2, 2, std::vector<int>{0, 1, 1, 0});
  EXPECT_EQ(miou(label, label, 4).miou, 1.0);
  const auto r = miou(label, label, 4);
  EXPECT_FALSE(r.per_class[2].has_value());

  const LabelMap a(1, 2, std::vector<int>{1, 0}), b(1, 2, std::vector<int>{2, 0});
  const auto d = miou(a, b, 3);
  EXPECT_EQ(*d.per_class[1], 0.0);
  EXPECT_EQ(*d.per_class[2], 0.0);
  EXPECT_EQ(*d.per_class[0], 1.0);
}

TEST(Miou, IgnoreIndexAndErrors) {
  const LabelMap pred(1, 3, std::vector<int>{0, 1, 1});
  const LabelMap label(1, 3, std::vector<int>{0, 1, kIgnoreLabel});
  EXPECT_EQ(miou(pred, label, 2).miou, 1.0);
  EXPECT_THROW(miou(LabelMap(1, 1, 0), LabelMap(1, 1, kIgnoreLabel), 2), UndefinedResultError);
  EXPECT_THROW(miou(LabelMap(1, 1, 5), LabelMap(1, 1, 0), 2), ParameterError);
  EXPECT_THROW(miou(LabelMap(1, 2, 0), LabelMap(1, 1, 0), 2), ShapeError);
}

TEST(Miou, SymmetricUnderRelabeling) {
  Rng rng(8);
  std::vector<int> p(64), l(64);
  for (int i = 0; i < 64; ++i) {
    p[i] = static_cast<int>(rng.below(4));
    l[i] = static_cast<int>(rng.below(4));
  }
  const std::vector<int> perm{2, 0, 3, 1};
  std::vector<int> pp(64), lp(64);
  for (int i = 0; i < 64; ++i) {
    pp[i] = perm[p[i]];
    lp[i] = perm[l[i]];
  }
  const auto a = miou(LabelMap(8, 8, p), LabelMap(8, 8, l), 4);
  const auto b = miou(LabelMap(8, 8, pp), LabelMap(8, 8, lp), 4);
  EXPECT_NEAR(a.miou, b.miou, 1e-15);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(*a.per_class[k], *b.per_class[perm[k]]);
}

TEST(ConfusionMatrix, AccumulatesAcrossImages) {
  ConfusionMatrix cm(2);
  cm.add(LabelMap(1, 2, std::vector<int>{0, 1}), LabelMap(1, 2, std::vector<int>{0, 0}));
  cm.add(LabelMap(1, 1, 1), LabelMap(1, 1, 1));
  EXPECT_EQ(cm.count(0, 0), 1u);
  EXPECT_EQ(cm.count(0, 1), 1u);
  EXPECT_EQ(cm.count(1, 1), 1u);
  EXPECT_DOUBLE_EQ(cm.result().miou, (0.5 + 0.5) / 2);
}
