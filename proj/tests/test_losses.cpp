#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "afdcd/checks.hpp"
#include "afdcd/errors.hpp"
#include "afdcd/losses.hpp"
#include "afdcd/oracle.hpp"
#include "afdcd/partition.hpp"
#include "afdcd/rng.hpp"

using namespace afdcd;

namespace {

constexpr DistanceKind kKinds[] = {DistanceKind::L2Squared, DistanceKind::L1, DistanceKind::Cosine};

ContrastConfig oc_config(std::size_t n, std::size_t m, std::size_t q, double tau,
                         DistanceKind kind = DistanceKind::L2Squared) {
  ContrastConfig cfg;
  cfg.patch_side = n;
  cfg.groups = m;
  cfg.pool_factor = q;
  cfg.tau = tau;
  cfg.distance = kind;
  return cfg;
}

// Adds vector c (length C/m) to every channel group of every pixel.
FeatureMap add_group_constant(const FeatureMap& f, std::size_t m, const std::vector<double>& c) {
  FeatureMap out = f;
  const std::size_t len = f.channels() / m;
  for (std::size_t p = 0; p < f.pixels(); ++p)
    for (std::size_t ch = 0; ch < f.channels(); ++ch) out[p * f.channels() + ch] += c[ch % len];
  return out;
}

FeatureMap scaled(const FeatureMap& f, double s) {
  FeatureMap out = f;
  for (double& v : out.values()) v *= s;
  return out;
}

}  // namespace

TEST(Distance, Examples) {
  const std::vector<double> a{0, 0}, b{3, 4}, e1{1, 0}, e2{0, 1};
  EXPECT_EQ(distance(a, b, DistanceKind::L2Squared), 25.0);
  EXPECT_EQ(distance(a, b, DistanceKind::L1), 7.0);
  EXPECT_DOUBLE_EQ(distance(e1, e2, DistanceKind::Cosine), 1.0);
  EXPECT_NEAR(distance(b, b, DistanceKind::Cosine), 0.0, 1e-15);
}

TEST(Distance, Errors) {
  const std::vector<double> zero{0, 0}, b{3, 4}, c{1};
  EXPECT_THROW(distance(zero, b, DistanceKind::Cosine), DegenerateInputError);
  EXPECT_THROW(distance(b, c, DistanceKind::L1), ShapeError);
  EXPECT_EQ(parse_distance_kind("cosine"), DistanceKind::Cosine);
  EXPECT_EQ(to_string(DistanceKind::L1), "l1");
  EXPECT_THROW(parse_distance_kind("l3"), ParameterError);
}

TEST(LFd, Examples) {
  FeatureMap t(2, 2, 2, 0.0), s(2, 2, 2, 1.0);
  const auto r = l_fd(t, s);
  EXPECT_EQ(r.loss, 8.0);
  for (double g : r.grad.values()) EXPECT_EQ(g, 2.0);
  const auto z = l_fd(s, s);
  EXPECT_EQ(z.loss, 0.0);
  for (double g : z.grad.values()) EXPECT_EQ(g, 0.0);
  EXPECT_THROW(l_fd(FeatureMap(2, 2, 1), FeatureMap(2, 2, 2)), ShapeError);
}

TEST(ContrastSample, Examples) {
  const std::vector<double> seven(7, 0.0);
  EXPECT_NEAR(contrast_sample(0.0, seven, 1.0).loss, std::log(7.0), 1e-15);
  const std::vector<double> one{2.0};
  EXPECT_NEAR(contrast_sample(0.0, one, 1.0).loss, -2.0, 1e-15);
  const std::vector<double> two{2.0, 3.0};
  EXPECT_NEAR(contrast_sample(1.0, two, 0.5).loss, 2.0 + std::log(std::exp(-4.0) + std::exp(-6.0)), 1e-14);
}

TEST(ContrastSample, StableForLargeDistances) {
  const std::vector<double> far{1e4, 1e4 + 1.0};
  const auto r = contrast_sample(0.0, far, 0.07);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_NEAR(r.loss, -1e4 / 0.07 + std::log1p(std::exp(-1.0 / 0.07)), 1e-6);
}

TEST(ContrastSample, GradientSignsAreMonotone) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> negs(1 + rng.below(10));
    for (double& d : negs) d = rng.uniform(0, 3);
    const double tau = rng.uniform(0.05, 2);
    for (bool incl : {false, true}) {
      const auto r = contrast_sample(rng.uniform(0, 3), negs, tau, incl);
      EXPECT_GT(r.grad_pos, 0.0);
      for (double g : r.grad_negs) EXPECT_LT(g, 0.0);
    }
  }
}

TEST(ContrastSample, IncludingPositiveMakesLossNonNegative) {
  Rng rng(2);
  bool saw_negative = false;
  for (int t = 0; t < 200; ++t) {
    std::vector<double> negs(1 + rng.below(5));
    for (double& d : negs) d = rng.uniform(0, 3);
    const double pos = rng.uniform(0, 3);
    EXPECT_GE(contrast_sample(pos, negs, 0.5, true).loss, 0.0);
    saw_negative |= contrast_sample(pos, negs, 0.5, false).loss < 0.0;
  }
  EXPECT_TRUE(saw_negative);
}

TEST(ContrastSample, Errors) {
  EXPECT_THROW(contrast_sample(0.0, {}, 1.0), ParameterError);
  const std::vector<double> one{1.0};
  EXPECT_THROW(contrast_sample(0.0, one, 0.0), ParameterError);
}

TEST(ConstantMaps, ClosedForms) {
  EXPECT_NEAR(loss_oc(FeatureMap(4, 4, 4, 1.0), FeatureMap(4, 4, 4, 1.0), oc_config(2, 2, 1, 0.07)).loss,
              std::log(7.0), 1e-12);
  EXPECT_NEAR(loss_oc(FeatureMap(8, 8, 16, 0.3), FeatureMap(8, 8, 16, 0.3), oc_config(4, 16, 1, 0.07)).loss,
              std::log(255.0), 1e-12);
  EXPECT_NEAR(loss_oc(FeatureMap(16, 16, 16, 0.3), FeatureMap(16, 16, 16, 0.3), oc_config(4, 16, 4, 0.07)).loss,
              std::log(255.0), 1e-12);
  EXPECT_NEAR(loss_cc(FeatureMap(2, 2, 32, 2.0), FeatureMap(2, 2, 32, 2.0), 16, 0.07).loss, std::log(15.0), 1e-12);
  EXPECT_NEAR(loss_sc(FeatureMap(2, 2, 3, 1.0), FeatureMap(2, 2, 3, 1.0), 0.07).loss, std::log(3.0), 1e-12);
}

TEST(LossSc, SingleNegativeGivesMinusDOverTau) {
  FeatureMap t(1, 2, 2, std::vector<double>{0, 0, 1, 2});
  const double tau = 0.5;
  const double d = 5.0;
  EXPECT_NEAR(loss_sc(t, t, tau).loss, -d / tau, 1e-12);
}

TEST(LossCc, TwoGroupsClosedForm) {
  Rng rng(3);
  const auto s = random_feature_map(2, 3, 4, rng);
  const auto t = random_feature_map(2, 3, 4, rng);
  const double tau = 0.3;
  double expected = 0.0;
  for (std::size_t p = 0; p < s.pixels(); ++p) {
    const double* sp = s.values().data() + p * 4;
    const double* tp = t.values().data() + p * 4;
    for (std::size_t k = 0; k < 2; ++k) {
      const std::span<const double> a(sp + 2 * k, 2), pos(tp + 2 * k, 2), neg(tp + 2 * (1 - k), 2);
      expected += (distance(a, pos, DistanceKind::L2Squared) - distance(a, neg, DistanceKind::L2Squared)) / tau;
    }
  }
  EXPECT_NEAR(loss_cc(s, t, 2, tau).loss, expected / 12.0, 1e-12);
}

TEST(LossOc, ReducesToSpatialAndChannelContrast) {
  Rng rng(4);
  for (auto kind : kKinds) {
    const auto s = random_feature_map(4, 4, 8, rng, 0.1, 1.0);
    const auto t = random_feature_map(4, 4, 8, rng, 0.1, 1.0);
    const auto sc = loss_sc(s, t, 0.2, kind);
    const auto oc_sc = loss_oc(s, t, oc_config(4, 1, 1, 0.2, kind));
    EXPECT_NEAR(oc_sc.loss, sc.loss, 1e-12);
    EXPECT_LT(oracle::max_relative_error(oc_sc.grad.values(), sc.grad.values()), 1e-12);
    const auto cc = loss_cc(s, t, 4, 0.2, kind);
    const auto oc_cc = loss_oc(s, t, oc_config(1, 4, 1, 0.2, kind));
    EXPECT_NEAR(oc_cc.loss, cc.loss, 1e-12);
    EXPECT_LT(oracle::max_relative_error(oc_cc.grad.values(), cc.grad.values()), 1e-12);
  }
}

TEST(LossOc, MatchesBruteForceOnDefaultExample) {
  Rng rng(5);
  const auto s = random_feature_map(8, 8, 8, rng);
  const auto t = random_feature_map(8, 8, 8, rng);
  const auto cfg = oc_config(2, 4, 1, 0.07);
  EXPECT_NEAR(loss_oc(s, t, cfg).loss, oracle::oc_bruteforce(s, t, cfg), 1e-12);
}

TEST(Invariance, ShiftByConstantGroupVector) {
  Rng rng(6);
  for (auto kind : {DistanceKind::L2Squared, DistanceKind::L1}) {
    for (std::size_t q : {1u, 2u}) {
      const auto s = random_feature_map(8, 8, 8, rng);
      const auto t = random_feature_map(8, 8, 8, rng);
      std::vector<double> c(2);
      for (double& v : c) v = rng.uniform(-3, 3);
      const auto cfg = oc_config(2, 4, q, 0.5, kind);
      EXPECT_NEAR(loss_oc(add_group_constant(s, 4, c), add_group_constant(t, 4, c), cfg).loss,
                  loss_oc(s, t, cfg).loss, 1e-9);
      std::vector<double> cp(8);
      for (double& v : cp) v = rng.uniform(-3, 3);
      EXPECT_NEAR(loss_sc(add_group_constant(s, 1, cp), add_group_constant(t, 1, cp), 0.5, kind).loss,
                  loss_sc(s, t, 0.5, kind).loss, 1e-9);
      EXPECT_NEAR(loss_cc(add_group_constant(s, 4, c), add_group_constant(t, 4, c), 4, 0.5, kind).loss,
                  loss_cc(s, t, 4, 0.5, kind).loss, 1e-9);
    }
  }
}

TEST(Invariance, TemperatureScaleIdentity) {
  Rng rng(7);
  const auto s = random_feature_map(8, 8, 8, rng);
  const auto t = random_feature_map(8, 8, 8, rng);
  for (double sc : {0.5, 2.0, 3.7}) {
    const double tau = 0.4;
    EXPECT_NEAR(loss_oc(scaled(s, sc), scaled(t, sc), oc_config(2, 4, 2, tau)).loss,
                loss_oc(s, t, oc_config(2, 4, 2, tau / (sc * sc))).loss, 1e-9);
    EXPECT_NEAR(loss_sc(scaled(s, sc), scaled(t, sc), tau).loss, loss_sc(s, t, tau / (sc * sc)).loss, 1e-9);
    EXPECT_NEAR(loss_cc(scaled(s, sc), scaled(t, sc), 4, tau).loss, loss_cc(s, t, 4, tau / (sc * sc)).loss, 1e-9);
  }
}

TEST(Invariance, CosineAdditiveConstantCancels) {
  // Recompute loss_sc with d = -cos instead of 1 - cos.
  Rng rng(8);
  const auto s = random_feature_map(3, 3, 4, rng, 0.1, 1.0);
  const auto t = random_feature_map(3, 3, 4, rng, 0.1, 1.0);
  const double tau = 0.2;
  double sum = 0.0;
  for (std::size_t i = 0; i < s.pixels(); ++i) {
    const std::span<const double> si(s.values().data() + 4 * i, 4);
    double pos = 0.0;
    std::vector<double> negs;
    for (std::size_t j = 0; j < t.pixels(); ++j) {
      const std::span<const double> tj(t.values().data() + 4 * j, 4);
      const double d = distance(si, tj, DistanceKind::Cosine) - 1.0;
      if (i == j) pos = d;
      else negs.push_back(d);
    }
    sum += contrast_sample(pos, negs, tau).loss;
  }
  EXPECT_NEAR(sum / 9.0, loss_sc(s, t, tau, DistanceKind::Cosine).loss, 1e-9);
}

TEST(Invariance, PatchPermutation) {
  Rng rng(9);
  const auto s = random_feature_map(8, 8, 8, rng);
  const auto t = random_feature_map(8, 8, 8, rng);
  const auto cfg = oc_config(2, 4, 1, 0.3);
  auto ss = split_patches(s, 2, 2), ts = split_patches(t, 2, 2);
  std::vector<std::size_t> order(ss.patches.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), std::mt19937_64(3));
  std::vector<FeatureMap> sp, tp;
  for (std::size_t i : order) {
    sp.push_back(ss.patches[i]);
    tp.push_back(ts.patches[i]);
  }
  const auto s2 = assemble_patches(ss.grid, sp), t2 = assemble_patches(ts.grid, tp);
  EXPECT_NEAR(loss_oc(s2, t2, cfg).loss, loss_oc(s, t, cfg).loss, 1e-12);

  // Same blocks fed to the accumulator in reverse order.
  auto layout = omni_layout(8, 8, 8, 2, 2, 4);
  std::vector<double> g1(s.size()), g2(s.size());
  const double a = contrast_blocks(s.values(), t.values(), layout, 0.3, DistanceKind::L2Squared, false, g1);
  auto reversed = layout;
  for (std::size_t b = 0; b < layout.blocks; ++b)
    for (std::size_t m = 0; m < layout.members; ++m)
      reversed.offsets[b * layout.members + m] = layout.offset(layout.blocks - 1 - b, m);
  const double b = contrast_blocks(s.values(), t.values(), reversed, 0.3, DistanceKind::L2Squared, false, g2);
  EXPECT_NEAR(a, b, 1e-12 * std::abs(a));
  EXPECT_LT(oracle::max_relative_error(g1, g2), 1e-12);
}

TEST(LossOc, DescentFromTeacherDoesNotMovePositivesFirstOrder) {
  // At Fs = Ft every positive distance is zero with zero gradient, so the
  // loss gradient comes from negatives only and a descent step lowers the loss.
  Rng rng(10);
  const auto t = random_feature_map(4, 4, 8, rng);
  const auto cfg = oc_config(2, 4, 1, 0.5);
  const auto r = loss_oc(t, t, cfg);
  FeatureMap stepped = t;
  for (std::size_t i = 0; i < t.size(); ++i) stepped[i] -= 1e-3 * r.grad[i];
  EXPECT_LT(loss_oc(stepped, t, cfg).loss, r.loss);
  const auto pos = l_fd(t, stepped).loss;
  double gnorm = 0.0;
  for (double g : r.grad.values()) gnorm += g * g;
  EXPECT_NEAR(pos, 1e-6 * gnorm, 1e-15);
}

TEST(LossOc, IncludePositiveGivesNonNegativeLoss) {
  Rng rng(11);
  for (auto kind : kKinds) {
    const auto s = random_feature_map(4, 4, 4, rng, 0.1, 1.0);
    auto cfg = oc_config(2, 2, 1, 0.1, kind);
    cfg.include_positive_in_denominator = true;
    EXPECT_GE(loss_oc(s, s, cfg).loss, 0.0);
    EXPECT_GE(loss_oc(s, random_feature_map(4, 4, 4, rng, 0.1, 1.0), cfg).loss, 0.0);
  }
}

TEST(LossOc, ParallelMatchesSerialReference) {
  Rng rng(12);
  for (auto kind : kKinds) {
    const auto s = random_feature_map(16, 16, 16, rng, 0.1, 1.0);
    const auto t = random_feature_map(16, 16, 16, rng, 0.1, 1.0);
    const auto cfg = oc_config(4, 4, 2, 0.07, kind);
    const auto a = loss_oc(s, t, cfg), b = reference::loss_oc(s, t, cfg);
    EXPECT_NEAR(a.loss, b.loss, 1e-12);
    for (std::size_t i = 0; i < a.grad.size(); ++i) EXPECT_NEAR(a.grad[i], b.grad[i], 1e-12);
  }
}

TEST(LossOc, CosineZeroRepresentationIsDegenerate) {
  FeatureMap s(2, 2, 4, 1.0);
  FeatureMap t = s;
  t.at(1, 1, 2) = 0.0;
  t.at(1, 1, 3) = 0.0;
  EXPECT_THROW(loss_oc(s, t, oc_config(2, 2, 1, 0.1, DistanceKind::Cosine)), DegenerateInputError);
  EXPECT_NO_THROW(loss_oc(s, t, oc_config(2, 2, 1, 0.1, DistanceKind::L2Squared)));
}

TEST(ContrastLosses, Errors) {
  FeatureMap a(4, 4, 4), b(4, 4, 2), one(1, 1, 4);
  EXPECT_THROW(loss_sc(a, b, 0.1), ShapeError);
  EXPECT_THROW(loss_sc(one, one, 0.1), ParameterError);
  EXPECT_THROW(loss_cc(a, a, 1, 0.1), ParameterError);
  EXPECT_THROW(loss_cc(a, a, 3, 0.1), ShapeError);
  EXPECT_THROW(loss_oc(a, a, oc_config(1, 1, 1, 0.1)), ParameterError);
  EXPECT_THROW(loss_oc(a, a, oc_config(3, 2, 1, 0.1)), ShapeError);
  EXPECT_THROW(loss_oc(a, a, oc_config(2, 2, 4, 0.1)), ShapeError);
  EXPECT_THROW(loss_oc(a, a, oc_config(2, 2, 1, -1.0)), ParameterError);
}

TEST(LossKd, IdenticalLogitsGiveZero) {
  Rng rng(13);
  const auto z = random_feature_map(3, 3, 5, rng, -3, 3);
  const auto r = loss_kd(z, z, 4.0);
  EXPECT_NEAR(r.loss, 0.0, 1e-14);
  for (double g : r.grad.values()) EXPECT_NEAR(g, 0.0, 1e-15);
}

TEST(LossKd, DecreasesAsLogitsConverge) {
  Rng rng(14);
  const auto t = random_feature_map(3, 3, 5, rng, -3, 3);
  const auto dir = random_feature_map(3, 3, 5, rng, -1, 1);
  double prev = std::numeric_limits<double>::infinity();
  for (double a : {2.0, 1.0, 0.5, 0.25, 0.1}) {
    FeatureMap s = t;
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += a * dir[i];
    const double l = loss_kd(s, t, 4.0).loss;
    EXPECT_GT(l, 0.0);
    EXPECT_LT(l, prev);
    prev = l;
  }
  EXPECT_THROW(loss_kd(t, t, 0.0), ParameterError);
}

TEST(TotalLoss, Examples) {
  const LossWeights defaults;
  EXPECT_EQ(defaults.lambda1, 1.0);
  EXPECT_EQ(defaults.lambda2, 2e-5);
  EXPECT_EQ(defaults.lambda3, 5e-3);
  EXPECT_EQ(total_loss(1, 1, 1, 1).total, 1 + 1 + 2e-5 + 5e-3);
  EXPECT_EQ(total_loss(0.7, 3, 4, 5, LossWeights{0, 0, 0}).total, 0.7);
  EXPECT_THROW(total_loss(1, 1, 1, 1, LossWeights{1, -1e-9, 0}), ParameterError);
}
