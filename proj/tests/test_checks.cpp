#include <sstream>

#include <gtest/gtest.h>

#include "afdcd/checks.hpp"
#include "afdcd/rng.hpp"

using namespace afdcd;

TEST(GradSuite, PassesOnFreshSeed) {
  const auto results = run_grad_checks(4, 1234);
  EXPECT_EQ(results.size(), 16u);
  for (const auto& r : results) EXPECT_TRUE(r.passed()) << r.name << " worst=" << r.worst;
}

TEST(RandomOmniInstance, RespectsSizeAndDivisibility) {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    for (std::size_t q : {1u, 2u}) {
      const auto inst = random_omni_instance(rng, DistanceKind::L1, q);
      const auto& s = inst.student;
      ASSERT_LE(s.height(), 8u);
      ASSERT_LE(s.width(), 8u);
      ASSERT_LE(s.channels(), 16u);
      ASSERT_TRUE(s.congruent(inst.teacher));
      ASSERT_EQ(inst.cfg.pool_factor, q);
      ASSERT_EQ((s.height() / q) % inst.cfg.patch_side, 0u);
      ASSERT_EQ((s.width() / q) % inst.cfg.patch_side, 0u);
      ASSERT_EQ(s.channels() % inst.cfg.groups, 0u);
      ASSERT_GE(inst.cfg.patch_side * inst.cfg.patch_side * inst.cfg.groups, 2u);
    }
  }
}

TEST(ReportChecks, OneLinePerResultAndOverallVerdict) {
  std::ostringstream out;
  std::vector<CheckResult> results{{"a", 3, 1e-13, 1e-10}, {"b", 3, 0.5, 1e-5}};
  EXPECT_FALSE(report_checks(out, results));
  const std::string s = out.str();
  EXPECT_EQ(s.rfind("PASS a", 0), 0u);
  EXPECT_NE(s.find("\nFAIL b"), std::string::npos);
  EXPECT_FALSE((CheckResult{"empty", 0, 0.0, 1.0}.passed()));
}
