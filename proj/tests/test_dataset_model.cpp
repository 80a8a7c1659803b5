#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "afdcd/checks.hpp"
#include "afdcd/dataset.hpp"
#include "afdcd/errors.hpp"
#include "afdcd/model.hpp"
#include "afdcd/nn.hpp"
#include "afdcd/oracle.hpp"
#include "afdcd/rng.hpp"

using namespace afdcd;

TEST(Dataset, NoiselessRectangleLabelsExactlyItsBox) {
  const ShapeInstance rect{ShapeKind::Rectangle, 1, 2, 3, 4, 5};
  Rng rng(1);
  const auto s = render_sample(12, std::span(&rect, 1), 0.0, rng);
  for (std::size_t y = 0; y < 12; ++y)
    for (std::size_t x = 0; x < 12; ++x) {
      const bool in = y >= 2 && y < 6 && x >= 3 && x < 8;
      EXPECT_EQ(s.label.at(y, x), in ? 1 : 0);
      EXPECT_EQ(s.image.at(y, x, 0), class_color(in ? 1 : 0)[0]);
    }
  EXPECT_EQ(rng.draws(), 0u);
}

TEST(Dataset, ShapesOutsideTheImageAreRejected) {
  const ShapeInstance rect{ShapeKind::Rectangle, 1, 10, 0, 4, 4};
  Rng rng(1);
  EXPECT_THROW(render_sample(12, std::span(&rect, 1), 0.0, rng), GenerationError);
}

TEST(Dataset, DiamondAndCircleStayInsideTheirBox) {
  const ShapeInstance shapes[] = {{ShapeKind::Diamond, 2, 0, 0, 7, 7}, {ShapeKind::Circle, 3, 8, 8, 8, 8}};
  Rng rng(1);
  const auto s = render_sample(16, shapes, 0.0, rng);
  EXPECT_EQ(s.label.at(3, 3), 2);
  EXPECT_EQ(s.label.at(0, 0), 0);
  EXPECT_EQ(s.label.at(12, 12), 3);
  EXPECT_EQ(s.label.at(8, 8), 0);
}

TEST(Dataset, SameSeedIsBitIdentical) {
  ToyDatasetSpec spec;
  spec.train_count = 32;
  spec.val_count = 8;
  Rng a(3), b(3), c(4);
  const auto da = gen_toy_dataset(spec, a), db = gen_toy_dataset(spec, b), dc = gen_toy_dataset(spec, c);
  for (std::size_t i = 0; i < da.train.size(); ++i) {
    EXPECT_EQ(da.train[i].image, db.train[i].image);
    EXPECT_EQ(da.train[i].label, db.train[i].label);
  }
  EXPECT_NE(da.train[0].image, dc.train[0].image);
}

TEST(Dataset, DefaultSpecHasEveryClass) {
  const ToyDatasetSpec spec;
  const auto d = gen_toy_dataset(spec);
  EXPECT_EQ(d.train.size(), 512u);
  EXPECT_EQ(d.val.size(), 128u);
  for (auto n : class_histogram(d.train, spec.num_classes)) EXPECT_GT(n, 0u);
  for (const auto& s : d.train) {
    EXPECT_EQ(s.image.height(), 32u);
    EXPECT_EQ(s.image.channels(), 3u);
  }
}

TEST(Dataset, InvalidSpecs) {
  ToyDatasetSpec spec;
  spec.num_classes = 1;
  EXPECT_THROW(gen_toy_dataset(spec), ParameterError);
  spec = {};
  spec.image_size = 4;
  EXPECT_THROW(gen_toy_dataset(spec), ParameterError);
}

TEST(ToyModel, ShapesAndDeterministicInit) {
  Rng a(5), b(5);
  const ModelSpec spec{3, 4, 32, 4};
  const auto m = ToyModel::create(spec, a);
  EXPECT_EQ(m, ToyModel::create(spec, b));
  EXPECT_EQ(m.feature_channels(), 32u);
  EXPECT_EQ(m.feature_tap(), 3u);
  Rng r(6);
  const auto t = m.forward(random_feature_map(8, 8, 3, r));
  EXPECT_EQ(t.logits.channels(), 4u);
  EXPECT_EQ(t.feature(m.feature_tap()), t.top);
  EXPECT_EQ(m.predict(random_feature_map(8, 8, 3, r)).height(), 8u);
}

TEST(ToyModel, BackwardMatchesFiniteDifferences) {
  Rng rng(7);
  ToyModel model = ToyModel::create(ModelSpec{3, 2, 4, 3}, rng);
  const auto image = random_feature_map(5, 5, 3, rng);
  const auto d_logits = random_feature_map(5, 5, 3, rng);
  const auto d_feature = random_feature_map(5, 5, 4, rng);
  const auto trace = model.forward(image);
  const ToyModel::Grads analytic = model.backward(trace, d_logits, &d_feature);
  const auto grads = grad_blocks(analytic);

  auto objective = [&](const ToyModel& m) {
    const auto t = m.forward(image);
    double s = 0.0;
    for (std::size_t i = 0; i < d_logits.size(); ++i) s += t.logits[i] * d_logits[i];
    const auto& f = t.feature(m.feature_tap());
    for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * d_feature[i];
    return s;
  };
  auto blocks = model.parameter_blocks();
  ASSERT_EQ(blocks.size(), grads.size());
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    std::vector<double> x(blocks[b].begin(), blocks[b].end());
    auto f = [&](std::span<const double> v) {
      std::copy(v.begin(), v.end(), blocks[b].begin());
      const double r = objective(model);
      std::copy(x.begin(), x.end(), blocks[b].begin());
      return r;
    };
    const auto numeric = oracle::grad_finite_diff(f, x);
    EXPECT_LT(oracle::max_relative_error(numeric, grads[b]), 1e-6) << "block " << b;
  }
}

TEST(Sgd, StepsEveryBlock) {
  std::vector<double> p1{1.0, 2.0}, p2{3.0};
  const std::vector<double> g1{1.0, 1.0}, g2{-2.0};
  Sgd sgd(0.5, 0.0);
  sgd.step({p1, p2}, {g1, g2});
  EXPECT_EQ(p1, (std::vector<double>{0.5, 1.5}));
  EXPECT_EQ(p2, (std::vector<double>{4.0}));
  EXPECT_THROW(sgd.step({p1}, {g1, g2}), ShapeError);
}
