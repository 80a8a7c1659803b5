#include <cmath>
#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "afdcd/config.hpp"
#include "afdcd/dataset.hpp"
#include "afdcd/errors.hpp"
#include "afdcd/feature_io.hpp"
#include "afdcd/model.hpp"
#include "afdcd/train.hpp"

using namespace afdcd;

namespace {

RunConfig small_config() {
  RunConfig c;
  c.dataset.image_size = 16;
  c.dataset.train_count = 24;
  c.dataset.val_count = 8;
  c.teacher = {2, 16};
  c.student = {2, 4};
  c.contrast.groups = 4;
  c.contrast.patch_side = 2;
  c.contrast.pool_factor = 2;
  c.iterations = 4;
  c.teacher_iterations = 4;
  c.batch_size = 2;
  c.stats_images = 2;
  c.seed = 17;
  c.dataset.seed = 17;
  validate(c);
  return c;
}

struct Fixture {
  RunConfig cfg = small_config();
  ToyDataset data = gen_toy_dataset(cfg.dataset);
  TeacherResult teacher = [this] {
    Rng rng(1);
    return train_teacher(cfg, data, rng);
  }();
};

std::string run_csv(const RunRecord& r) {
  std::ostringstream out;
  write_run_csv(out, r);
  return out.str();
}

}  // namespace

TEST(TrainTeacher, DeterministicAndZeroIterationsIsNearChance) {
  Fixture f;
  Rng again(1);
  EXPECT_EQ(train_teacher(f.cfg, f.data, again).model, f.teacher.model);

  RunConfig zero = f.cfg;
  zero.teacher_iterations = 0;
  Rng rng(1);
  const auto untrained = train_teacher(zero, f.data, rng);
  Rng init(1);
  Rng init_fork = init.fork("teacher-init");
  EXPECT_EQ(untrained.model, ToyModel::create(ModelSpec{3, 2, 16, 4}, init_fork));
  EXPECT_LT(untrained.val.miou, 0.5);
}

TEST(TrainTeacher, DivergenceIsATrainingError) {
  Fixture f;
  RunConfig wild = f.cfg;
  wild.lr = 1e300;
  wild.teacher_iterations = 50;
  Rng rng(1);
  EXPECT_THROW(train_teacher(wild, f.data, rng), TrainingError);
}

TEST(Distill, SameSeedGivesIdenticalRecordBytes) {
  Fixture f;
  Rng a(5), b(5);
  const auto ra = distill_student(f.cfg, f.teacher.model, f.data, a);
  const auto rb = distill_student(f.cfg, f.teacher.model, f.data, b);
  EXPECT_EQ(run_csv(ra.record), run_csv(rb.record));
  EXPECT_EQ(ra.student, rb.student);
  ASSERT_EQ(ra.record.rows.size(), f.cfg.iterations);
  EXPECT_EQ(run_csv(ra.record).substr(0, 28), "iter,task,kd,fd,afdcd,total\n");
}

TEST(Distill, TotalColumnObeysWeightedSumExactly) {
  Fixture f;
  Rng rng(6);
  const auto r = distill_student(f.cfg, f.teacher.model, f.data, rng);
  const auto& w = r.record.weights;
  for (const auto& row : r.record.rows) {
    EXPECT_EQ(row.total, row.task + w.lambda1 * row.kd + w.lambda2 * row.fd + w.lambda3 * row.afdcd);
    EXPECT_NE(row.afdcd, 0.0);
    EXPECT_NE(row.fd, 0.0);
  }
}

TEST(Distill, ZeroWeightsReproduceTaskOnlyTrajectory) {
  Fixture f;
  RunConfig zero = f.cfg;
  zero.weights = {0.0, 0.0, 0.0};
  RunConfig task_only = f.cfg;
  task_only.loss_terms = {"task"};
  Rng a(7), b(7);
  const auto rz = distill_student(zero, f.teacher.model, f.data, a);
  const auto rt = distill_student(task_only, f.teacher.model, f.data, b);
  EXPECT_EQ(rz.student, rt.student);
  for (std::size_t i = 0; i < rz.record.rows.size(); ++i) {
    EXPECT_EQ(rz.record.rows[i].task, rt.record.rows[i].task);
    EXPECT_EQ(rz.record.rows[i].total, rt.record.rows[i].task);
    EXPECT_EQ(rt.record.rows[i].fd, 0.0);
  }
}

TEST(Distill, EveryVariantRunsUnderL2AndL1) {
  Fixture f;
  for (auto v : {AfdcdVariant::Spatial, AfdcdVariant::Channel, AfdcdVariant::Omni}) {
    for (auto d : {DistanceKind::L2Squared, DistanceKind::L1}) {
      RunConfig c = f.cfg;
      c.afdcd_variant = v;
      c.contrast.distance = d;
      c.iterations = 1;
      c.stats_images = 1;
      Rng rng(8);
      const auto r = distill_student(c, f.teacher.model, f.data, rng);
      EXPECT_TRUE(std::isfinite(r.record.rows[0].afdcd));
    }
  }
}

TEST(Distill, CosineOnZeroGroupsIsATrainingError) {
  // Zero-bias generator output under a fully masked neighbourhood is an exact zero vector.
  Fixture f;
  RunConfig c = f.cfg;
  c.contrast.distance = DistanceKind::Cosine;
  Rng rng(8);
  try {
    distill_student(c, f.teacher.model, f.data, rng);
    FAIL() << "expected a training error";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.iteration(), 0);
    EXPECT_NE(std::string(e.what()).find("cosine"), std::string::npos);
  }
}

TEST(Distill, TeacherCacheIsTransparent) {
  Fixture f;
  TeacherCache cache(f.teacher.model, f.data);
  EXPECT_EQ(cache.feature(3), f.teacher.model.features(f.data.train[3].image));
  EXPECT_EQ(cache.logits(3), f.teacher.model.forward(f.data.train[3].image).logits);
  Rng a(9), b(9);
  EXPECT_EQ(distill_student(f.cfg, f.teacher.model, f.data, a, &cache).student,
            distill_student(f.cfg, f.teacher.model, f.data, b).student);
}

TEST(Evaluate, HandBuiltColorClassifierIsPerfectOnNoiselessData) {
  ToyDatasetSpec spec;
  spec.noise_std = 0.0;
  spec.train_count = 16;
  spec.val_count = 16;
  const auto data = gen_toy_dataset(spec);

  Rng rng(0);
  ToyModel m = ToyModel::create(ModelSpec{3, 1, 3, 4}, rng);
  auto blocks = m.parameter_blocks();
  // Center-tap identity conv, then logits 2<x, c_k> - |c_k|^2.
  std::fill(blocks[0].begin(), blocks[0].end(), 0.0);
  for (std::size_t c = 0; c < 3; ++c) blocks[0][(c * 3 + c) * 9 + 4] = 1.0;
  for (int k = 0; k < 4; ++k) {
    const auto col = class_color(k);
    double sq = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      blocks[2][k * 3 + c] = 2.0 * col[c];
      sq += col[c] * col[c];
    }
    blocks[3][k] = -sq;
  }
  const auto r = evaluate(m, data.val);
  EXPECT_EQ(r.miou, 1.0);
  EXPECT_EQ(evaluate(m, data.val).miou, r.miou);
}

TEST(Experiment, WritesEveryArtifact) {
  RunConfig c = small_config();
  c.iterations = 2;
  c.teacher_iterations = 2;
  const auto result = run_experiment(c);
  const auto dir = std::filesystem::temp_directory_path() / "afdcd_experiment_test";
  std::filesystem::remove_all(dir);
  write_experiment(dir, c, result);
  for (const char* name : {"run.csv", "config.json", "summary.json", "ts_initial.csv", "ts_final.csv",
                           "selfsim_student.csv", "selfsim_teacher.csv", "teacher_features.afdc",
                           "student_features.afdc"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;
  }
  const auto ft = load_feature_dump(dir / "teacher_features.afdc");
  EXPECT_EQ(ft.height(), 2 * c.dataset.image_size);
  EXPECT_EQ(ft.channels(), c.teacher.channels);
  EXPECT_EQ(load_feature_dump(dir / "student_features.afdc").channels(), c.teacher.channels);
  EXPECT_EQ(load_config(dir / "config.json").seed, c.seed);
  std::filesystem::remove_all(dir);
}
