#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "afdcd/config.hpp"
#include "afdcd/dataset.hpp"
#include "afdcd/masking.hpp"
#include "afdcd/metrics.hpp"
#include "afdcd/model.hpp"
#include "afdcd/rng.hpp"

namespace afdcd {

struct TeacherResult {
  ToyModel model;
  MiouResult val;
};

/// Task-loss-only training of the teacher; the returned model is treated as frozen.
TeacherResult train_teacher(const RunConfig& cfg, const ToyDataset& data, Rng& rng);

/// Frozen-teacher features and logits for the training set, computed on first use.
class TeacherCache {
 public:
  TeacherCache(const ToyModel& teacher, const ToyDataset& data);

  const FeatureMap& feature(std::size_t index);
  const FeatureMap& logits(std::size_t index);

 private:
  void fill(std::size_t index);

  const ToyModel* teacher_;
  const ToyDataset* data_;
  std::vector<std::optional<FeatureMap>> features_;
  std::vector<std::optional<FeatureMap>> logits_;
};

struct IterationRow {
  std::size_t iter = 0;
  double task = 0.0;
  double kd = 0.0;
  double fd = 0.0;
  double afdcd = 0.0;
  double total = 0.0;
};

struct RunRecord {
  std::vector<IterationRow> rows;
  LossWeights weights;
  std::uint64_t seed = 0;
  nlohmann::json config;
  DistanceHistogram ts_initial;
  DistanceHistogram ts_final;
  DistanceHistogram selfsim_student;
  DistanceHistogram selfsim_teacher;
};

struct DistillResult {
  ToyModel student;
  GeneratorParams generator;
  RunRecord record;
};

/// Student training with every loss term listed in cfg.loss_terms. The
/// teacher is only evaluated, never updated.
DistillResult distill_student(const RunConfig& cfg, const ToyModel& teacher, const ToyDataset& data, Rng& rng,
                              TeacherCache* cache = nullptr);

/// Argmax prediction over the whole split, scored as one confusion matrix.
MiouResult evaluate(const ToyModel& model, std::span<const Sample> samples);

struct StatsFeatures {
  FeatureMap teacher;
  FeatureMap student;  // generator output on unmasked student features
};

/// First cfg.stats_images validation images, stacked along the height axis.
StatsFeatures stats_features(const RunConfig& cfg, const ToyModel& teacher, const ToyModel& student,
                             const GeneratorParams& generator, std::span<const Sample> val);

/// `iter,task,kd,fd,afdcd,total` with round-trip precision.
void write_run_csv(std::ostream& out, const RunRecord& record);

struct ExperimentResult {
  TeacherResult teacher;
  DistillResult distill;
  MiouResult student_val;
  StatsFeatures final_features;
};

/// Dataset generation, teacher training, distillation and evaluation from one seed.
ExperimentResult run_experiment(const RunConfig& cfg);

/// Writes run.csv, config.json, summary.json, distance-statistics CSVs and feature dumps.
void write_experiment(const std::filesystem::path& dir, const RunConfig& cfg, const ExperimentResult& result);

}  // namespace afdcd
