#include "afdcd/train.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

#include "afdcd/feature_io.hpp"
#include "afdcd/losses.hpp"

namespace afdcd {

namespace {

ModelSpec teacher_spec(const RunConfig& cfg) {
  return ModelSpec{3, cfg.teacher.layers, cfg.teacher.channels, cfg.dataset.num_classes};
}

ModelSpec student_spec(const RunConfig& cfg) {
  return ModelSpec{3, cfg.student.layers, cfg.student.channels, cfg.dataset.num_classes};
}

void accumulate(std::vector<std::vector<double>>& acc, const std::vector<std::span<const double>>& blocks) {
  if (acc.empty()) {
    for (const auto& b : blocks) acc.emplace_back(b.size(), 0.0);
  }
  for (std::size_t i = 0; i < blocks.size(); ++i)
    for (std::size_t e = 0; e < blocks[i].size(); ++e) acc[i][e] += blocks[i][e];
}

std::vector<std::span<const double>> scaled_views(std::vector<std::vector<double>>& acc, double scale) {
  std::vector<std::span<const double>> views;
  for (auto& b : acc) {
    for (double& v : b) v *= scale;
    views.emplace_back(b);
  }
  return views;
}

std::vector<std::span<double>> generator_blocks(GeneratorParams& g) {
  return {g.conv1.kernel.values(), g.conv1.bias.values(), g.conv2.kernel.values(), g.conv2.bias.values()};
}

std::vector<std::span<const double>> generator_grad_blocks(const GeneratorGrads& g) {
  return {g.conv1.kernel.values(), g.conv1.bias.values(), g.conv2.kernel.values(), g.conv2.bias.values()};
}

LossAndGrad afdcd_loss(const RunConfig& cfg, const FeatureMap& fs, const FeatureMap& ft) {
  const auto& c = cfg.contrast;
  switch (cfg.afdcd_variant) {
    case AfdcdVariant::Spatial: return loss_sc(fs, ft, c.tau, c.distance, c.include_positive_in_denominator);
    case AfdcdVariant::Channel:
      return loss_cc(fs, ft, c.groups, c.tau, c.distance, c.include_positive_in_denominator);
    case AfdcdVariant::Omni: return loss_oc(fs, ft, c);
  }
  return loss_oc(fs, ft, c);
}

DistanceHistogram ts_stats(const StatsFeatures& f, std::size_t groups, Rng& rng) {
  const std::uint64_t population = f.student.pixels() * groups;
  return ts_distance_stats(f.student, f.teacher, groups, default_sample_count(population), rng);
}

DistanceHistogram selfsim_stats(const FeatureMap& f, const RunConfig& cfg, Rng& rng) {
  const std::uint64_t population = self_similarity_population(f, cfg.selfsim_window, cfg.contrast.groups);
  return self_similarity_stats(f, cfg.selfsim_window, cfg.contrast.groups, default_sample_count(population), rng);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
}

nlohmann::json miou_json(const MiouResult& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& v : r.per_class) per_class.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  return {{"miou", r.miou}, {"per_class_iou", per_class}};
}

}  // namespace

TeacherResult train_teacher(const RunConfig& cfg, const ToyDataset& data, Rng& rng) {
  Rng init_rng = rng.fork("teacher-init");
  Rng batch_rng = rng.fork("teacher-batches");
  ToyModel teacher = ToyModel::create(teacher_spec(cfg), init_rng);
  Sgd sgd(cfg.lr, cfg.momentum);
  const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);

  for (std::size_t it = 0; it < cfg.teacher_iterations; ++it) {
    std::vector<std::vector<double>> acc;
    double loss = 0.0;
    try {
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        const Sample& s = data.train[batch_rng.below(data.train.size())];
        const ToyModel::Trace trace = teacher.forward(s.image);
        const XentResult x = softmax_xent(trace.logits, s.label);
        loss += x.loss * inv_batch;
        accumulate(acc, grad_blocks(teacher.backward(trace, x.grad)));
      }
    } catch (const NumericError& e) {
      throw TrainingError(e.what(), static_cast<long>(it));
    }
    if (!std::isfinite(loss)) throw TrainingError("teacher loss is not finite", static_cast<long>(it));
    sgd.step(teacher.parameter_blocks(), scaled_views(acc, inv_batch));
  }
  MiouResult val = evaluate(teacher, data.val);
  return TeacherResult{std::move(teacher), std::move(val)};
}

TeacherCache::TeacherCache(const ToyModel& teacher, const ToyDataset& data)
    : teacher_(&teacher), data_(&data), features_(data.train.size()), logits_(data.train.size()) {}

void TeacherCache::fill(std::size_t index) {
  if (features_.at(index)) return;
  ToyModel::Trace t = teacher_->forward(data_->train[index].image);
  features_[index] = t.feature(teacher_->feature_tap());
  logits_[index] = std::move(t.logits);
}

const FeatureMap& TeacherCache::feature(std::size_t index) {
  fill(index);
  return *features_[index];
}

const FeatureMap& TeacherCache::logits(std::size_t index) {
  fill(index);
  return *logits_[index];
}

StatsFeatures stats_features(const RunConfig& cfg, const ToyModel& teacher, const ToyModel& student,
                             const GeneratorParams& generator, std::span<const Sample> val) {
  std::vector<FeatureMap> ft;
  std::vector<FeatureMap> fs;
  for (std::size_t i = 0; i < cfg.stats_images && i < val.size(); ++i) {
    ft.push_back(teacher.features(val[i].image));
    fs.push_back(generator_forward(student.features(val[i].image), generator));
  }
  return StatsFeatures{stack_rows(ft), stack_rows(fs)};
}

DistillResult distill_student(const RunConfig& cfg, const ToyModel& teacher, const ToyDataset& data, Rng& rng,
                              TeacherCache* cache) {
  Rng student_rng = rng.fork("student-init");
  Rng generator_rng = rng.fork("generator-init");
  Rng batch_rng = rng.fork("batches");
  Rng mask_rng = rng.fork("masks");
  Rng stats_rng = rng.fork("stats");

  ToyModel student = ToyModel::create(student_spec(cfg), student_rng);
  GeneratorParams generator = generator_init(student.feature_channels(), teacher.feature_channels(), generator_rng);
  if (teacher.feature_channels() % cfg.contrast.groups != 0) {
    throw ShapeError("channel_groups must divide the teacher feature channels");
  }

  std::optional<TeacherCache> own_cache;
  if (cache == nullptr) {
    own_cache.emplace(teacher, data);
    cache = &*own_cache;
  }

  const bool use_task = cfg.has_term("task");
  const bool use_kd = cfg.has_term("kd");
  const bool use_fd = cfg.has_term("fd");
  const bool use_afdcd = cfg.has_term("afdcd");
  const bool use_generator = use_fd || use_afdcd;
  const LossWeights& lw = cfg.weights;

  RunRecord record;
  record.weights = lw;
  record.seed = cfg.seed;
  record.config = config_to_json(cfg);
  record.ts_initial = ts_stats(stats_features(cfg, teacher, student, generator, data.val), cfg.contrast.groups,
                               stats_rng);

  Sgd student_sgd(cfg.lr, cfg.momentum);
  Sgd generator_sgd(cfg.lr, cfg.momentum);
  const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    std::vector<std::vector<double>> student_acc;
    std::vector<std::vector<double>> generator_acc;
    IterationRow row{it};
    try {
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        const std::size_t idx = batch_rng.below(data.train.size());
        const Sample& s = data.train[idx];
        const ToyModel::Trace trace = student.forward(s.image);
        const FeatureMap& feature = trace.feature(student.feature_tap());

        FeatureMap d_logits(trace.logits.height(), trace.logits.width(), trace.logits.channels());
        if (use_task) {
          const XentResult x = softmax_xent(trace.logits, s.label);
          row.task += x.loss * inv_batch;
          d_logits = x.grad;
        }
        if (use_kd) {
          const LossAndGrad kd = loss_kd(trace.logits, cache->logits(idx), cfg.kd_temperature);
          row.kd += kd.loss * inv_batch;
          for (std::size_t i = 0; i < d_logits.size(); ++i) d_logits[i] += lw.lambda1 * kd.grad[i];
        }

        std::optional<FeatureMap> d_feature;
        if (use_generator) {
          const SpatialMask mask = sample_mask(feature.height(), feature.width(), cfg.mask_ratio, mask_rng, cfg.mask_mode);
          const GeneratorTrace gen = generator_trace(apply_mask(feature, mask), generator);
          const FeatureMap& ft = cache->feature(idx);
          FeatureMap d_fs(ft.height(), ft.width(), ft.channels());
          if (use_fd) {
            const LossAndGrad fd = l_fd(ft, gen.output);
            row.fd += fd.loss * inv_batch;
            for (std::size_t i = 0; i < d_fs.size(); ++i) d_fs[i] += lw.lambda2 * fd.grad[i];
          }
          if (use_afdcd) {
            const LossAndGrad a = afdcd_loss(cfg, gen.output, ft);
            row.afdcd += a.loss * inv_batch;
            for (std::size_t i = 0; i < d_fs.size(); ++i) d_fs[i] += lw.lambda3 * a.grad[i];
          }
          GeneratorGrads gg = generator_backward(gen, generator, d_fs);
          accumulate(generator_acc, generator_grad_blocks(gg));
          d_feature = apply_mask_grad(gg.input, mask);
        }
        accumulate(student_acc,
                   grad_blocks(student.backward(trace, d_logits, d_feature ? &*d_feature : nullptr)));
      }
    } catch (const NumericError& e) {
      throw TrainingError(e.what(), static_cast<long>(it));
    } catch (const DegenerateInputError& e) {
      // Cosine distance on an all-zero group, e.g. a dead ReLU slice or a fully masked neighbourhood.
      throw TrainingError(e.what(), static_cast<long>(it));
    }

    row.total = total_loss(row.task, row.kd, row.fd, row.afdcd, lw).total;
    if (!std::isfinite(row.total)) throw TrainingError("distillation loss is not finite", static_cast<long>(it));
    record.rows.push_back(row);

    student_sgd.step(student.parameter_blocks(), scaled_views(student_acc, inv_batch));
    if (use_generator) generator_sgd.step(generator_blocks(generator), scaled_views(generator_acc, inv_batch));
  }

  const StatsFeatures final_features = stats_features(cfg, teacher, student, generator, data.val);
  record.ts_final = ts_stats(final_features, cfg.contrast.groups, stats_rng);
  record.selfsim_student = selfsim_stats(final_features.student, cfg, stats_rng);
  record.selfsim_teacher = selfsim_stats(final_features.teacher, cfg, stats_rng);
  return DistillResult{std::move(student), std::move(generator), std::move(record)};
}

MiouResult evaluate(const ToyModel& model, std::span<const Sample> samples) {
  ConfusionMatrix cm(model.num_classes());
  for (const auto& s : samples) cm.add(model.predict(s.image), s.label);
  return cm.result();
}

void write_run_csv(std::ostream& out, const RunRecord& record) {
  const auto old = out.precision(17);
  out << "iter,task,kd,fd,afdcd,total\n";
  for (const auto& r : record.rows) {
    out << r.iter << ',' << r.task << ',' << r.kd << ',' << r.fd << ',' << r.afdcd << ',' << r.total << '\n';
  }
  out.precision(old);
}

ExperimentResult run_experiment(const RunConfig& cfg) {
  validate(cfg);
  Rng root(cfg.seed);
  Rng data_rng = root.fork("data");
  Rng teacher_rng = root.fork("teacher");
  Rng student_rng = root.fork("student");
  const ToyDataset data = gen_toy_dataset(cfg.dataset, data_rng);
  TeacherResult teacher = train_teacher(cfg, data, teacher_rng);
  DistillResult distill = distill_student(cfg, teacher.model, data, student_rng);
  MiouResult student_val = evaluate(distill.student, data.val);
  StatsFeatures features = stats_features(cfg, teacher.model, distill.student, distill.generator, data.val);
  return ExperimentResult{std::move(teacher), std::move(distill), std::move(student_val), std::move(features)};
}

void write_experiment(const std::filesystem::path& dir, const RunConfig& cfg, const ExperimentResult& result) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "run.csv");
    if (!out) throw Error("cannot write " + (dir / "run.csv").string());
    write_run_csv(out, result.distill.record);
  }
  write_text(dir / "config.json", config_to_json(cfg).dump(2) + "\n");

  nlohmann::json summary;
  summary["seed"] = cfg.seed;
  summary["teacher"] = miou_json(result.teacher.val);
  summary["student"] = miou_json(result.student_val);
  summary["ts_distance_mean_initial"] = static_cast<double>(result.distill.record.ts_initial.mean);
  summary["ts_distance_mean_final"] = static_cast<double>(result.distill.record.ts_final.mean);
  summary["selfsim_student_variance"] = static_cast<double>(result.distill.record.selfsim_student.variance);
  summary["selfsim_teacher_variance"] = static_cast<double>(result.distill.record.selfsim_teacher.variance);
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  const std::pair<const char*, const DistanceHistogram*> hists[] = {
      {"ts_initial.csv", &result.distill.record.ts_initial},
      {"ts_final.csv", &result.distill.record.ts_final},
      {"selfsim_student.csv", &result.distill.record.selfsim_student},
      {"selfsim_teacher.csv", &result.distill.record.selfsim_teacher},
  };
  for (const auto& [name, hist] : hists) {
    std::ofstream out(dir / name);
    if (!out) throw Error(std::string("cannot write ") + name);
    write_histogram_csv(out, *hist);
  }
  save_feature_dump(dir / "teacher_features.afdc", result.final_features.teacher);
  save_feature_dump(dir / "student_features.afdc", result.final_features.student);
}

}  // namespace afdcd
