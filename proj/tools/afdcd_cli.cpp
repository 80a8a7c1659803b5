#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "afdcd/checks.hpp"
#include "afdcd/config.hpp"
#include "afdcd/dataset.hpp"
#include "afdcd/errors.hpp"
#include "afdcd/feature_io.hpp"
#include "afdcd/metrics.hpp"
#include "afdcd/partition.hpp"
#include "afdcd/train.hpp"

namespace fs = std::filesystem;
using namespace afdcd;

namespace {

constexpr int kExitCheckFailure = 1;
constexpr int kExitUsage = 2;

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct CheckArgs {
  std::size_t trials = 100;
  std::uint64_t seed = 1;
};

struct FlopsArgs {
  std::optional<std::uint64_t> hw;
  std::optional<std::size_t> height;
  std::optional<std::size_t> width;
  std::size_t channels = 512;
  std::size_t groups = 16;
  std::vector<std::string> patches{"4"};
  std::vector<std::size_t> pools{1};
  std::uint64_t ops = kDefaultOpsPerElement;
  bool no_header = false;
};

struct MetricsArgs {
  std::string student;
  std::string teacher;
  std::size_t groups = 16;
  std::size_t window = 4;
  std::size_t samples = 0;
  std::uint64_t seed = 1;
  std::string out;
};

struct GenDataArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig config_or_default(const std::string& path) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_config(path);
  return cfg;
}

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = config_or_default(a.config);
  if (a.seed) {
    cfg.seed = *a.seed;
    cfg.dataset.seed = *a.seed;
  }
  if (!a.out.empty()) cfg.out_dir = a.out;
  validate(cfg);
  const ExperimentResult result = run_experiment(cfg);
  write_experiment(cfg.out_dir, cfg, result);
  std::cout << "teacher_miou=" << result.teacher.val.miou << " student_miou=" << result.student_val.miou
            << " out=" << cfg.out_dir << '\n';
  return 0;
}

int cmd_checks(const CheckArgs& a, bool oracle) {
  const auto results = oracle ? run_oracle_checks(a.trials, a.seed) : run_grad_checks(a.trials, a.seed);
  return report_checks(std::cout, results) ? 0 : kExitCheckFailure;
}

std::size_t square_side(std::uint64_t hw) {
  const auto side = static_cast<std::uint64_t>(std::llround(std::sqrt(static_cast<double>(hw))));
  if (side * side != hw) throw ConfigError("--hw must be a perfect square pixel count");
  return static_cast<std::size_t>(side);
}

int cmd_flops(const FlopsArgs& a) {
  std::size_t h = 0;
  std::size_t w = 0;
  if (a.hw) {
    if (a.height || a.width) throw ConfigError("--hw excludes --height/--width");
    h = w = square_side(*a.hw);
  } else if (a.height && a.width) {
    h = *a.height;
    w = *a.width;
  } else {
    throw ConfigError("flops needs --hw or both --height and --width");
  }
  if (!a.no_header) std::cout << "n,q,samples,negatives,distances,flops\n";
  for (std::size_t q : a.pools) {
    for (const std::string& p : a.patches) {
      std::size_t n = 0;
      if (p == "full") {
        if (q == 0 || h % q != 0 || w % q != 0 || h != w) throw ConfigError("--patch full needs a square map divisible by --pool");
        n = h / q;
      } else {
        try {
          n = std::stoul(p);
        } catch (const std::exception&) {
          throw ConfigError("--patch expects an integer or 'full'");
        }
      }
      const PairCounts c = pair_count_model(h, w, a.channels, a.groups, n, q, a.ops);
      std::cout << c.patch_side << ',' << c.pool_factor << ',' << c.samples << ',' << c.negatives_per_sample << ','
                << c.distances << ',' << c.flops << '\n';
    }
  }
  return 0;
}

void write_hist(const fs::path& path, const DistanceHistogram& hist) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_histogram_csv(out, hist);
}

int cmd_metrics(const MetricsArgs& a) {
  const FeatureMap student = load_feature_dump(a.student);
  std::optional<FeatureMap> teacher;
  if (!a.teacher.empty()) teacher = load_feature_dump(a.teacher);
  Rng rng(a.seed);
  if (!a.out.empty()) fs::create_directories(a.out);

  std::cout << std::setprecision(17) << "metric,mean,variance,n\n";
  auto report = [&](const std::string& name, const DistanceHistogram& hist) {
    std::cout << name << ',' << static_cast<double>(hist.mean) << ',' << static_cast<double>(hist.variance) << ','
              << hist.sample_count << '\n';
    if (!a.out.empty()) write_hist(fs::path(a.out) / (name + ".csv"), hist);
  };
  auto count_for = [&](std::uint64_t population) {
    return a.samples == 0 ? default_sample_count(population) : a.samples;
  };

  if (teacher) {
    const std::uint64_t population = static_cast<std::uint64_t>(student.pixels()) * a.groups;
    Rng ts_rng = rng.fork("ts");
    report("ts_distance", ts_distance_stats(student, *teacher, a.groups, count_for(population), ts_rng));
  }
  Rng s_rng = rng.fork("selfsim-student");
  report("selfsim_student",
         self_similarity_stats(student, a.window, a.groups,
                               count_for(self_similarity_population(student, a.window, a.groups)), s_rng));
  if (teacher) {
    Rng t_rng = rng.fork("selfsim-teacher");
    report("selfsim_teacher",
           self_similarity_stats(*teacher, a.window, a.groups,
                                 count_for(self_similarity_population(*teacher, a.window, a.groups)), t_rng));
  }
  return 0;
}

int cmd_gen_data(const GenDataArgs& a) {
  RunConfig cfg = config_or_default(a.config);
  if (a.seed) cfg.dataset.seed = *a.seed;
  validate(cfg);
  const ToyDataset data = gen_toy_dataset(cfg.dataset);
  const fs::path root(a.out);
  std::ofstream manifest;
  fs::create_directories(root);
  manifest.open(root / "manifest.csv");
  manifest << "split,index,image,label\n";
  auto dump = [&](const std::string& split, std::span<const Sample> samples) {
    fs::create_directories(root / split);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      std::ostringstream stem;
      stem << std::setw(5) << std::setfill('0') << i;
      const fs::path image = fs::path(split) / (stem.str() + ".afdc");
      const fs::path label = fs::path(split) / (stem.str() + ".pgm");
      save_feature_dump(root / image, samples[i].image);
      save_label_pgm(root / label, samples[i].label);
      manifest << split << ',' << i << ',' << image.string() << ',' << label.string() << '\n';
    }
  };
  dump("train", data.train);
  dump("val", data.val);
  const auto hist = class_histogram(data.train, cfg.dataset.num_classes);
  std::cout << "class,train_pixels\n";
  for (std::size_t k = 0; k < hist.size(); ++k) std::cout << k << ',' << hist[k] << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Augmentation-free dense contrastive distillation toolkit"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a teacher, distill a student, write the run directory");
  train_cmd->add_option("--config", train.config, "JSON config file (defaults when omitted)")->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", train.seed, "Override the config seed");
  train_cmd->add_option("--out", train.out, "Override the output directory");

  CheckArgs grad;
  auto* grad_cmd = app.add_subcommand("grad-check", "Analytical gradients against finite differences");
  grad_cmd->add_option("--trials", grad.trials, "Instances per check")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--seed", grad.seed);
  grad.trials = 20;

  CheckArgs oracle;
  auto* oracle_cmd = app.add_subcommand("oracle-check", "Optimized losses and kernels against brute force");
  oracle_cmd->add_option("--trials", oracle.trials, "Instances per check")->check(CLI::PositiveNumber);
  oracle_cmd->add_option("--seed", oracle.seed);

  FlopsArgs flops;
  auto* flops_cmd = app.add_subcommand("flops", "Pair-count and distance-FLOPs model as CSV");
  flops_cmd->add_option("--hw", flops.hw, "Pixel count H*W of a square map");
  flops_cmd->add_option("--height", flops.height);
  flops_cmd->add_option("--width", flops.width);
  flops_cmd->add_option("--channels", flops.channels);
  flops_cmd->add_option("--groups", flops.groups);
  flops_cmd->add_option("--patch", flops.patches, "Patch side(s), or 'full' for a single patch")->expected(1, -1);
  flops_cmd->add_option("--pool", flops.pools, "Pool factor(s)")->expected(1, -1);
  flops_cmd->add_option("--ops-per-element", flops.ops);
  flops_cmd->add_flag("--no-header", flops.no_header);

  MetricsArgs metrics;
  auto* metrics_cmd = app.add_subcommand("metrics", "Distance and self-similarity statistics of feature dumps");
  metrics_cmd->add_option("--student", metrics.student)->required()->check(CLI::ExistingFile);
  metrics_cmd->add_option("--teacher", metrics.teacher)->check(CLI::ExistingFile);
  metrics_cmd->add_option("--groups", metrics.groups);
  metrics_cmd->add_option("--window", metrics.window);
  metrics_cmd->add_option("--samples", metrics.samples, "0 selects the default count");
  metrics_cmd->add_option("--seed", metrics.seed);
  metrics_cmd->add_option("--out", metrics.out, "Directory for histogram CSVs");

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write the toy dataset to disk");
  gen_cmd->add_option("--config", gen.config)->check(CLI::ExistingFile);
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--out", gen.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train);
    if (*grad_cmd) return cmd_checks(grad, false);
    if (*oracle_cmd) return cmd_checks(oracle, true);
    if (*flops_cmd) return cmd_flops(flops);
    if (*metrics_cmd) return cmd_metrics(metrics);
    if (*gen_cmd) return cmd_gen_data(gen);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParameterError& e) {
    std::cerr << "invalid parameter: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckFailure;
  }
  return kExitUsage;
}
