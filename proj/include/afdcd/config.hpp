#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "afdcd/dataset.hpp"
#include "afdcd/losses.hpp"
#include "afdcd/masking.hpp"

namespace afdcd {

struct ArchSpec {
  std::size_t layers = 2;
  std::size_t channels = 8;
};

enum class AfdcdVariant { Spatial, Channel, Omni };

AfdcdVariant parse_variant(std::string_view name);
std::string to_string(AfdcdVariant v);

struct RunConfig {
  ToyDatasetSpec dataset;
  ArchSpec teacher{4, 32};
  ArchSpec student{2, 8};

  ContrastConfig contrast;
  LossWeights weights;
  double kd_temperature = 4.0;
  double mask_ratio = kDefaultMaskRatio;
  MaskMode mask_mode = MaskMode::Bernoulli;
  std::vector<std::string> loss_terms{"task", "kd", "fd", "afdcd"};
  AfdcdVariant afdcd_variant = AfdcdVariant::Omni;

  double lr = 0.02;
  double momentum = 0.9;
  std::size_t iterations = 200;
  std::size_t teacher_iterations = 200;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  std::string out_dir = "runs/default";

  // Validation images stacked for the distance diagnostics, and the local window size.
  std::size_t stats_images = 8;
  std::size_t selfsim_window = 4;

  bool has_term(std::string_view term) const;
};

/// Throws ConfigError for unknown keys, bad types, or inconsistent values.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::filesystem::path& path);

/// Checks divisibility and range constraints; throws ConfigError.
void validate(const RunConfig& cfg);

}  // namespace afdcd
