#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "afdcd/nn.hpp"
#include "afdcd/rng.hpp"
#include "afdcd/tensor.hpp"

namespace afdcd {

/// Spatial keep/drop mask broadcast over channels; bit 1 keeps a position, 0 zeroes it.
struct SpatialMask {
  std::size_t height = 0;
  std::size_t width = 0;
  double ratio = 0.0;
  std::vector<std::uint8_t> bits;

  bool kept(std::size_t y, std::size_t x) const { return bits[y * width + x] != 0; }
  std::size_t masked_count() const;
  double masked_fraction() const;
};

enum class MaskMode {
  Bernoulli,   // every position dropped independently with probability ratio
  ExactCount,  // exactly round(ratio * H * W) positions dropped, chosen uniformly
};

inline constexpr double kDefaultMaskRatio = 0.75;

SpatialMask sample_mask(std::size_t height, std::size_t width, double ratio, Rng& rng,
                        MaskMode mode = MaskMode::Bernoulli);

FeatureMap apply_mask(const FeatureMap& f, const SpatialMask& mask);

/// conv(C_s -> C_t) -> ReLU -> conv(C_t -> C_t).
struct GeneratorParams {
  ConvLayer conv1;
  ConvLayer conv2;

  std::size_t student_channels() const { return conv1.in_channels(); }
  std::size_t teacher_channels() const { return conv2.out_channels(); }
};

/// Intermediate activations kept for the backward pass.
struct GeneratorTrace {
  FeatureMap input;
  FeatureMap hidden_pre;
  FeatureMap hidden;
  FeatureMap output;
};

struct GeneratorGrads {
  FeatureMap input;
  ConvLayer conv1;
  ConvLayer conv2;
};

GeneratorParams generator_init(std::size_t student_channels, std::size_t teacher_channels, Rng& rng);

GeneratorTrace generator_trace(const FeatureMap& masked, const GeneratorParams& params);
FeatureMap generator_forward(const FeatureMap& masked, const GeneratorParams& params);
GeneratorGrads generator_backward(const GeneratorTrace& trace, const GeneratorParams& params,
                                  const FeatureMap& upstream);

/// Gradient of apply_mask: upstream with dropped positions zeroed.
FeatureMap apply_mask_grad(const FeatureMap& upstream, const SpatialMask& mask);

}  // namespace afdcd
