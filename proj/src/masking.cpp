#include "afdcd/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace afdcd {

std::size_t SpatialMask::masked_count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{0}));
}

double SpatialMask::masked_fraction() const {
  return bits.empty() ? 0.0 : static_cast<double>(masked_count()) / static_cast<double>(bits.size());
}

SpatialMask sample_mask(std::size_t height, std::size_t width, double ratio, Rng& rng, MaskMode mode) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ParameterError("mask ratio must lie in [0, 1)");
  if (height == 0 || width == 0) throw ShapeError("mask extents must be positive");
  SpatialMask m{height, width, ratio, std::vector<std::uint8_t>(height * width, 1)};
  if (mode == MaskMode::Bernoulli) {
    for (auto& b : m.bits) b = rng.bernoulli(ratio) ? 0 : 1;
    return m;
  }
  // Partial Fisher-Yates: the first `drop` entries of the permutation are masked.
  const std::size_t n = m.bits.size();
  const auto drop = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < drop; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(order[i], order[j]);
    m.bits[order[i]] = 0;
  }
  return m;
}

FeatureMap apply_mask(const FeatureMap& f, const SpatialMask& mask) {
  if (f.height() != mask.height || f.width() != mask.width) throw ShapeError("apply_mask: extent mismatch");
  FeatureMap out = f;
  for (std::size_t p = 0; p < f.pixels(); ++p) {
    if (mask.bits[p] != 0) continue;
    double* px = out.values().data() + p * f.channels();
    std::fill(px, px + f.channels(), 0.0);
  }
  return out;
}

FeatureMap apply_mask_grad(const FeatureMap& upstream, const SpatialMask& mask) {
  return apply_mask(upstream, mask);
}

GeneratorParams generator_init(std::size_t student_channels, std::size_t teacher_channels, Rng& rng) {
  if (student_channels == 0 || teacher_channels == 0) throw ParameterError("generator channels must be positive");
  GeneratorParams p{ConvLayer(teacher_channels, student_channels), ConvLayer(teacher_channels, teacher_channels)};
  for (ConvLayer* layer : {&p.conv1, &p.conv2}) {
    const double bound = std::sqrt(1.0 / (9.0 * static_cast<double>(layer->in_channels())));
    for (double& w : layer->kernel.values()) w = rng.uniform(-bound, bound);
  }
  return p;
}

GeneratorTrace generator_trace(const FeatureMap& masked, const GeneratorParams& params) {
  if (masked.channels() != params.student_channels()) {
    throw ShapeError("generator: input channels do not match student channels");
  }
  GeneratorTrace t;
  t.input = masked;
  t.hidden_pre = conv2d(masked, params.conv1);
  t.hidden = relu(t.hidden_pre);
  t.output = conv2d(t.hidden, params.conv2);
  return t;
}

FeatureMap generator_forward(const FeatureMap& masked, const GeneratorParams& params) {
  return generator_trace(masked, params).output;
}

GeneratorGrads generator_backward(const GeneratorTrace& trace, const GeneratorParams& params,
                                  const FeatureMap& upstream) {
  ConvGrads g2 = conv2d_grad(trace.hidden, params.conv2, upstream);
  const FeatureMap d_hidden_pre = relu_grad(trace.hidden_pre, g2.input);
  ConvGrads g1 = conv2d_grad(trace.input, params.conv1, d_hidden_pre);
  return GeneratorGrads{std::move(g1.input), ConvLayer(std::move(g1.kernel), std::move(g1.bias)),
                        ConvLayer(std::move(g2.kernel), std::move(g2.bias))};
}

}  // namespace afdcd
