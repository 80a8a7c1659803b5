#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "afdcd/tensor.hpp"

namespace afdcd {

/// 3x3 same-padding stride-1 convolution. kernel is (out, in, 3, 3), bias is (out).
struct ConvLayer {
  Tensor kernel;
  Tensor bias;

  ConvLayer() = default;
  ConvLayer(std::size_t out_channels, std::size_t in_channels);
  ConvLayer(Tensor kernel, Tensor bias);

  std::size_t out_channels() const { return kernel.dim(0); }
  std::size_t in_channels() const { return kernel.dim(1); }

  double& weight(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) {
    return kernel[((o * in_channels() + i) * 3 + ky) * 3 + kx];
  }
  double weight(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) const {
    return kernel[((o * in_channels() + i) * 3 + ky) * 3 + kx];
  }
};

struct ConvGrads {
  FeatureMap input;
  Tensor kernel;
  Tensor bias;
};

/// Per-pixel linear map from C_in to C_out channels (the classifier head).
/// weight is (out, in), bias is (out).
struct PointwiseLayer {
  Tensor weight;
  Tensor bias;

  PointwiseLayer() = default;
  PointwiseLayer(std::size_t out_channels, std::size_t in_channels);

  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t in_channels() const { return weight.dim(1); }
};

struct PointwiseGrads {
  FeatureMap input;
  Tensor weight;
  Tensor bias;
};

/// Max-pool output with the flat input index each output value came from.
struct PoolResult {
  FeatureMap output;
  std::vector<std::size_t> argmax;
  std::size_t input_height = 0;
  std::size_t input_width = 0;
  std::size_t factor = 1;
};

struct XentResult {
  double loss = 0.0;
  FeatureMap grad;
  std::size_t counted = 0;
};

// OpenMP-parallel kernels. Each output element is produced by exactly one
// thread with a fixed accumulation order, so results do not depend on the
// thread count.
FeatureMap conv2d(const FeatureMap& input, const ConvLayer& layer);
ConvGrads conv2d_grad(const FeatureMap& input, const ConvLayer& layer, const FeatureMap& upstream);

FeatureMap pointwise(const FeatureMap& input, const PointwiseLayer& layer);
PointwiseGrads pointwise_grad(const FeatureMap& input, const PointwiseLayer& layer,
                              const FeatureMap& upstream);

FeatureMap relu(const FeatureMap& x);
Tensor relu(const Tensor& x);
FeatureMap relu_grad(const FeatureMap& x, const FeatureMap& upstream);
Tensor relu_grad(const Tensor& x, const Tensor& upstream);

PoolResult max_pool(const FeatureMap& x, std::size_t k);
/// Routes each upstream value to its recorded argmax position.
FeatureMap max_pool_grad(const PoolResult& pool, const FeatureMap& upstream);

/// Mean per-pixel cross-entropy over pixels whose label is not kIgnoreLabel.
XentResult softmax_xent(const FeatureMap& logits, const LabelMap& labels);

/// velocity <- momentum * velocity + grad; params <- params - lr * velocity.
void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
              double lr, double momentum);

/// Plain serial kernels, kept as the reference the parallel versions are
/// tested and benchmarked against.
namespace reference {

FeatureMap conv2d(const FeatureMap& input, const ConvLayer& layer);
ConvGrads conv2d_grad(const FeatureMap& input, const ConvLayer& layer, const FeatureMap& upstream);

}  // namespace reference

}  // namespace afdcd
