#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "afdcd/nn.hpp"
#include "afdcd/rng.hpp"
#include "afdcd/tensor.hpp"

namespace afdcd {

struct ModelSpec {
  std::size_t in_channels = 3;
  std::size_t layers = 2;
  std::size_t channels = 8;
  std::size_t num_classes = 4;
};

/// Stack of 3x3 conv + ReLU layers followed by a pointwise classifier.
/// The post-ReLU output of conv layer `feature_tap` is the distillation feature.
class ToyModel {
 public:
  struct Trace {
    std::vector<FeatureMap> inputs;      // input of each conv layer
    std::vector<FeatureMap> pre;         // pre-activation of each conv layer
    FeatureMap top;                      // post-ReLU output of the last conv layer
    FeatureMap logits;
    const FeatureMap& feature(std::size_t tap) const { return tap + 1 < inputs.size() ? inputs[tap + 1] : top; }
  };

  struct Grads {
    std::vector<ConvLayer> convs;
    PointwiseLayer classifier;
  };

  ToyModel() = default;
  static ToyModel create(const ModelSpec& spec, Rng& rng);

  Trace forward(const FeatureMap& image) const;
  FeatureMap features(const FeatureMap& image) const;
  LabelMap predict(const FeatureMap& image) const;

  /// d_feature (optional) is the gradient arriving at the feature tap from distillation losses.
  Grads backward(const Trace& trace, const FeatureMap& d_logits, const FeatureMap* d_feature = nullptr) const;

  std::size_t feature_channels() const { return convs_.at(feature_tap_).out_channels(); }
  std::size_t num_classes() const { return classifier_.out_channels(); }
  std::size_t feature_tap() const { return feature_tap_; }

  const std::vector<ConvLayer>& convs() const { return convs_; }
  const PointwiseLayer& classifier() const { return classifier_; }

  /// Parameter blocks in a fixed order; Grads::blocks uses the same order.
  std::vector<std::span<double>> parameter_blocks();

  friend bool operator==(const ToyModel& a, const ToyModel& b);

 private:
  std::vector<ConvLayer> convs_;
  PointwiseLayer classifier_;
  std::size_t feature_tap_ = 0;
};

std::vector<std::span<const double>> grad_blocks(const ToyModel::Grads& g);

/// Momentum SGD over a fixed list of parameter blocks.
class Sgd {
 public:
  Sgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

  void step(const std::vector<std::span<double>>& params, const std::vector<std::span<const double>>& grads);

 private:
  double lr_;
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace afdcd
