#include "afdcd/model.hpp"

#include <algorithm>
#include <cmath>

namespace afdcd {

ToyModel ToyModel::create(const ModelSpec& spec, Rng& rng) {
  if (spec.layers == 0 || spec.channels == 0 || spec.in_channels == 0 || spec.num_classes < 2) {
    throw ParameterError("toy model needs at least one layer, one channel and two classes");
  }
  ToyModel m;
  std::size_t in = spec.in_channels;
  for (std::size_t l = 0; l < spec.layers; ++l) {
    ConvLayer layer(spec.channels, in);
    // Kaiming-uniform bound for ReLU layers.
    const double bound = std::sqrt(6.0 / (9.0 * static_cast<double>(in)));
    for (double& w : layer.kernel.values()) w = rng.uniform(-bound, bound);
    m.convs_.push_back(std::move(layer));
    in = spec.channels;
  }
  m.classifier_ = PointwiseLayer(spec.num_classes, spec.channels);
  const double bound = std::sqrt(1.0 / static_cast<double>(spec.channels));
  for (double& w : m.classifier_.weight.values()) w = rng.uniform(-bound, bound);
  m.feature_tap_ = spec.layers - 1;
  return m;
}

ToyModel::Trace ToyModel::forward(const FeatureMap& image) const {
  Trace t;
  FeatureMap x = image;
  for (const auto& layer : convs_) {
    t.inputs.push_back(x);
    t.pre.push_back(conv2d(x, layer));
    x = relu(t.pre.back());
  }
  t.top = std::move(x);
  t.logits = pointwise(t.top, classifier_);
  return t;
}

FeatureMap ToyModel::features(const FeatureMap& image) const {
  Trace t = forward(image);
  return t.feature(feature_tap_);
}

LabelMap ToyModel::predict(const FeatureMap& image) const {
  const FeatureMap logits = forward(image).logits;
  LabelMap out(logits.height(), logits.width());
  const std::size_t k_n = logits.channels();
  for (std::size_t p = 0; p < logits.pixels(); ++p) {
    const double* z = logits.values().data() + p * k_n;
    out[p] = static_cast<int>(std::max_element(z, z + k_n) - z);
  }
  return out;
}

ToyModel::Grads ToyModel::backward(const Trace& trace, const FeatureMap& d_logits, const FeatureMap* d_feature) const {
  Grads g;
  g.convs.resize(convs_.size());
  PointwiseGrads head = pointwise_grad(trace.top, classifier_, d_logits);
  g.classifier = PointwiseLayer();
  g.classifier.weight = std::move(head.weight);
  g.classifier.bias = std::move(head.bias);

  FeatureMap upstream = std::move(head.input);  // gradient w.r.t. post-ReLU output of layer l
  for (std::size_t l = convs_.size(); l-- > 0;) {
    if (d_feature != nullptr && l == feature_tap_) {
      if (!d_feature->congruent(upstream)) throw ShapeError("feature gradient shape mismatch");
      for (std::size_t i = 0; i < upstream.size(); ++i) upstream[i] += (*d_feature)[i];
    }
    const FeatureMap d_pre = relu_grad(trace.pre[l], upstream);
    ConvGrads cg = conv2d_grad(trace.inputs[l], convs_[l], d_pre);
    g.convs[l] = ConvLayer(std::move(cg.kernel), std::move(cg.bias));
    upstream = std::move(cg.input);
  }
  return g;
}

std::vector<std::span<double>> ToyModel::parameter_blocks() {
  std::vector<std::span<double>> blocks;
  for (auto& layer : convs_) {
    blocks.push_back(layer.kernel.values());
    blocks.push_back(layer.bias.values());
  }
  blocks.push_back(classifier_.weight.values());
  blocks.push_back(classifier_.bias.values());
  return blocks;
}

bool operator==(const ToyModel& a, const ToyModel& b) {
  if (a.convs_.size() != b.convs_.size() || a.feature_tap_ != b.feature_tap_) return false;
  for (std::size_t l = 0; l < a.convs_.size(); ++l) {
    if (a.convs_[l].kernel != b.convs_[l].kernel || a.convs_[l].bias != b.convs_[l].bias) return false;
  }
  return a.classifier_.weight == b.classifier_.weight && a.classifier_.bias == b.classifier_.bias;
}

std::vector<std::span<const double>> grad_blocks(const ToyModel::Grads& g) {
  std::vector<std::span<const double>> blocks;
  for (const auto& layer : g.convs) {
    blocks.push_back(layer.kernel.values());
    blocks.push_back(layer.bias.values());
  }
  blocks.push_back(g.classifier.weight.values());
  blocks.push_back(g.classifier.bias.values());
  return blocks;
}

void Sgd::step(const std::vector<std::span<double>>& params, const std::vector<std::span<const double>>& grads) {
  if (params.size() != grads.size()) throw ShapeError("Sgd::step: parameter and gradient block counts differ");
  if (velocity_.empty()) {
    for (const auto& p : params) velocity_.emplace_back(p.size(), 0.0);
  }
  if (velocity_.size() != params.size()) throw ShapeError("Sgd::step: parameter block count changed");
  for (std::size_t b = 0; b < params.size(); ++b) sgd_step(params[b], grads[b], velocity_[b], lr_, momentum_);
}

}  // namespace afdcd
