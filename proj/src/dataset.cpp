#include "afdcd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace afdcd {

namespace {

constexpr int kPlacementRetries = 200;

bool boxes_overlap(const ShapeInstance& a, const ShapeInstance& b) {
  return a.top < b.top + b.height && b.top < a.top + a.height && a.left < b.left + b.width &&
         b.left < a.left + a.width;
}

bool inside(const ShapeInstance& s, std::size_t y, std::size_t x) {
  if (y < s.top || y >= s.top + s.height || x < s.left || x >= s.left + s.width) return false;
  const double cy = static_cast<double>(s.top) + (static_cast<double>(s.height) - 1.0) / 2.0;
  const double cx = static_cast<double>(s.left) + (static_cast<double>(s.width) - 1.0) / 2.0;
  const double ry = static_cast<double>(s.height) / 2.0;
  const double rx = static_cast<double>(s.width) / 2.0;
  const double dy = (static_cast<double>(y) - cy) / ry;
  const double dx = (static_cast<double>(x) - cx) / rx;
  switch (s.kind) {
    case ShapeKind::Rectangle: return true;
    case ShapeKind::Diamond: return std::abs(dy) + std::abs(dx) <= 1.0;
    case ShapeKind::Circle: return dy * dy + dx * dx <= 1.0;
  }
  return false;
}

}  // namespace

ShapeKind class_shape(int cls) {
  switch ((cls - 1) % 3) {
    case 0: return ShapeKind::Rectangle;
    case 1: return ShapeKind::Diamond;
    default: return ShapeKind::Circle;
  }
}

std::array<double, 3> class_color(int cls) {
  static constexpr std::array<std::array<double, 3>, 4> kPalette{{
      {0.20, 0.20, 0.20},
      {0.90, 0.20, 0.20},
      {0.20, 0.80, 0.30},
      {0.25, 0.35, 0.90},
  }};
  if (cls >= 0 && cls < static_cast<int>(kPalette.size())) return kPalette[static_cast<std::size_t>(cls)];
  // Further classes walk the hue circle.
  const double hue = std::fmod(0.618033988749895 * cls, 1.0) * 6.0;
  const double f = hue - std::floor(hue);
  switch (static_cast<int>(hue)) {
    case 0: return {0.9, 0.2 + 0.7 * f, 0.2};
    case 1: return {0.9 - 0.7 * f, 0.9, 0.2};
    case 2: return {0.2, 0.9, 0.2 + 0.7 * f};
    case 3: return {0.2, 0.9 - 0.7 * f, 0.9};
    case 4: return {0.2 + 0.7 * f, 0.2, 0.9};
    default: return {0.9, 0.2, 0.9 - 0.7 * f};
  }
}

Sample render_sample(std::size_t image_size, std::span<const ShapeInstance> shapes, double noise_std, Rng& rng) {
  Sample s{FeatureMap(image_size, image_size, 3), LabelMap(image_size, image_size, 0)};
  for (const auto& shape : shapes) {
    if (shape.top + shape.height > image_size || shape.left + shape.width > image_size) {
      throw GenerationError("shape extends outside the image");
    }
    for (std::size_t y = shape.top; y < shape.top + shape.height; ++y)
      for (std::size_t x = shape.left; x < shape.left + shape.width; ++x)
        if (inside(shape, y, x)) s.label.at(y, x) = shape.cls;
  }
  for (std::size_t y = 0; y < image_size; ++y)
    for (std::size_t x = 0; x < image_size; ++x) {
      const auto color = class_color(s.label.at(y, x));
      for (std::size_t c = 0; c < 3; ++c) {
        s.image.at(y, x, c) = color[c] + (noise_std > 0.0 ? noise_std * rng.normal() : 0.0);
      }
    }
  return s;
}

Sample gen_sample(const ToyDatasetSpec& spec, Rng& rng) {
  const std::size_t size = spec.image_size;
  const std::size_t min_side = std::max<std::size_t>(3, size / 5);
  const std::size_t max_side = std::max(min_side, size / 2);
  const std::size_t count = 1 + rng.below(3);
  std::vector<ShapeInstance> shapes;
  for (std::size_t n = 0; n < count; ++n) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
      ShapeInstance s;
      s.cls = 1 + static_cast<int>(rng.below(spec.num_classes - 1));
      s.kind = class_shape(s.cls);
      s.height = min_side + rng.below(max_side - min_side + 1);
      s.width = min_side + rng.below(max_side - min_side + 1);
      s.top = rng.below(size - s.height + 1);
      s.left = rng.below(size - s.width + 1);
      if (std::none_of(shapes.begin(), shapes.end(), [&](const auto& o) { return boxes_overlap(s, o); })) {
        shapes.push_back(s);
        placed = true;
      }
    }
    if (!placed) throw GenerationError("could not place shape " + std::to_string(n) + " without overlap");
  }
  return render_sample(size, shapes, spec.noise_std, rng);
}

ToyDataset gen_toy_dataset(const ToyDatasetSpec& spec, Rng& rng) {
  if (spec.num_classes < 2 || spec.num_classes > 255) throw ParameterError("num_classes must be in [2, 255]");
  if (spec.image_size < 8) throw ParameterError("image_size must be at least 8");
  if (spec.train_count == 0) throw ParameterError("train_count must be positive");
  if (!(spec.noise_std >= 0.0)) throw ParameterError("noise_std must be non-negative");
  ToyDataset d;
  d.train.reserve(spec.train_count);
  d.val.reserve(spec.val_count);
  for (std::size_t i = 0; i < spec.train_count; ++i) d.train.push_back(gen_sample(spec, rng));
  for (std::size_t i = 0; i < spec.val_count; ++i) d.val.push_back(gen_sample(spec, rng));
  const auto hist = class_histogram(d.train, spec.num_classes);
  for (std::size_t c = 0; c < hist.size(); ++c) {
    if (hist[c] == 0) throw GenerationError("class " + std::to_string(c) + " absent from the training set");
  }
  return d;
}

ToyDataset gen_toy_dataset(const ToyDatasetSpec& spec) {
  Rng rng(spec.seed);
  return gen_toy_dataset(spec, rng);
}

std::vector<std::uint64_t> class_histogram(std::span<const Sample> samples, std::size_t num_classes) {
  std::vector<std::uint64_t> hist(num_classes, 0);
  for (const auto& s : samples)
    for (int v : s.label.values())
      if (v != kIgnoreLabel && v >= 0 && static_cast<std::size_t>(v) < num_classes) ++hist[static_cast<std::size_t>(v)];
  return hist;
}

}  // namespace afdcd
