#include "afdcd/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <string>

namespace afdcd {

namespace {

std::size_t checked_extent(const std::vector<std::size_t>& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw ShapeError("tensor rank must be 1..4, got " + std::to_string(shape.size()));
  }
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive");
  }
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(checked_extent(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_extent(shape_) != data_.size()) {
    throw ShapeError("tensor data length does not match shape");
  }
}

FeatureMap::FeatureMap(std::size_t height, std::size_t width, std::size_t channels, double fill)
    : h_(height), w_(width), c_(channels), data_(height * width * channels, fill) {
  if (height == 0 || width == 0 || channels == 0) throw ShapeError("feature map extents must be positive");
}

FeatureMap::FeatureMap(std::size_t height, std::size_t width, std::size_t channels,
                       std::vector<double> data)
    : h_(height), w_(width), c_(channels), data_(std::move(data)) {
  if (height == 0 || width == 0 || channels == 0) throw ShapeError("feature map extents must be positive");
  if (data_.size() != height * width * channels) {
    throw ShapeError("feature map data length does not match extents");
  }
}

LabelMap::LabelMap(std::size_t height, std::size_t width, std::vector<int> data)
    : h_(height), w_(width), data_(std::move(data)) {
  if (data_.size() != height * width) throw ShapeError("label map data length does not match extents");
}

void require_finite(std::span<const double> values, std::string_view what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string(what) + ": non-finite value at index " + std::to_string(i));
    }
  }
}

FeatureMap stack_rows(std::span<const FeatureMap> maps) {
  if (maps.empty()) throw ShapeError("stack_rows: no maps");
  const std::size_t w = maps.front().width();
  const std::size_t c = maps.front().channels();
  std::size_t h = 0;
  std::vector<double> data;
  for (const auto& m : maps) {
    if (m.width() != w || m.channels() != c) throw ShapeError("stack_rows: width/channel mismatch");
    h += m.height();
    data.insert(data.end(), m.values().begin(), m.values().end());
  }
  return FeatureMap(h, w, c, std::move(data));
}

}  // namespace afdcd
