#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "afdcd/errors.hpp"

namespace afdcd {

/// Dense row-major double array of rank 1 to 4. Used for parameters
/// (conv kernels, biases, pointwise weights).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// H x W x C feature map, channel index fastest.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0);
  FeatureMap(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> data);

  std::size_t height() const { return h_; }
  std::size_t width() const { return w_; }
  std::size_t channels() const { return c_; }
  std::size_t pixels() const { return h_ * w_; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(std::size_t y, std::size_t x, std::size_t c) const { return (y * w_ + x) * c_ + c; }

  double& at(std::size_t y, std::size_t x, std::size_t c) { return data_[index(y, x, c)]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const { return data_[index(y, x, c)]; }

  double* pixel(std::size_t y, std::size_t x) { return data_.data() + (y * w_ + x) * c_; }
  const double* pixel(std::size_t y, std::size_t x) const { return data_.data() + (y * w_ + x) * c_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool congruent(const FeatureMap& other) const {
    return h_ == other.h_ && w_ == other.w_ && c_ == other.c_;
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::size_t c_ = 0;
  std::vector<double> data_;
};

inline constexpr int kIgnoreLabel = 255;

/// H x W integer class map. kIgnoreLabel marks pixels excluded from losses and metrics.
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(std::size_t height, std::size_t width, int fill = 0)
      : h_(height), w_(width), data_(height * width, fill) {}
  LabelMap(std::size_t height, std::size_t width, std::vector<int> data);

  std::size_t height() const { return h_; }
  std::size_t width() const { return w_; }
  std::size_t size() const { return data_.size(); }

  int& at(std::size_t y, std::size_t x) { return data_[y * w_ + x]; }
  int at(std::size_t y, std::size_t x) const { return data_[y * w_ + x]; }
  int operator[](std::size_t i) const { return data_[i]; }
  int& operator[](std::size_t i) { return data_[i]; }

  std::span<const int> values() const { return data_; }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;

 private:
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::vector<int> data_;
};

/// Throws NumericError naming `what` if any value is NaN or infinite.
void require_finite(std::span<const double> values, std::string_view what);

/// Stacks maps of equal width and channel count along the height axis.
FeatureMap stack_rows(std::span<const FeatureMap> maps);

}  // namespace afdcd
