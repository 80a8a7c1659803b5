#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "afdcd/rng.hpp"
#include "afdcd/tensor.hpp"

namespace afdcd {

struct ToyDatasetSpec {
  std::size_t image_size = 32;
  std::size_t num_classes = 4;  // background + shape classes
  std::size_t train_count = 512;
  std::size_t val_count = 128;
  double noise_std = 0.05;
  std::uint64_t seed = 0;
};

enum class ShapeKind { Rectangle, Diamond, Circle };

/// A shape occupying (a subset of) its bounding box [top, top+height) x [left, left+width).
struct ShapeInstance {
  ShapeKind kind = ShapeKind::Rectangle;
  int cls = 1;
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t height = 1;
  std::size_t width = 1;
};

struct Sample {
  FeatureMap image;  // image_size x image_size x 3
  LabelMap label;
};

struct ToyDataset {
  std::vector<Sample> train;
  std::vector<Sample> val;
};

/// Shape kind drawn for class cls (1..K-1).
ShapeKind class_shape(int cls);
std::array<double, 3> class_color(int cls);

/// Background class 0 plus the given shapes, with additive Gaussian noise.
Sample render_sample(std::size_t image_size, std::span<const ShapeInstance> shapes, double noise_std, Rng& rng);

/// 1-3 non-overlapping shapes of random classes. Throws GenerationError if
/// placement fails after a bounded number of retries.
Sample gen_sample(const ToyDatasetSpec& spec, Rng& rng);

ToyDataset gen_toy_dataset(const ToyDatasetSpec& spec, Rng& rng);
ToyDataset gen_toy_dataset(const ToyDatasetSpec& spec);

/// Pixel count per class over a set of samples (ignore-index excluded).
std::vector<std::uint64_t> class_histogram(std::span<const Sample> samples, std::size_t num_classes);

}  // namespace afdcd
