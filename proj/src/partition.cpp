#include "afdcd/partition.hpp"

#include <string>

namespace afdcd {

namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r = 0;
  if (__builtin_mul_overflow(a, b, &r)) throw ParameterError("pair_count_model: count overflows 64 bits");
  return r;
}

}  // namespace

PatchGrid make_patch_grid(std::size_t height, std::size_t width, std::size_t patch_height,
                          std::size_t patch_width) {
  if (patch_height == 0 || patch_width == 0) throw ShapeError("patch extents must be positive");
  if (height % patch_height != 0 || width % patch_width != 0) {
    throw ShapeError("patch " + std::to_string(patch_height) + "x" + std::to_string(patch_width) +
                     " does not tile " + std::to_string(height) + "x" + std::to_string(width));
  }
  return PatchGrid{height, width, patch_height, patch_width};
}

ChannelGrouping make_channel_grouping(std::size_t channels, std::size_t groups) {
  if (groups == 0 || channels % groups != 0) {
    throw ShapeError(std::to_string(groups) + " channel groups do not divide " +
                     std::to_string(channels) + " channels");
  }
  return ChannelGrouping{groups, channels / groups};
}

PatchSplit split_patches(const FeatureMap& f, std::size_t patch_height, std::size_t patch_width) {
  PatchSplit s{make_patch_grid(f.height(), f.width(), patch_height, patch_width), {}};
  const std::size_t c_n = f.channels();
  s.patches.reserve(s.grid.patch_count());
  for (std::size_t p = 0; p < s.grid.patch_count(); ++p) {
    const auto [y0, x0] = s.grid.origin(p);
    FeatureMap patch(patch_height, patch_width, c_n);
    for (std::size_t i = 0; i < patch_height; ++i)
      for (std::size_t j = 0; j < patch_width; ++j) {
        const double* src = f.pixel(y0 + i, x0 + j);
        std::copy(src, src + c_n, patch.pixel(i, j));
      }
    s.patches.push_back(std::move(patch));
  }
  return s;
}

FeatureMap assemble_patches(const PatchGrid& grid, std::span<const FeatureMap> patches) {
  if (patches.size() != grid.patch_count()) throw ShapeError("assemble_patches: wrong patch count");
  const std::size_t c_n = patches.front().channels();
  FeatureMap f(grid.map_height, grid.map_width, c_n);
  for (std::size_t p = 0; p < patches.size(); ++p) {
    const FeatureMap& patch = patches[p];
    if (patch.height() != grid.patch_height || patch.width() != grid.patch_width ||
        patch.channels() != c_n) {
      throw ShapeError("assemble_patches: patch extents mismatch");
    }
    const auto [y0, x0] = grid.origin(p);
    for (std::size_t i = 0; i < grid.patch_height; ++i)
      for (std::size_t j = 0; j < grid.patch_width; ++j) {
        const double* src = patch.pixel(i, j);
        std::copy(src, src + c_n, f.pixel(y0 + i, x0 + j));
      }
  }
  return f;
}

GroupSplit split_channel_groups(const FeatureMap& f, std::size_t groups) {
  GroupSplit s{make_channel_grouping(f.channels(), groups), {}};
  const std::size_t len = s.grouping.group_len;
  for (std::size_t w = 0; w < groups; ++w) {
    FeatureMap g(f.height(), f.width(), len);
    for (std::size_t p = 0; p < f.pixels(); ++p) {
      const double* src = f.values().data() + p * f.channels() + s.grouping.begin(w);
      std::copy(src, src + len, g.values().data() + p * len);
    }
    s.groups.push_back(std::move(g));
  }
  return s;
}

FeatureMap concat_channel_groups(std::span<const FeatureMap> groups) {
  if (groups.empty()) throw ShapeError("concat_channel_groups: no groups");
  const FeatureMap& first = groups.front();
  const std::size_t len = first.channels();
  for (const auto& g : groups) {
    if (!g.congruent(first)) throw ShapeError("concat_channel_groups: groups differ in shape");
  }
  FeatureMap f(first.height(), first.width(), len * groups.size());
  for (std::size_t w = 0; w < groups.size(); ++w)
    for (std::size_t p = 0; p < first.pixels(); ++p) {
      const double* src = groups[w].values().data() + p * len;
      std::copy(src, src + len, f.values().data() + p * f.channels() + w * len);
    }
  return f;
}

FineGrainedRep fine_grained_rep(const FeatureMap& f, const PatchGrid& grid,
                                const ChannelGrouping& grouping, std::size_t patch, std::size_t row,
                                std::size_t col, std::size_t group) {
  if (patch >= grid.patch_count() || row >= grid.patch_height || col >= grid.patch_width ||
      group >= grouping.groups) {
    throw ShapeError("fine_grained_rep: index out of range");
  }
  const auto [y0, x0] = grid.origin(patch);
  const double* px = f.pixel(y0 + row, x0 + col);
  return FineGrainedRep{patch, row, col, group,
                        std::vector<double>(px + grouping.begin(group), px + grouping.end(group))};
}

ContrastLayout omni_layout(std::size_t height, std::size_t width, std::size_t channels,
                           std::size_t patch_height, std::size_t patch_width, std::size_t groups) {
  const PatchGrid grid = make_patch_grid(height, width, patch_height, patch_width);
  const ChannelGrouping grouping = make_channel_grouping(channels, groups);
  ContrastLayout layout{grid.patch_count(), patch_height * patch_width * groups, grouping.group_len, {}};
  layout.offsets.reserve(layout.samples());
  for (std::size_t p = 0; p < grid.patch_count(); ++p) {
    const auto [y0, x0] = grid.origin(p);
    for (std::size_t i = 0; i < patch_height; ++i)
      for (std::size_t j = 0; j < patch_width; ++j)
        for (std::size_t k = 0; k < groups; ++k)
          layout.offsets.push_back(((y0 + i) * width + (x0 + j)) * channels + grouping.begin(k));
  }
  return layout;
}

ContrastLayout spatial_layout(std::size_t height, std::size_t width, std::size_t channels) {
  return omni_layout(height, width, channels, height, width, 1);
}

ContrastLayout channel_layout(std::size_t height, std::size_t width, std::size_t channels,
                              std::size_t groups) {
  return omni_layout(height, width, channels, 1, 1, groups);
}

PooledPair pool_pre_reduce(const FeatureMap& student, const FeatureMap& teacher, std::size_t k,
                           PoolCoupling coupling) {
  if (!student.congruent(teacher)) throw ShapeError("pool_pre_reduce: student and teacher shapes differ");
  PooledPair r{max_pool(student, k), FeatureMap()};
  if (coupling == PoolCoupling::Independent) {
    r.teacher = max_pool(teacher, k).output;
  } else {
    r.teacher = FeatureMap(r.student.output.height(), r.student.output.width(), teacher.channels());
    for (std::size_t i = 0; i < r.teacher.size(); ++i) r.teacher[i] = teacher[r.student.argmax[i]];
  }
  return r;
}

PairCounts pair_count_model(std::size_t height, std::size_t width, std::size_t channels,
                            std::size_t groups, std::size_t patch_side, std::size_t pool_factor,
                            std::uint64_t ops_per_element) {
  if (pool_factor == 0 || height % pool_factor != 0 || width % pool_factor != 0) {
    throw ShapeError("pair_count_model: pool factor must divide the map extents");
  }
  const std::size_t ph = height / pool_factor;
  const std::size_t pw = width / pool_factor;
  make_patch_grid(ph, pw, patch_side, patch_side);
  const ChannelGrouping grouping = make_channel_grouping(channels, groups);

  PairCounts r;
  r.patch_side = patch_side;
  r.pool_factor = pool_factor;
  r.samples = checked_mul(checked_mul(ph, pw), groups);
  const std::uint64_t block = checked_mul(checked_mul(patch_side, patch_side), groups);
  r.negatives_per_sample = block - 1;
  r.distances = checked_mul(r.samples, block);
  r.flops = checked_mul(checked_mul(r.distances, ops_per_element), grouping.group_len);
  return r;
}

}  // namespace afdcd
