#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "afdcd/nn.hpp"
#include "afdcd/tensor.hpp"

namespace afdcd {

/// Disjoint tiling of an H x W map into patch_h x patch_w patches, row-major patch order.
struct PatchGrid {
  std::size_t map_height = 0;
  std::size_t map_width = 0;
  std::size_t patch_height = 0;
  std::size_t patch_width = 0;

  std::size_t patch_rows() const { return map_height / patch_height; }
  std::size_t patch_cols() const { return map_width / patch_width; }
  std::size_t patch_count() const { return patch_rows() * patch_cols(); }
  /// (row, col) of the top-left pixel of patch p.
  std::pair<std::size_t, std::size_t> origin(std::size_t p) const {
    return {(p / patch_cols()) * patch_height, (p % patch_cols()) * patch_width};
  }
};

PatchGrid make_patch_grid(std::size_t height, std::size_t width, std::size_t patch_height,
                          std::size_t patch_width);

/// M contiguous, equal-length channel ranges: group w is [w*len, (w+1)*len).
struct ChannelGrouping {
  std::size_t groups = 1;
  std::size_t group_len = 0;

  std::size_t begin(std::size_t w) const { return w * group_len; }
  std::size_t end(std::size_t w) const { return (w + 1) * group_len; }
};

ChannelGrouping make_channel_grouping(std::size_t channels, std::size_t groups);

struct PatchSplit {
  PatchGrid grid;
  std::vector<FeatureMap> patches;
};

struct GroupSplit {
  ChannelGrouping grouping;
  std::vector<FeatureMap> groups;
};

PatchSplit split_patches(const FeatureMap& f, std::size_t patch_height, std::size_t patch_width);
FeatureMap assemble_patches(const PatchGrid& grid, std::span<const FeatureMap> patches);

GroupSplit split_channel_groups(const FeatureMap& f, std::size_t groups);
FeatureMap concat_channel_groups(std::span<const FeatureMap> groups);

/// One channel-group slice of one pixel inside one patch.
struct FineGrainedRep {
  std::size_t patch = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t group = 0;
  std::vector<double> values;
};

FineGrainedRep fine_grained_rep(const FeatureMap& f, const PatchGrid& grid,
                                const ChannelGrouping& grouping, std::size_t patch, std::size_t row,
                                std::size_t col, std::size_t group);

/// Flat offsets of fine-grained representations, arranged into contrast
/// blocks. Every member of a block is contrasted against every other member
/// of the same block. Member order inside a block is (row, col, group) with
/// group fastest.
struct ContrastLayout {
  std::size_t blocks = 0;
  std::size_t members = 0;
  std::size_t rep_len = 0;
  std::vector<std::size_t> offsets;

  std::size_t offset(std::size_t block, std::size_t member) const { return offsets[block * members + member]; }
  std::size_t samples() const { return blocks * members; }
};

/// Blocks are patches of patch_h x patch_w pixels, each pixel split into M groups.
ContrastLayout omni_layout(std::size_t height, std::size_t width, std::size_t channels,
                           std::size_t patch_height, std::size_t patch_width, std::size_t groups);
/// One block holding every pixel; representations are whole pixel vectors.
ContrastLayout spatial_layout(std::size_t height, std::size_t width, std::size_t channels);
/// One block per pixel holding its M channel groups.
ContrastLayout channel_layout(std::size_t height, std::size_t width, std::size_t channels,
                              std::size_t groups);

enum class PoolCoupling { Independent, StudentIndices };

struct PooledPair {
  PoolResult student;
  FeatureMap teacher;
};

/// Max-pools student and teacher maps by k. With Independent coupling the
/// teacher takes its own window maxima; with StudentIndices it is sampled at
/// the student's argmax positions.
PooledPair pool_pre_reduce(const FeatureMap& student, const FeatureMap& teacher, std::size_t k,
                           PoolCoupling coupling = PoolCoupling::Independent);

struct PairCounts {
  std::uint64_t patch_side = 0;
  std::uint64_t pool_factor = 0;
  std::uint64_t samples = 0;
  std::uint64_t negatives_per_sample = 0;
  std::uint64_t distances = 0;
  std::uint64_t flops = 0;
};

inline constexpr std::uint64_t kDefaultOpsPerElement = 3;

/// Analytic count of distance evaluations made by omni-contrasting and the
/// arithmetic they cost. patch_side == pooled extent gives the unpatched case.
PairCounts pair_count_model(std::size_t height, std::size_t width, std::size_t channels,
                            std::size_t groups, std::size_t patch_side, std::size_t pool_factor,
                            std::uint64_t ops_per_element = kDefaultOpsPerElement);

}  // namespace afdcd
