#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "afdcd/tensor.hpp"

namespace afdcd {

inline constexpr std::uint32_t kFeatureDumpVersion = 1;

// Layout, little-endian:
//   "AFDC" | version u32 | H u32 | W u32 | C u32 | H*W*C float64, row-major (channel fastest)
void write_feature_dump(std::ostream& out, const FeatureMap& f);
FeatureMap read_feature_dump(std::istream& in);

void save_feature_dump(const std::filesystem::path& path, const FeatureMap& f);
FeatureMap load_feature_dump(const std::filesystem::path& path);

/// Binary PGM (P5) of a label map, one byte per pixel.
void save_label_pgm(const std::filesystem::path& path, const LabelMap& labels);

}  // namespace afdcd
