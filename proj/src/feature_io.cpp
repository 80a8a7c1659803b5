#include "afdcd/feature_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace afdcd {

namespace {

static_assert(std::endian::native == std::endian::little, "feature dumps assume a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw Error("feature dump: truncated header");
  return v;
}

}  // namespace

void write_feature_dump(std::ostream& out, const FeatureMap& f) {
  out.write("AFDC", 4);
  put_u32(out, kFeatureDumpVersion);
  put_u32(out, static_cast<std::uint32_t>(f.height()));
  put_u32(out, static_cast<std::uint32_t>(f.width()));
  put_u32(out, static_cast<std::uint32_t>(f.channels()));
  out.write(reinterpret_cast<const char*>(f.values().data()),
            static_cast<std::streamsize>(f.size() * sizeof(double)));
  if (!out) throw Error("feature dump: write failed");
}

FeatureMap read_feature_dump(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || std::memcmp(magic.data(), "AFDC", 4) != 0) {
    throw Error("feature dump: bad magic");
  }
  const std::uint32_t version = get_u32(in);
  if (version != kFeatureDumpVersion) throw Error("feature dump: unsupported version " + std::to_string(version));
  const std::uint32_t h = get_u32(in);
  const std::uint32_t w = get_u32(in);
  const std::uint32_t c = get_u32(in);
  if (h == 0 || w == 0 || c == 0) throw ShapeError("feature dump: zero extent");
  std::vector<double> data(static_cast<std::size_t>(h) * w * c);
  if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)))) {
    throw Error("feature dump: truncated payload");
  }
  return FeatureMap(h, w, c, std::move(data));
}

void save_feature_dump(const std::filesystem::path& path, const FeatureMap& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_feature_dump(out, f);
}

FeatureMap load_feature_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_feature_dump(in);
}

void save_label_pgm(const std::filesystem::path& path, const LabelMap& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "P5\n" << labels.width() << ' ' << labels.height() << "\n255\n";
  for (int v : labels.values()) out.put(static_cast<char>(static_cast<unsigned char>(v)));
}

}  // namespace afdcd
