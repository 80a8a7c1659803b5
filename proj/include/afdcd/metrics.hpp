#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "afdcd/rng.hpp"
#include "afdcd/tensor.hpp"

namespace afdcd {

inline constexpr std::size_t kHistogramBins = 64;

struct DistanceHistogram {
  std::vector<double> bin_edges;  // kHistogramBins + 1 ascending edges over [0, max]
  std::vector<std::uint64_t> counts;
  // Accumulated and kept in extended precision; the variance of wide
  // distance distributions is otherwise resolved only to a double ulp.
  long double mean = 0.0L;
  long double variance = 0.0L;
  std::size_t sample_count = 0;
};

/// 64 uniform bins over [0, max(distances)], population mean and variance.
DistanceHistogram make_histogram(std::span<const double> distances);

/// Full population if it has at most 1e6 members, otherwise 1e4 samples.
std::size_t default_sample_count(std::uint64_t population);

/// L2Squared distance between every matching student/teacher fine-grained
/// pair (same pixel, same group), in (pixel, group) order.
std::vector<double> ts_distances(const FeatureMap& student, const FeatureMap& teacher, std::size_t groups);

/// Histogram of `sample_count` matching-pair distances drawn without replacement.
DistanceHistogram ts_distance_stats(const FeatureMap& student, const FeatureMap& teacher, std::size_t groups,
                                    std::size_t sample_count, Rng& rng);

std::uint64_t self_similarity_population(const FeatureMap& f, std::size_t window, std::size_t groups);

/// L2Squared distance of every unordered pair of distinct fine-grained
/// representations inside each window x window area, in window order.
std::vector<double> self_similarity_distances(const FeatureMap& f, std::size_t window, std::size_t groups);

DistanceHistogram self_similarity_stats(const FeatureMap& f, std::size_t window, std::size_t groups,
                                        std::size_t sample_count, Rng& rng);

/// `bin_lo,bin_hi,count` rows followed by a `mean,variance,n` summary.
void write_histogram_csv(std::ostream& out, const DistanceHistogram& hist);

struct MiouResult {
  std::vector<std::optional<double>> per_class;  // nullopt where the class has empty union
  double miou = 0.0;
};

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  /// Ignore-index label pixels are skipped.
  void add(const LabelMap& pred, const LabelMap& label);

  std::size_t num_classes() const { return k_; }
  std::uint64_t count(std::size_t truth, std::size_t predicted) const { return counts_[truth * k_ + predicted]; }

  MiouResult result() const;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

MiouResult miou(const LabelMap& pred, const LabelMap& label, std::size_t num_classes);

}  // namespace afdcd
