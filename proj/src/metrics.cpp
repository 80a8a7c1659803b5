#include "afdcd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <unordered_set>

#include "afdcd/partition.hpp"

namespace afdcd {

namespace {

double sq_dist(const double* a, const double* b, std::size_t len) {
  double s = 0.0;
  for (std::size_t e = 0; e < len; ++e) s += (a[e] - b[e]) * (a[e] - b[e]);
  return s;
}

// Neumaier-compensated running sum in extended precision.
class CompensatedSum {
 public:
  void add(long double v) {
    const long double t = sum_ + v;
    comp_ += std::abs(sum_) >= std::abs(v) ? (sum_ - t) + v : (v - t) + sum_;
    sum_ = t;
  }
  long double value() const { return sum_ + comp_; }

 private:
  long double sum_ = 0.0L;
  long double comp_ = 0.0L;
};

// Floyd's algorithm; returns ascending indices.
std::vector<std::uint64_t> sample_indices(std::uint64_t population, std::size_t count, Rng& rng) {
  if (count > population) {
    throw ParameterError("sample count " + std::to_string(count) + " exceeds population " +
                         std::to_string(population));
  }
  std::vector<std::uint64_t> out;
  if (count == population) {
    out.resize(population);
    for (std::uint64_t i = 0; i < population; ++i) out[i] = i;
    return out;
  }
  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(count * 2);
  for (std::uint64_t j = population - count; j < population; ++j) {
    const std::uint64_t t = rng.below(j + 1);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  out.assign(chosen.begin(), chosen.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

DistanceHistogram make_histogram(std::span<const double> distances) {
  DistanceHistogram h;
  h.sample_count = distances.size();
  h.counts.assign(kHistogramBins, 0);
  double max = 0.0;
  CompensatedSum sum;
  for (double d : distances) {
    max = std::max(max, d);
    sum.add(d);
  }
  h.bin_edges.resize(kHistogramBins + 1);
  for (std::size_t b = 0; b <= kHistogramBins; ++b) {
    h.bin_edges[b] = max * static_cast<double>(b) / static_cast<double>(kHistogramBins);
  }
  if (distances.empty()) return h;
  const auto n = static_cast<long double>(distances.size());
  h.mean = sum.value() / n;
  CompensatedSum sq;
  for (double d : distances) {
    const long double dev = d - h.mean;
    sq.add(dev * dev);
    std::size_t bin = 0;
    if (max > 0.0) {
      bin = std::min(kHistogramBins - 1, static_cast<std::size_t>(d / max * static_cast<double>(kHistogramBins)));
    }
    ++h.counts[bin];
  }
  h.variance = sq.value() / n;
  return h;
}

std::size_t default_sample_count(std::uint64_t population) {
  return population <= 1'000'000 ? static_cast<std::size_t>(population) : 10'000;
}

std::vector<double> ts_distances(const FeatureMap& student, const FeatureMap& teacher, std::size_t groups) {
  if (!student.congruent(teacher)) throw ShapeError("ts_distances: shapes differ");
  const ChannelGrouping g = make_channel_grouping(student.channels(), groups);
  std::vector<double> out;
  out.reserve(student.pixels() * groups);
  for (std::size_t p = 0; p < student.pixels(); ++p)
    for (std::size_t k = 0; k < groups; ++k) {
      const std::size_t off = p * student.channels() + g.begin(k);
      out.push_back(sq_dist(student.values().data() + off, teacher.values().data() + off, g.group_len));
    }
  return out;
}

DistanceHistogram ts_distance_stats(const FeatureMap& student, const FeatureMap& teacher, std::size_t groups,
                                    std::size_t sample_count, Rng& rng) {
  if (!student.congruent(teacher)) throw ShapeError("ts_distance_stats: shapes differ");
  const ChannelGrouping g = make_channel_grouping(student.channels(), groups);
  const std::uint64_t population = student.pixels() * groups;
  const auto picks = sample_indices(population, sample_count, rng);
  std::vector<double> d;
  d.reserve(picks.size());
  for (std::uint64_t n : picks) {
    const std::size_t off = (n / groups) * student.channels() + g.begin(n % groups);
    d.push_back(sq_dist(student.values().data() + off, teacher.values().data() + off, g.group_len));
  }
  return make_histogram(d);
}

std::uint64_t self_similarity_population(const FeatureMap& f, std::size_t window, std::size_t groups) {
  const PatchGrid grid = make_patch_grid(f.height(), f.width(), window, window);
  make_channel_grouping(f.channels(), groups);
  const std::uint64_t k = window * window * groups;
  return grid.patch_count() * (k * (k - 1) / 2);
}

std::vector<double> self_similarity_distances(const FeatureMap& f, std::size_t window, std::size_t groups) {
  const ContrastLayout layout = omni_layout(f.height(), f.width(), f.channels(), window, window, groups);
  std::vector<double> out;
  out.reserve(self_similarity_population(f, window, groups));
  for (std::size_t b = 0; b < layout.blocks; ++b)
    for (std::size_t a = 0; a < layout.members; ++a)
      for (std::size_t c = a + 1; c < layout.members; ++c)
        out.push_back(sq_dist(f.values().data() + layout.offset(b, a), f.values().data() + layout.offset(b, c),
                              layout.rep_len));
  return out;
}

DistanceHistogram self_similarity_stats(const FeatureMap& f, std::size_t window, std::size_t groups,
                                        std::size_t sample_count, Rng& rng) {
  const ContrastLayout layout = omni_layout(f.height(), f.width(), f.channels(), window, window, groups);
  const std::uint64_t k = layout.members;
  const std::uint64_t per_window = k * (k - 1) / 2;
  const auto picks = sample_indices(layout.blocks * per_window, sample_count, rng);

  // first_pair[a]: index of pair (a, a+1) among the window's pairs.
  std::vector<std::uint64_t> first_pair(k);
  for (std::uint64_t a = 0, acc = 0; a < k; ++a) {
    first_pair[a] = acc;
    acc += k - 1 - a;
  }
  std::vector<double> d;
  d.reserve(picks.size());
  for (std::uint64_t n : picks) {
    const std::size_t b = n / per_window;
    const std::uint64_t r = n % per_window;
    const auto it = std::upper_bound(first_pair.begin(), first_pair.end(), r);
    const std::uint64_t a = static_cast<std::uint64_t>(it - first_pair.begin()) - 1;
    const std::uint64_t c = a + 1 + (r - first_pair[a]);
    d.push_back(sq_dist(f.values().data() + layout.offset(b, a), f.values().data() + layout.offset(b, c),
                        layout.rep_len));
  }
  return make_histogram(d);
}

void write_histogram_csv(std::ostream& out, const DistanceHistogram& hist) {
  const auto old_precision = out.precision(17);
  out << "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < hist.counts.size(); ++b) {
    out << hist.bin_edges[b] << ',' << hist.bin_edges[b + 1] << ',' << hist.counts[b] << '\n';
  }
  out << "mean,variance,n\n" << static_cast<double>(hist.mean) << ',' << static_cast<double>(hist.variance) << ',' << hist.sample_count << '\n';
  out.precision(old_precision);
}

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : k_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw ParameterError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(const LabelMap& pred, const LabelMap& label) {
  if (pred.height() != label.height() || pred.width() != label.width()) {
    throw ShapeError("confusion matrix: prediction and label extents differ");
  }
  const int k = static_cast<int>(k_);
  for (std::size_t i = 0; i < label.size(); ++i) {
    const int t = label[i];
    if (t == kIgnoreLabel) continue;
    const int p = pred[i];
    if (t < 0 || t >= k) throw ParameterError("label value " + std::to_string(t) + " out of range");
    if (p < 0 || p >= k) throw ParameterError("predicted value " + std::to_string(p) + " out of range");
    ++counts_[static_cast<std::size_t>(t) * k_ + static_cast<std::size_t>(p)];
  }
}

MiouResult ConfusionMatrix::result() const {
  MiouResult r;
  r.per_class.resize(k_);
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < k_; ++c) {
    std::uint64_t row = 0;
    std::uint64_t col = 0;
    for (std::size_t o = 0; o < k_; ++o) {
      row += count(c, o);
      col += count(o, c);
    }
    const std::uint64_t tp = count(c, c);
    const std::uint64_t uni = row + col - tp;  // TP + FN + FP
    if (uni == 0) continue;
    r.per_class[c] = static_cast<double>(tp) / static_cast<double>(uni);
    sum += *r.per_class[c];
    ++present;
  }
  if (present == 0) throw UndefinedResultError("mIoU undefined: every class has an empty union");
  r.miou = sum / static_cast<double>(present);
  return r;
}

MiouResult miou(const LabelMap& pred, const LabelMap& label, std::size_t num_classes) {
  ConfusionMatrix cm(num_classes);
  cm.add(pred, label);
  return cm.result();
}

}  // namespace afdcd
