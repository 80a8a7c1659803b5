#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "afdcd/partition.hpp"
#include "afdcd/tensor.hpp"

namespace afdcd {

enum class DistanceKind { L2Squared, L1, Cosine };

DistanceKind parse_distance_kind(std::string_view name);
std::string to_string(DistanceKind kind);

struct ContrastConfig {
  double tau = 0.07;
  std::size_t groups = 16;
  std::size_t patch_side = 4;
  std::size_t pool_factor = 4;
  DistanceKind distance = DistanceKind::L2Squared;
  /// false: the positive pair is excluded from the denominator (indicator 1_{i!=j}).
  bool include_positive_in_denominator = false;
  PoolCoupling pool_coupling = PoolCoupling::Independent;
};

struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 2e-5;
  double lambda3 = 5e-3;
};

struct LossBundle {
  double task = 0.0;
  double kd = 0.0;
  double fd = 0.0;
  double afdcd = 0.0;
  double total = 0.0;
  LossWeights weights;
};

struct LossAndGrad {
  double loss = 0.0;
  FeatureMap grad;
};

struct SampleLoss {
  double loss = 0.0;
  double grad_pos = 0.0;
  std::vector<double> grad_negs;
};

/// L2Squared: sum (a-b)^2. L1: sum |a-b|. Cosine: 1 - <a,b>/(|a||b|).
double distance(std::span<const double> a, std::span<const double> b, DistanceKind kind);

/// out += scale * d distance(a, b) / d a.
void accumulate_distance_grad(std::span<const double> a, std::span<const double> b, DistanceKind kind,
                              double scale, std::span<double> out);

/// Per-sample contrastive loss d_pos/tau + logsumexp(-d_negs/tau), evaluated
/// with max-subtraction.
SampleLoss contrast_sample(double d_pos, std::span<const double> d_negs, double tau,
                           bool include_positive = false);

/// Sum of squared differences over every entry; gradient is with respect to student.
LossAndGrad l_fd(const FeatureMap& teacher, const FeatureMap& student);

LossAndGrad loss_sc(const FeatureMap& student, const FeatureMap& teacher, double tau,
                    DistanceKind kind = DistanceKind::L2Squared, bool include_positive = false);

LossAndGrad loss_cc(const FeatureMap& student, const FeatureMap& teacher, std::size_t groups,
                    double tau, DistanceKind kind = DistanceKind::L2Squared,
                    bool include_positive = false);

/// Pool by q, tile into n x n patches, split into M groups, contrast every
/// fine-grained representation against the others in its patch, average over
/// the H'W'M samples. The gradient is routed back through the pooling argmax.
LossAndGrad loss_oc(const FeatureMap& student, const FeatureMap& teacher, const ContrastConfig& cfg);

/// Hinton KD: per-pixel KL(softmax(t/T) || softmax(s/T)) * T^2, averaged over pixels.
LossAndGrad loss_kd(const FeatureMap& student_logits, const FeatureMap& teacher_logits,
                    double temperature = 4.0);

/// task + lambda1*kd + lambda2*fd + lambda3*afdcd.
LossBundle total_loss(double task, double kd, double fd, double afdcd, const LossWeights& weights = {});

/// Sum of per-sample losses over every sample of `layout`. Per-sample
/// gradients (unnormalized) are added into `grad`, which has the student's
/// length. Samples are evaluated in parallel; the sum is taken in block
/// order so the result is independent of thread count.
double contrast_blocks(std::span<const double> student, std::span<const double> teacher,
                       const ContrastLayout& layout, double tau, DistanceKind kind,
                       bool include_positive, std::span<double> grad);

namespace reference {

double contrast_blocks(std::span<const double> student, std::span<const double> teacher,
                       const ContrastLayout& layout, double tau, DistanceKind kind,
                       bool include_positive, std::span<double> grad);

LossAndGrad loss_oc(const FeatureMap& student, const FeatureMap& teacher, const ContrastConfig& cfg);

}  // namespace reference

}  // namespace afdcd
