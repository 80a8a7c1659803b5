#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "afdcd/losses.hpp"
#include "afdcd/nn.hpp"
#include "afdcd/tensor.hpp"

// Brute-force references. Nothing here calls into the optimized kernels
// (nn, partition, losses); only their data types are shared.
namespace afdcd::oracle {

struct FiniteDiffSpec {
  double epsilon = 1e-5;
  double tolerance = 1e-5;
};

/// Literal nested-loop omni-contrasting loss, including the pooling step,
/// evaluated in long double.
double oc_bruteforce(const FeatureMap& student, const FeatureMap& teacher, const ContrastConfig& cfg);

/// Every pixel contrasted against all other pixels of the map.
double sc_bruteforce(const FeatureMap& student, const FeatureMap& teacher, double tau, DistanceKind kind,
                     bool include_positive = false);

/// Every channel group contrasted against the other groups of the same pixel.
double cc_bruteforce(const FeatureMap& student, const FeatureMap& teacher, std::size_t groups, double tau,
                     DistanceKind kind, bool include_positive = false);

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every coordinate.
std::vector<double> grad_finite_diff(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, const FiniteDiffSpec& spec = {});

FeatureMap grad_finite_diff(const std::function<double(const FeatureMap&)>& f, const FeatureMap& x,
                            const FiniteDiffSpec& spec = {});

/// Central differences of the contrastive losses with respect to the student,
/// evaluated in quad precision so that exact-zero gradient entries are resolved
/// below the relative-error floor. Perturbing one coordinate only changes the
/// terms of its own patch, so only that patch is re-summed. The divisor is the
/// realized step (x + eps) - (x - eps).
FeatureMap oc_grad_fd(const FeatureMap& student, const FeatureMap& teacher, const ContrastConfig& cfg,
                      const FiniteDiffSpec& spec = {});
FeatureMap sc_grad_fd(const FeatureMap& student, const FeatureMap& teacher, double tau, DistanceKind kind,
                      bool include_positive = false, const FiniteDiffSpec& spec = {});
FeatureMap cc_grad_fd(const FeatureMap& student, const FeatureMap& teacher, std::size_t groups, double tau,
                      DistanceKind kind, bool include_positive = false, const FiniteDiffSpec& spec = {});

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, 1e-8).
double max_relative_error(std::span<const double> a, std::span<const double> b);

FeatureMap conv_bruteforce(const FeatureMap& input, const ConvLayer& layer);

/// Scalar losses in long double, written out from their definitions.
long double fd_bruteforce(const FeatureMap& teacher, const FeatureMap& student);
long double kd_bruteforce(const FeatureMap& student_logits, const FeatureMap& teacher_logits, double temperature);
long double xent_bruteforce(const FeatureMap& logits, const LabelMap& labels);

/// conv -> ReLU -> conv evaluated in long double, row-major (y, x, c).
std::vector<long double> generator_bruteforce(const FeatureMap& input, const ConvLayer& conv1, const ConvLayer& conv2);

/// Central differences of a long-double valued function, divided by the realized step.
std::vector<double> grad_finite_diff_extended(const std::function<long double(std::span<const double>)>& f,
                                              std::span<const double> x, const FiniteDiffSpec& spec = {});

FeatureMap max_pool_bruteforce(const FeatureMap& input, std::size_t k);

}  // namespace afdcd::oracle
