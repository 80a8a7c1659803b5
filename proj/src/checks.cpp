#include "afdcd/checks.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "afdcd/masking.hpp"
#include "afdcd/nn.hpp"
#include "afdcd/oracle.hpp"

namespace afdcd {

namespace {

constexpr double kGradTolerance = 1e-5;
// Layer kernels and the generator are held to a tighter bound than the losses.
constexpr double kKernelGradTolerance = 1e-6;

constexpr DistanceKind kKinds[] = {DistanceKind::L2Squared, DistanceKind::L1, DistanceKind::Cosine};

std::size_t pick(Rng& rng, std::initializer_list<std::size_t> options) {
  return *(options.begin() + rng.below(options.size()));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

ConvLayer random_conv(std::size_t out, std::size_t in, Rng& rng) {
  ConvLayer layer(out, in);
  for (double& v : layer.kernel.values()) v = rng.uniform(-1.0, 1.0);
  for (double& v : layer.bias.values()) v = rng.uniform(-0.5, 0.5);
  return layer;
}

double smallest_magnitude(std::span<const double> v) {
  double m = INFINITY;
  for (double x : v) m = std::min(m, std::abs(x));
  return m;
}

// Extended-precision finite differences against an analytical gradient.
double fd_error_extended(const std::function<long double(const FeatureMap&)>& f, const FeatureMap& x,
                         const FeatureMap& analytic) {
  auto flat = [&](std::span<const double> v) {
    return f(FeatureMap(x.height(), x.width(), x.channels(), std::vector<double>(v.begin(), v.end())));
  };
  return oracle::max_relative_error(oracle::grad_finite_diff_extended(flat, x.values()), analytic.values());
}

// Finite-difference check of a FeatureMap-valued gradient.
double fd_error(const std::function<double(const FeatureMap&)>& f, const FeatureMap& x, const FeatureMap& analytic) {
  const FeatureMap numeric = oracle::grad_finite_diff(f, x);
  return oracle::max_relative_error(numeric.values(), analytic.values());
}

// Smallest gap between a window maximum and the runner-up; ties make max-pool non-differentiable.
double min_pool_gap(const FeatureMap& f, std::size_t q) {
  if (q <= 1) return INFINITY;
  double gap = INFINITY;
  for (std::size_t y = 0; y < f.height(); y += q)
    for (std::size_t x = 0; x < f.width(); x += q)
      for (std::size_t c = 0; c < f.channels(); ++c) {
        double first = -INFINITY;
        double second = -INFINITY;
        for (std::size_t dy = 0; dy < q; ++dy)
          for (std::size_t dx = 0; dx < q; ++dx) {
            const double v = f.at(y + dy, x + dx, c);
            if (v > first) {
              second = first;
              first = v;
            } else if (v > second) {
              second = v;
            }
          }
        gap = std::min(gap, first - second);
      }
  return gap;
}

// Smallest |s - t| over all same-channel student/teacher value pairs (L1 kinks).
double min_cross_gap(const FeatureMap& s, const FeatureMap& t) {
  double gap = INFINITY;
  for (std::size_t c = 0; c < s.channels(); ++c)
    for (std::size_t i = 0; i < s.pixels(); ++i)
      for (std::size_t j = 0; j < t.pixels(); ++j)
        gap = std::min(gap, std::abs(s[i * s.channels() + c] - t[j * t.channels() + c]));
  return gap;
}

constexpr double kKinkMargin = 2.0 * oracle::FiniteDiffSpec{}.epsilon;

// Values whose magnitude lies in [0.2, 1]; keeps every cosine group away from the zero vector.
FeatureMap cosine_safe_map(std::size_t h, std::size_t w, std::size_t c, Rng& rng) {
  FeatureMap f(h, w, c);
  for (double& v : f.values()) v = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.2, 1.0);
  return f;
}

FeatureMap grad_map(std::size_t h, std::size_t w, std::size_t c, DistanceKind kind, Rng& rng) {
  return kind == DistanceKind::Cosine ? cosine_safe_map(h, w, c, rng) : random_feature_map(h, w, c, rng);
}

// A +-eps step changes neither an argmax nor the side of an L1 kink when every gap exceeds eps.
bool smooth_enough(const FeatureMap& s, const FeatureMap& t, DistanceKind kind, std::size_t q) {
  if (min_pool_gap(s, q) < kKinkMargin) return false;
  return kind != DistanceKind::L1 || min_cross_gap(q > 1 ? max_pool(s, q).output : s, t) >= kKinkMargin;
}

// Omni instance small enough for the quad-precision difference oracle.
OmniInstance grad_omni_instance(Rng& rng, DistanceKind kind, std::size_t q) {
  for (;;) {
    const std::size_t n = pick(rng, {1, 2, 4});
    const std::size_t c = pick(rng, {1, 2, 4, 8});
    const std::size_t m = std::min(c, pick(rng, {1, 2, 4, 8}));
    if (n * n * m < 2 || n * n * m > 16) continue;
    const std::size_t side = q * n * (n == 4 ? 1 : 1 + rng.below(4 / n));
    const std::size_t other = q * n * (n == 4 ? 1 : 1 + rng.below(4 / n));
    OmniInstance inst{grad_map(side, other, c, kind, rng), grad_map(side, other, c, kind, rng), ContrastConfig{}};
    if (!smooth_enough(inst.student, inst.teacher, kind, q)) continue;
    inst.cfg.tau = rng.uniform(0.1, 1.0);
    inst.cfg.groups = m;
    inst.cfg.patch_side = n;
    inst.cfg.pool_factor = q;
    inst.cfg.distance = kind;
    inst.cfg.include_positive_in_denominator = rng.bernoulli(0.25);
    inst.cfg.pool_coupling = rng.bernoulli(0.5) ? PoolCoupling::Independent : PoolCoupling::StudentIndices;
    return inst;
  }
}

std::pair<FeatureMap, FeatureMap> grad_pair(std::size_t h, std::size_t w, std::size_t c, DistanceKind kind, Rng& rng) {
  for (;;) {
    FeatureMap s = grad_map(h, w, c, kind, rng);
    FeatureMap t = grad_map(h, w, c, kind, rng);
    if (smooth_enough(s, t, kind, 1)) return {std::move(s), std::move(t)};
  }
}

}  // namespace

FeatureMap random_feature_map(std::size_t h, std::size_t w, std::size_t c, Rng& rng, double lo, double hi) {
  FeatureMap f(h, w, c);
  for (double& v : f.values()) v = rng.uniform(lo, hi);
  return f;
}

OmniInstance random_omni_instance(Rng& rng, DistanceKind kind, std::size_t pool_factor) {
  const std::size_t q = std::max<std::size_t>(pool_factor, 1);
  for (;;) {
    const std::size_t n = pick(rng, {1, 2, 4});
    if (q * n > 8) continue;
    const std::size_t span = 8 / (q * n);
    const std::size_t h = q * n * (1 + rng.below(span));
    const std::size_t w = q * n * (1 + rng.below(span));
    const std::size_t c = pick(rng, {1, 2, 4, 8, 16});
    std::size_t m = std::size_t{1} << rng.below(static_cast<std::uint64_t>(std::log2(c)) + 1);
    if (n * n * m < 2) continue;
    OmniInstance inst{random_feature_map(h, w, c, rng), random_feature_map(h, w, c, rng), ContrastConfig{}};
    inst.cfg.tau = rng.uniform(0.07, 1.0);
    inst.cfg.groups = m;
    inst.cfg.patch_side = n;
    inst.cfg.pool_factor = q;
    inst.cfg.distance = kind;
    inst.cfg.include_positive_in_denominator = rng.bernoulli(0.25);
    inst.cfg.pool_coupling = rng.bernoulli(0.5) ? PoolCoupling::Independent : PoolCoupling::StudentIndices;
    return inst;
  }
}

std::vector<CheckResult> run_oracle_checks(std::size_t trials, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CheckResult> out;
  for (DistanceKind kind : kKinds) {
    const std::string k = to_string(kind);
    CheckResult sc{"loss_sc/" + k, trials, 0.0, 1e-10};
    CheckResult cc{"loss_cc/" + k, trials, 0.0, 1e-10};
    CheckResult oc1{"loss_oc/" + k + "/q=1", trials, 0.0, 1e-10};
    CheckResult oc2{"loss_oc/" + k + "/q=2", trials, 0.0, 1e-10};
    for (std::size_t t = 0; t < trials; ++t) {
      std::size_t h = 1 + rng.below(8);
      const std::size_t w = (h == 1 ? 2 : 1) + rng.below(h == 1 ? 7 : 8);
      const std::size_t c = 1 + rng.below(16);
      const FeatureMap s = random_feature_map(h, w, c, rng);
      const FeatureMap te = random_feature_map(h, w, c, rng);
      const double tau = rng.uniform(0.07, 1.0);
      const bool incl = rng.bernoulli(0.25);
      sc.worst = std::max(sc.worst, std::abs(loss_sc(s, te, tau, kind, incl).loss -
                                             oracle::sc_bruteforce(s, te, tau, kind, incl)));

      const std::size_t m = pick(rng, {2, 4, 8, 16});
      const FeatureMap s2 = random_feature_map(h, w, m * (1 + rng.below(16 / m)), rng);
      const FeatureMap t2 = random_feature_map(h, w, s2.channels(), rng);
      cc.worst = std::max(cc.worst, std::abs(loss_cc(s2, t2, m, tau, kind, incl).loss -
                                             oracle::cc_bruteforce(s2, t2, m, tau, kind, incl)));

      for (std::size_t q : {1, 2}) {
        const OmniInstance inst = random_omni_instance(rng, kind, q);
        const double diff = std::abs(loss_oc(inst.student, inst.teacher, inst.cfg).loss -
                                     oracle::oc_bruteforce(inst.student, inst.teacher, inst.cfg));
        CheckResult& r = q == 1 ? oc1 : oc2;
        r.worst = std::max(r.worst, diff);
      }
    }
    out.push_back(sc);
    out.push_back(cc);
    out.push_back(oc1);
    out.push_back(oc2);
  }

  CheckResult parallel{"loss_oc/parallel-vs-serial", trials, 0.0, 1e-12};
  CheckResult conv{"conv2d/bruteforce", trials, 0.0, 1e-12};
  CheckResult conv_ref{"conv2d/serial-reference", trials, 0.0, 1e-12};
  CheckResult pool{"max_pool/bruteforce", trials, 0.0, 1e-12};
  for (std::size_t t = 0; t < trials; ++t) {
    const OmniInstance inst = random_omni_instance(rng, kKinds[t % 3], 1 + t % 2);
    const LossAndGrad a = loss_oc(inst.student, inst.teacher, inst.cfg);
    const LossAndGrad b = reference::loss_oc(inst.student, inst.teacher, inst.cfg);
    parallel.worst = std::max(parallel.worst, std::abs(a.loss - b.loss));
    for (std::size_t i = 0; i < a.grad.size(); ++i) parallel.worst = std::max(parallel.worst, std::abs(a.grad[i] - b.grad[i]));

    const std::size_t h = 1 + rng.below(6);
    const std::size_t w = 1 + rng.below(6);
    const FeatureMap x = random_feature_map(h, w, 1 + rng.below(5), rng);
    const ConvLayer layer = random_conv(1 + rng.below(5), x.channels(), rng);
    const FeatureMap y = conv2d(x, layer);
    const FeatureMap y_oracle = oracle::conv_bruteforce(x, layer);
    const FeatureMap y_ref = reference::conv2d(x, layer);
    for (std::size_t i = 0; i < y.size(); ++i) {
      conv.worst = std::max(conv.worst, std::abs(y[i] - y_oracle[i]));
      conv_ref.worst = std::max(conv_ref.worst, std::abs(y[i] - y_ref[i]));
    }

    const std::size_t k = pick(rng, {1, 2, 4});
    const FeatureMap px = random_feature_map(k * (1 + rng.below(3)), k * (1 + rng.below(3)), 1 + rng.below(4), rng);
    const FeatureMap pooled = max_pool(px, k).output;
    const FeatureMap pooled_oracle = oracle::max_pool_bruteforce(px, k);
    for (std::size_t i = 0; i < pooled.size(); ++i) pool.worst = std::max(pool.worst, std::abs(pooled[i] - pooled_oracle[i]));
  }
  out.push_back(parallel);
  out.push_back(conv);
  out.push_back(conv_ref);
  out.push_back(pool);
  return out;
}

std::vector<CheckResult> run_grad_checks(std::size_t trials, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CheckResult> out;

  CheckResult fd{"l_fd", trials, 0.0, kKernelGradTolerance};
  for (std::size_t t = 0; t < trials; ++t) {
    const FeatureMap ft = random_feature_map(4, 4, 4, rng);
    const FeatureMap fs = random_feature_map(4, 4, 4, rng);
    fd.worst = std::max(fd.worst, fd_error_extended([&](const FeatureMap& x) { return oracle::fd_bruteforce(ft, x); }, fs,
                                                    l_fd(ft, fs).grad));
  }
  out.push_back(fd);

  // Contrastive gradients are compared with quad-precision central differences.
  for (DistanceKind kind : kKinds) {
    const std::string k = to_string(kind);
    CheckResult sc{"loss_sc/" + k, trials, 0.0, kGradTolerance};
    CheckResult cc{"loss_cc/" + k, trials, 0.0, kGradTolerance};
    CheckResult oc{"loss_oc/" + k, trials, 0.0, kGradTolerance};
    for (std::size_t t = 0; t < trials; ++t) {
      const double tau = rng.uniform(0.1, 1.0);
      const bool incl = rng.bernoulli(0.25);
      {
        const std::size_t h = 1 + rng.below(4);
        auto [s, te] = grad_pair(h, (h == 1 ? 2 : 1) + rng.below(3), 1 + rng.below(8), kind, rng);
        sc.worst = std::max(sc.worst, oracle::max_relative_error(oracle::sc_grad_fd(s, te, tau, kind, incl).values(),
                                                                 loss_sc(s, te, tau, kind, incl).grad.values()));
      }
      {
        const std::size_t m = pick(rng, {2, 4, 8});
        auto [s, te] = grad_pair(1 + rng.below(4), 1 + rng.below(4), m * (1 + rng.below(2)), kind, rng);
        cc.worst = std::max(cc.worst, oracle::max_relative_error(oracle::cc_grad_fd(s, te, m, tau, kind, incl).values(),
                                                                 loss_cc(s, te, m, tau, kind, incl).grad.values()));
      }
      {
        const OmniInstance inst = grad_omni_instance(rng, kind, 1 + t % 2);
        oc.worst = std::max(oc.worst,
                            oracle::max_relative_error(oracle::oc_grad_fd(inst.student, inst.teacher, inst.cfg).values(),
                                                       loss_oc(inst.student, inst.teacher, inst.cfg).grad.values()));
      }
    }
    out.push_back(sc);
    out.push_back(cc);
    out.push_back(oc);
  }

  CheckResult kd{"loss_kd", trials, 0.0, kGradTolerance};
  CheckResult xent{"softmax_xent", trials, 0.0, kKernelGradTolerance};
  for (std::size_t t = 0; t < trials; ++t) {
    const FeatureMap zs = random_feature_map(4, 4, 5, rng, -3.0, 3.0);
    const FeatureMap zt = random_feature_map(4, 4, 5, rng, -3.0, 3.0);
    const double temp = rng.uniform(1.0, 6.0);
    kd.worst = std::max(kd.worst, fd_error_extended([&](const FeatureMap& x) { return oracle::kd_bruteforce(x, zt, temp); },
                                                    zs, loss_kd(zs, zt, temp).grad));

    const FeatureMap logits = random_feature_map(4, 4, 3, rng, -3.0, 3.0);
    LabelMap labels(4, 4);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = rng.bernoulli(0.1) ? kIgnoreLabel : static_cast<int>(rng.below(3));
    xent.worst = std::max(xent.worst, fd_error_extended([&](const FeatureMap& x) { return oracle::xent_bruteforce(x, labels); },
                                                        logits, softmax_xent(logits, labels).grad));
  }
  out.push_back(kd);
  out.push_back(xent);

  CheckResult gen_in{"generator_forward/input", trials, 0.0, kKernelGradTolerance};
  CheckResult gen_params{"generator_forward/params", trials, 0.0, kKernelGradTolerance};
  for (std::size_t t = 0; t < trials; ++t) {
    FeatureMap x;
    GeneratorParams params;
    FeatureMap upstream;
    // Resample until no hidden pre-activation sits within 1e-3 of the ReLU kink.
    for (;;) {
      x = random_feature_map(4, 4, 3, rng);
      params = GeneratorParams{random_conv(4, 3, rng), random_conv(4, 4, rng)};
      upstream = random_feature_map(4, 4, 4, rng);
      if (smallest_magnitude(generator_trace(x, params).hidden_pre.values()) > 1e-3) break;
    }
    // Differences of the long-double forward pass; the double pass leaves roundoff near 1e-10.
    auto objective = [&]() {
      const std::vector<long double> y = oracle::generator_bruteforce(x, params.conv1, params.conv2);
      long double acc = 0;
      for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * upstream[i];
      return acc;
    };
    const GeneratorGrads g = generator_backward(generator_trace(x, params), params, upstream);
    auto error_for = [&](std::span<double> slot, std::span<const double> analytic) {
      const std::vector<double> saved(slot.begin(), slot.end());
      auto f = [&](std::span<const double> v) {
        std::copy(v.begin(), v.end(), slot.begin());
        return objective();
      };
      const std::vector<double> numeric = oracle::grad_finite_diff_extended(f, saved);
      std::copy(saved.begin(), saved.end(), slot.begin());
      return oracle::max_relative_error(numeric, analytic);
    };
    gen_in.worst = std::max(gen_in.worst, error_for(x.values(), g.input.values()));
    gen_params.worst = std::max({gen_params.worst, error_for(params.conv1.kernel.values(), g.conv1.kernel.values()),
                                 error_for(params.conv1.bias.values(), g.conv1.bias.values()),
                                 error_for(params.conv2.kernel.values(), g.conv2.kernel.values()),
                                 error_for(params.conv2.bias.values(), g.conv2.bias.values())});
  }
  out.push_back(gen_in);
  out.push_back(gen_params);

  CheckResult conv{"conv2d_grad", trials, 0.0, kKernelGradTolerance};
  CheckResult pool{"max_pool_grad", trials, 0.0, kKernelGradTolerance};
  for (std::size_t t = 0; t < trials; ++t) {
    const FeatureMap x = random_feature_map(1 + rng.below(5), 1 + rng.below(5), 1 + rng.below(4), rng);
    ConvLayer layer = random_conv(1 + rng.below(4), x.channels(), rng);
    const FeatureMap upstream = random_feature_map(x.height(), x.width(), layer.out_channels(), rng);
    const ConvGrads g = conv2d_grad(x, layer, upstream);
    auto objective = [&](const FeatureMap& in) { return dot(conv2d(in, layer).values(), upstream.values()); };
    double worst = fd_error(objective, x, g.input);
    for (auto [slot, analytic] : {std::pair{&layer.kernel, &g.kernel}, std::pair{&layer.bias, &g.bias}}) {
      const Tensor saved = *slot;
      auto f = [&](std::span<const double> v) {
        std::copy(v.begin(), v.end(), slot->values().begin());
        return objective(x);
      };
      const std::vector<double> numeric = oracle::grad_finite_diff(f, saved.values());
      *slot = saved;
      worst = std::max(worst, oracle::max_relative_error(numeric, analytic->values()));
    }
    conv.worst = std::max(conv.worst, worst);

    // Continuous values: ties inside a window occur with probability zero.
    const std::size_t k = pick(rng, {2, 4});
    const FeatureMap px = random_feature_map(k * (1 + rng.below(2)), k * (1 + rng.below(2)), 1 + rng.below(3), rng);
    const PoolResult pr = max_pool(px, k);
    const FeatureMap up = random_feature_map(pr.output.height(), pr.output.width(), pr.output.channels(), rng);
    auto pool_obj = [&](const FeatureMap& in) { return dot(max_pool(in, k).output.values(), up.values()); };
    pool.worst = std::max(pool.worst, fd_error(pool_obj, px, max_pool_grad(pr, up)));
  }
  out.push_back(conv);
  out.push_back(pool);
  return out;
}

bool report_checks(std::ostream& out, const std::vector<CheckResult>& results) {
  bool ok = true;
  for (const auto& r : results) {
    out << (r.passed() ? "PASS " : "FAIL ") << r.name << "  trials=" << r.trials << "  worst=" << r.worst
        << "  tol=" << r.tolerance << '\n';
    ok = ok && r.passed();
  }
  return ok;
}

}  // namespace afdcd
