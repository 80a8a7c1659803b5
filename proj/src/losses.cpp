#include "afdcd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace afdcd {

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ParameterError("temperature must be positive");
}

void check_congruent(const FeatureMap& a, const FeatureMap& b, const char* what) {
  if (!a.congruent(b)) throw ShapeError(std::string(what) + ": student and teacher shapes differ");
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void require_nonzero_reps(std::span<const double> data, const ContrastLayout& layout, const char* side) {
  for (std::size_t off : layout.offsets) {
    if (norm(data.subspan(off, layout.rep_len)) == 0.0) {
      throw DegenerateInputError(std::string("cosine distance: zero ") + side + " representation at offset " +
                                 std::to_string(off));
    }
  }
}

using BlockKernel = double (*)(std::span<const double>, std::span<const double>, const ContrastLayout&,
                               double, DistanceKind, bool, std::span<double>);

LossAndGrad run_layout(const FeatureMap& student, const FeatureMap& teacher, const ContrastLayout& layout,
                       double tau, DistanceKind kind, bool include_positive, BlockKernel kernel) {
  LossAndGrad r{0.0, FeatureMap(student.height(), student.width(), student.channels())};
  const double sum = kernel(student.values(), teacher.values(), layout, tau, kind, include_positive,
                            r.grad.values());
  const double inv = 1.0 / static_cast<double>(layout.samples());
  r.loss = sum * inv;
  for (double& g : r.grad.values()) g *= inv;
  require_finite(std::span<const double>(&r.loss, 1), "contrastive loss");
  require_finite(r.grad.values(), "contrastive loss gradient");
  return r;
}

LossAndGrad oc_pipeline(const FeatureMap& student, const FeatureMap& teacher, const ContrastConfig& cfg,
                        BlockKernel kernel) {
  check_congruent(student, teacher, "loss_oc");
  check_tau(cfg.tau);
  if (cfg.patch_side * cfg.patch_side * cfg.groups < 2) {
    throw ParameterError("loss_oc: a patch must hold at least two fine-grained representations");
  }
  if (cfg.pool_factor <= 1) {
    const ContrastLayout layout = omni_layout(student.height(), student.width(), student.channels(),
                                              cfg.patch_side, cfg.patch_side, cfg.groups);
    return run_layout(student, teacher, layout, cfg.tau, cfg.distance,
                      cfg.include_positive_in_denominator, kernel);
  }
  const PooledPair pooled = pool_pre_reduce(student, teacher, cfg.pool_factor, cfg.pool_coupling);
  const FeatureMap& ps = pooled.student.output;
  const ContrastLayout layout =
      omni_layout(ps.height(), ps.width(), ps.channels(), cfg.patch_side, cfg.patch_side, cfg.groups);
  LossAndGrad pooled_loss =
      run_layout(ps, pooled.teacher, layout, cfg.tau, cfg.distance, cfg.include_positive_in_denominator, kernel);
  return LossAndGrad{pooled_loss.loss, max_pool_grad(pooled.student, pooled_loss.grad)};
}

}  // namespace

DistanceKind parse_distance_kind(std::string_view name) {
  if (name == "l2") return DistanceKind::L2Squared;
  if (name == "l1") return DistanceKind::L1;
  if (name == "cosine") return DistanceKind::Cosine;
  throw ParameterError("unknown distance kind '" + std::string(name) + "' (expected l2, l1 or cosine)");
}

std::string to_string(DistanceKind kind) {
  switch (kind) {
    case DistanceKind::L2Squared: return "l2";
    case DistanceKind::L1: return "l1";
    case DistanceKind::Cosine: return "cosine";
  }
  return "l2";
}

double distance(std::span<const double> a, std::span<const double> b, DistanceKind kind) {
  if (a.size() != b.size()) throw ShapeError("distance: vectors differ in length");
  switch (kind) {
    case DistanceKind::L2Squared: {
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
      return s;
    }
    case DistanceKind::L1: {
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
      return s;
    }
    case DistanceKind::Cosine: {
      const double na = norm(a);
      const double nb = norm(b);
      if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine distance of a zero vector");
      double dot = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
      return 1.0 - dot / (na * nb);
    }
  }
  return 0.0;
}

void accumulate_distance_grad(std::span<const double> a, std::span<const double> b, DistanceKind kind,
                              double scale, std::span<double> out) {
  switch (kind) {
    case DistanceKind::L2Squared:
      for (std::size_t i = 0; i < a.size(); ++i) out[i] += scale * 2.0 * (a[i] - b[i]);
      return;
    case DistanceKind::L1:
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        out[i] += scale * (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0));
      }
      return;
    case DistanceKind::Cosine: {
      const double na = norm(a);
      const double nb = norm(b);
      if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine distance of a zero vector");
      double dot = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
      const double inv_ab = 1.0 / (na * nb);
      const double cos_over_aa = dot * inv_ab / (na * na);
      for (std::size_t i = 0; i < a.size(); ++i) out[i] -= scale * (b[i] * inv_ab - a[i] * cos_over_aa);
      return;
    }
  }
}

SampleLoss contrast_sample(double d_pos, std::span<const double> d_negs, double tau, bool include_positive) {
  check_tau(tau);
  if (d_negs.empty()) throw ParameterError("contrast_sample: negative set is empty");
  double m = -std::numeric_limits<double>::infinity();
  for (double d : d_negs) m = std::max(m, -d / tau);
  if (include_positive) m = std::max(m, -d_pos / tau);
  double sum = 0.0;
  for (double d : d_negs) sum += std::exp(-d / tau - m);
  if (include_positive) sum += std::exp(-d_pos / tau - m);
  const double lse = m + std::log(sum);

  SampleLoss r;
  r.loss = d_pos / tau + lse;
  r.grad_pos = 1.0 / tau;
  if (include_positive) r.grad_pos -= std::exp(-d_pos / tau - lse) / tau;
  r.grad_negs.resize(d_negs.size());
  for (std::size_t j = 0; j < d_negs.size(); ++j) r.grad_negs[j] = -std::exp(-d_negs[j] / tau - lse) / tau;
  return r;
}

double contrast_blocks(std::span<const double> student, std::span<const double> teacher,
                       const ContrastLayout& layout, double tau, DistanceKind kind, bool include_positive,
                       std::span<double> grad) {
  check_tau(tau);
  if (layout.members < 2) throw ParameterError("contrast_blocks: blocks need at least two members");
  if (student.size() != teacher.size() || grad.size() != student.size()) {
    throw ShapeError("contrast_blocks: student, teacher and grad lengths differ");
  }
  const std::size_t k_n = layout.members;
  const std::size_t len = layout.rep_len;
  const long samples = static_cast<long>(layout.samples());

  // Precomputed norms for cosine; zero vectors are rejected before the parallel region.
  std::vector<double> s_norm;
  std::vector<double> t_norm;
  if (kind == DistanceKind::Cosine) {
    require_nonzero_reps(student, layout, "student");
    require_nonzero_reps(teacher, layout, "teacher");
    s_norm.resize(layout.samples());
    t_norm.resize(layout.samples());
    for (std::size_t n = 0; n < layout.samples(); ++n) {
      s_norm[n] = norm(student.subspan(layout.offsets[n], len));
      t_norm[n] = norm(teacher.subspan(layout.offsets[n], len));
    }
  }

  std::vector<double> sample_loss(layout.samples());
#pragma omp parallel
  {
    std::vector<double> d(k_n);
    std::vector<double> dots(k_n);
    std::vector<double> coef(k_n);
#pragma omp for schedule(static)
    for (long n = 0; n < samples; ++n) {
      const std::size_t b = static_cast<std::size_t>(n) / k_n;
      const std::size_t i = static_cast<std::size_t>(n) % k_n;
      const double* s = student.data() + layout.offset(b, i);

      for (std::size_t j = 0; j < k_n; ++j) {
        const double* t = teacher.data() + layout.offset(b, j);
        double acc = 0.0;
        switch (kind) {
          case DistanceKind::L2Squared:
            for (std::size_t e = 0; e < len; ++e) acc += (s[e] - t[e]) * (s[e] - t[e]);
            d[j] = acc;
            break;
          case DistanceKind::L1:
            for (std::size_t e = 0; e < len; ++e) acc += std::abs(s[e] - t[e]);
            d[j] = acc;
            break;
          case DistanceKind::Cosine:
            for (std::size_t e = 0; e < len; ++e) acc += s[e] * t[e];
            dots[j] = acc;
            d[j] = 1.0 - acc / (s_norm[n] * t_norm[b * k_n + j]);
            break;
        }
      }

      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k_n; ++j)
        if (j != i || include_positive) m = std::max(m, -d[j] / tau);
      double sum = 0.0;
      for (std::size_t j = 0; j < k_n; ++j) {
        coef[j] = (j != i || include_positive) ? std::exp(-d[j] / tau - m) : 0.0;
        sum += coef[j];
      }
      sample_loss[n] = d[i] / tau + m + std::log(sum);

      // coef[j] = d loss / d d_j.
      for (std::size_t j = 0; j < k_n; ++j) coef[j] = -coef[j] / (sum * tau);
      coef[i] += 1.0 / tau;

      double* g = grad.data() + layout.offset(b, i);
      for (std::size_t j = 0; j < k_n; ++j) {
        const double* t = teacher.data() + layout.offset(b, j);
        const double c = coef[j];
        switch (kind) {
          case DistanceKind::L2Squared:
            for (std::size_t e = 0; e < len; ++e) g[e] += c * 2.0 * (s[e] - t[e]);
            break;
          case DistanceKind::L1:
            for (std::size_t e = 0; e < len; ++e) {
              const double diff = s[e] - t[e];
              g[e] += c * (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0));
            }
            break;
          case DistanceKind::Cosine: {
            const double sn = s_norm[n];
            const double tn = t_norm[b * k_n + j];
            const double inv_st = 1.0 / (sn * tn);
            const double cos_over_ss = dots[j] * inv_st / (sn * sn);
            for (std::size_t e = 0; e < len; ++e) g[e] -= c * (t[e] * inv_st - s[e] * cos_over_ss);
            break;
          }
        }
      }
    }
  }

  // Neumaier sum over block totals, so reordering patches moves the result by at most an ulp or so.
  double total = 0.0;
  double comp = 0.0;
  for (std::size_t b = 0; b < layout.blocks; ++b) {
    double block = 0.0;
    for (std::size_t i = 0; i < k_n; ++i) block += sample_loss[b * k_n + i];
    const double t = total + block;
    comp += std::abs(total) >= std::abs(block) ? (total - t) + block : (block - t) + total;
    total = t;
  }
  return total + comp;
}

LossAndGrad l_fd(const FeatureMap& teacher, const FeatureMap& student) {
  check_congruent(student, teacher, "l_fd");
  LossAndGrad r{0.0, FeatureMap(student.height(), student.width(), student.channels())};
  for (std::size_t i = 0; i < student.size(); ++i) {
    const double diff = teacher[i] - student[i];
    r.loss += diff * diff;
    r.grad[i] = -2.0 * diff;
  }
  require_finite(std::span<const double>(&r.loss, 1), "l_fd");
  return r;
}

LossAndGrad loss_sc(const FeatureMap& student, const FeatureMap& teacher, double tau, DistanceKind kind,
                    bool include_positive) {
  check_congruent(student, teacher, "loss_sc");
  check_tau(tau);
  if (student.pixels() < 2) throw ParameterError("loss_sc: need at least two pixels for a negative pair");
  const ContrastLayout layout = spatial_layout(student.height(), student.width(), student.channels());
  return run_layout(student, teacher, layout, tau, kind, include_positive, &afdcd::contrast_blocks);
}

LossAndGrad loss_cc(const FeatureMap& student, const FeatureMap& teacher, std::size_t groups, double tau,
                    DistanceKind kind, bool include_positive) {
  check_congruent(student, teacher, "loss_cc");
  check_tau(tau);
  if (groups < 2) throw ParameterError("loss_cc: need at least two channel groups for a negative pair");
  const ContrastLayout layout = channel_layout(student.height(), student.width(), student.channels(), groups);
  return run_layout(student, teacher, layout, tau, kind, include_positive, &afdcd::contrast_blocks);
}

LossAndGrad loss_oc(const FeatureMap& student, const FeatureMap& teacher, const ContrastConfig& cfg) {
  return oc_pipeline(student, teacher, cfg, &afdcd::contrast_blocks);
}

LossAndGrad loss_kd(const FeatureMap& student_logits, const FeatureMap& teacher_logits, double temperature) {
  check_congruent(student_logits, teacher_logits, "loss_kd");
  if (!(temperature > 0.0)) throw ParameterError("loss_kd: temperature must be positive");
  const std::size_t k_n = student_logits.channels();
  const std::size_t p_n = student_logits.pixels();
  LossAndGrad r{0.0, FeatureMap(student_logits.height(), student_logits.width(), k_n)};
  std::vector<double> ps(k_n);
  std::vector<double> pt(k_n);
  const double inv_p = 1.0 / static_cast<double>(p_n);

  auto log_softmax = [&](const double* z, std::vector<double>& out) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < k_n; ++k) m = std::max(m, z[k] / temperature);
    double sum = 0.0;
    for (std::size_t k = 0; k < k_n; ++k) sum += std::exp(z[k] / temperature - m);
    const double lse = m + std::log(sum);
    for (std::size_t k = 0; k < k_n; ++k) out[k] = z[k] / temperature - lse;
  };

  for (std::size_t p = 0; p < p_n; ++p) {
    log_softmax(student_logits.values().data() + p * k_n, ps);
    log_softmax(teacher_logits.values().data() + p * k_n, pt);
    double kl = 0.0;
    double* g = r.grad.values().data() + p * k_n;
    for (std::size_t k = 0; k < k_n; ++k) {
      const double qt = std::exp(pt[k]);
      kl += qt * (pt[k] - ps[k]);
      g[k] = temperature * (std::exp(ps[k]) - qt) * inv_p;
    }
    r.loss += kl * temperature * temperature * inv_p;
  }
  require_finite(std::span<const double>(&r.loss, 1), "loss_kd");
  return r;
}

LossBundle total_loss(double task, double kd, double fd, double afdcd, const LossWeights& weights) {
  if (!(weights.lambda1 >= 0.0) || !(weights.lambda2 >= 0.0) || !(weights.lambda3 >= 0.0)) {
    throw ParameterError("total_loss: loss weights must be non-negative");
  }
  LossBundle b{task, kd, fd, afdcd, 0.0, weights};
  b.total = task + weights.lambda1 * kd + weights.lambda2 * fd + weights.lambda3 * afdcd;
  return b;
}

namespace reference {

double contrast_blocks(std::span<const double> student, std::span<const double> teacher,
                       const ContrastLayout& layout, double tau, DistanceKind kind, bool include_positive,
                       std::span<double> grad) {
  check_tau(tau);
  if (layout.members < 2) throw ParameterError("contrast_blocks: blocks need at least two members");
  const std::size_t len = layout.rep_len;
  double total = 0.0;
  std::vector<double> negs;
  for (std::size_t b = 0; b < layout.blocks; ++b) {
    double block = 0.0;
    for (std::size_t i = 0; i < layout.members; ++i) {
      const auto s = student.subspan(layout.offset(b, i), len);
      negs.clear();
      for (std::size_t j = 0; j < layout.members; ++j) {
        if (j != i) negs.push_back(distance(s, teacher.subspan(layout.offset(b, j), len), kind));
      }
      const auto t_pos = teacher.subspan(layout.offset(b, i), len);
      const SampleLoss sl = contrast_sample(distance(s, t_pos, kind), negs, tau, include_positive);
      block += sl.loss;
      auto g = grad.subspan(layout.offset(b, i), len);
      accumulate_distance_grad(s, t_pos, kind, sl.grad_pos, g);
      std::size_t n = 0;
      for (std::size_t j = 0; j < layout.members; ++j) {
        if (j == i) continue;
        accumulate_distance_grad(s, teacher.subspan(layout.offset(b, j), len), kind, sl.grad_negs[n++], g);
      }
    }
    total += block;
  }
  return total;
}

LossAndGrad loss_oc(const FeatureMap& student, const FeatureMap& teacher, const ContrastConfig& cfg) {
  return oc_pipeline(student, teacher, cfg, &reference::contrast_blocks);
}

}  // namespace reference

}  // namespace afdcd
