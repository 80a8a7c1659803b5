#include "afdcd/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <quadmath.h>
#include <string>

namespace afdcd::oracle {

namespace {

using Real = long double;

Real dist(const std::vector<Real>& a, const std::vector<Real>& b, DistanceKind kind) {
  Real s = 0;
  if (kind == DistanceKind::L2Squared) {
    for (std::size_t e = 0; e < a.size(); ++e) s += (a[e] - b[e]) * (a[e] - b[e]);
    return s;
  }
  if (kind == DistanceKind::L1) {
    for (std::size_t e = 0; e < a.size(); ++e) s += std::fabs(a[e] - b[e]);
    return s;
  }
  Real na = 0;
  Real nb = 0;
  for (std::size_t e = 0; e < a.size(); ++e) {
    s += a[e] * b[e];
    na += a[e] * a[e];
    nb += b[e] * b[e];
  }
  if (na == 0 || nb == 0) throw DegenerateInputError("oracle: cosine distance of a zero vector");
  return 1 - s / (std::sqrt(na) * std::sqrt(nb));
}

// Map held as nested vectors [y][x][c] so nothing is shared with FeatureMap indexing.
using Grid = std::vector<std::vector<std::vector<Real>>>;

Grid to_grid(const FeatureMap& f) {
  Grid g(f.height(), std::vector<std::vector<Real>>(f.width(), std::vector<Real>(f.channels())));
  for (std::size_t y = 0; y < f.height(); ++y)
    for (std::size_t x = 0; x < f.width(); ++x)
      for (std::size_t c = 0; c < f.channels(); ++c) g[y][x][c] = f.at(y, x, c);
  return g;
}

// Window maxima; `where` receives the (y, x) of the first maximum in row-major order.
Grid pool_grid(const Grid& in, std::size_t q, std::vector<std::vector<std::vector<std::pair<std::size_t, std::size_t>>>>* where) {
  const std::size_t h = in.size() / q;
  const std::size_t w = in[0].size() / q;
  const std::size_t c_n = in[0][0].size();
  Grid out(h, std::vector<std::vector<Real>>(w, std::vector<Real>(c_n)));
  if (where) where->assign(h, std::vector<std::vector<std::pair<std::size_t, std::size_t>>>(w, std::vector<std::pair<std::size_t, std::size_t>>(c_n)));
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < c_n; ++c) {
        Real best = in[y * q][x * q][c];
        std::pair<std::size_t, std::size_t> at{y * q, x * q};
        for (std::size_t dy = 0; dy < q; ++dy)
          for (std::size_t dx = 0; dx < q; ++dx)
            if (in[y * q + dy][x * q + dx][c] > best) {
              best = in[y * q + dy][x * q + dx][c];
              at = {y * q + dy, x * q + dx};
            }
        out[y][x][c] = best;
        if (where) (*where)[y][x][c] = at;
      }
  return out;
}

std::vector<Real> slice(const Grid& g, std::size_t y, std::size_t x, std::size_t group, std::size_t len) {
  return std::vector<Real>(g[y][x].begin() + static_cast<long>(group * len),
                           g[y][x].begin() + static_cast<long>((group + 1) * len));
}

using Quad = __float128;

// Contrast geometry for the quad-precision difference oracle: pool factor,
// rectangular patch of ph x pw pooled pixels, m groups per pixel.
struct QuadLayout {
  std::size_t q = 1;
  std::size_t ph = 1;
  std::size_t pw = 1;
  std::size_t m = 1;
  Quad tau = 1;
  DistanceKind kind = DistanceKind::L2Squared;
  bool include_positive = false;
  PoolCoupling coupling = PoolCoupling::Independent;
};

Quad quad_dist(const Quad* a, const Quad* b, std::size_t len, DistanceKind kind) {
  Quad s = 0;
  if (kind == DistanceKind::L2Squared) {
    for (std::size_t e = 0; e < len; ++e) s += (a[e] - b[e]) * (a[e] - b[e]);
    return s;
  }
  if (kind == DistanceKind::L1) {
    for (std::size_t e = 0; e < len; ++e) s += fabsq(a[e] - b[e]);
    return s;
  }
  Quad na = 0;
  Quad nb = 0;
  for (std::size_t e = 0; e < len; ++e) {
    s += a[e] * b[e];
    na += a[e] * a[e];
    nb += b[e] * b[e];
  }
  if (na == 0 || nb == 0) throw DegenerateInputError("oracle: cosine distance of a zero vector");
  return 1 - s / (sqrtq(na) * sqrtq(nb));
}

// Sum of per-sample losses over one patch; (py, px) is its top-left pooled pixel.
Quad quad_patch_sum(const FeatureMap& student, const FeatureMap& teacher, const QuadLayout& l, std::size_t py,
                    std::size_t px) {
  const std::size_t c_n = student.channels();
  const std::size_t len = c_n / l.m;
  // Pooled patch values, [pixel][channel] with pixel = i * pw + j.
  std::vector<Quad> s(l.ph * l.pw * c_n);
  std::vector<Quad> t(s.size());
  for (std::size_t i = 0; i < l.ph; ++i)
    for (std::size_t j = 0; j < l.pw; ++j)
      for (std::size_t c = 0; c < c_n; ++c) {
        const std::size_t y0 = (py + i) * l.q;
        const std::size_t x0 = (px + j) * l.q;
        std::size_t by = y0, bx = x0;
        double tbest = teacher.at(y0, x0, c);
        for (std::size_t dy = 0; dy < l.q; ++dy)
          for (std::size_t dx = 0; dx < l.q; ++dx) {
            if (student.at(y0 + dy, x0 + dx, c) > student.at(by, bx, c)) {
              by = y0 + dy;
              bx = x0 + dx;
            }
            tbest = std::max(tbest, teacher.at(y0 + dy, x0 + dx, c));
          }
        const std::size_t at = (i * l.pw + j) * c_n + c;
        s[at] = student.at(by, bx, c);
        t[at] = l.coupling == PoolCoupling::Independent ? Quad(tbest) : Quad(teacher.at(by, bx, c));
      }

  const std::size_t reps = l.ph * l.pw * l.m;
  auto rep = [&](const std::vector<Quad>& g, std::size_t r) { return g.data() + (r / l.m) * c_n + (r % l.m) * len; };
  Quad total = 0;
  for (std::size_t a = 0; a < reps; ++a) {
    const Quad numerator = expq(-quad_dist(rep(s, a), rep(t, a), len, l.kind) / l.tau);
    Quad denominator = l.include_positive ? numerator : Quad(0);
    for (std::size_t b = 0; b < reps; ++b) {
      if (b != a) denominator += expq(-quad_dist(rep(s, a), rep(t, b), len, l.kind) / l.tau);
    }
    total -= logq(numerator / denominator);
  }
  return total;
}

FeatureMap quad_grad_fd(const FeatureMap& student, const FeatureMap& teacher, const QuadLayout& l,
                        const FiniteDiffSpec& spec) {
  if (!student.congruent(teacher)) throw ShapeError("grad_fd: shapes differ");
  if (l.q == 0 || student.height() % l.q || student.width() % l.q) throw ShapeError("grad_fd: bad pool factor");
  const std::size_t h = student.height() / l.q;
  const std::size_t w = student.width() / l.q;
  if (l.ph == 0 || l.pw == 0 || h % l.ph || w % l.pw) throw ShapeError("grad_fd: patch does not divide map");
  if (l.m == 0 || student.channels() % l.m) throw ShapeError("grad_fd: groups do not divide channels");
  if (l.ph * l.pw * l.m < 2) throw ParameterError("grad_fd: patch holds fewer than two representations");
  const Quad samples = static_cast<Quad>(h * w * l.m);

  FeatureMap probe = student;
  FeatureMap grad(student.height(), student.width(), student.channels());
  for (std::size_t y = 0; y < student.height(); ++y)
    for (std::size_t x = 0; x < student.width(); ++x)
      for (std::size_t c = 0; c < student.channels(); ++c) {
        const std::size_t py = (y / l.q) / l.ph * l.ph;
        const std::size_t px = (x / l.q) / l.pw * l.pw;
        const double orig = student.at(y, x, c);
        const double up = orig + spec.epsilon;
        const double down = orig - spec.epsilon;
        probe.at(y, x, c) = up;
        const Quad plus = quad_patch_sum(probe, teacher, l, py, px);
        probe.at(y, x, c) = down;
        const Quad minus = quad_patch_sum(probe, teacher, l, py, px);
        probe.at(y, x, c) = orig;
        const Quad g = (plus - minus) / (static_cast<Quad>(up) - static_cast<Quad>(down)) / samples;
        grad.at(y, x, c) = static_cast<double>(g);
        if (!std::isfinite(grad.at(y, x, c))) throw NumericError("grad_fd: non-finite difference");
      }
  return grad;
}

}  // namespace

double oc_bruteforce(const FeatureMap& student, const FeatureMap& teacher, const ContrastConfig& cfg) {
  if (!student.congruent(teacher)) throw ShapeError("oc_bruteforce: shapes differ");
  if (!(cfg.tau > 0.0)) throw ParameterError("oc_bruteforce: temperature must be positive");
  const std::size_t q = std::max<std::size_t>(cfg.pool_factor, 1);
  const std::size_t n = cfg.patch_side;
  const std::size_t m = cfg.groups;
  if (n * n * m < 2) throw ParameterError("oc_bruteforce: patch holds fewer than two representations");
  if (student.height() % q || student.width() % q) throw ShapeError("oc_bruteforce: pool factor does not divide map");
  if (n == 0 || (student.height() / q) % n || (student.width() / q) % n) {
    throw ShapeError("oc_bruteforce: patch side does not divide pooled map");
  }
  if (m == 0 || student.channels() % m) throw ShapeError("oc_bruteforce: groups do not divide channels");

  std::vector<std::vector<std::vector<std::pair<std::size_t, std::size_t>>>> where;
  const Grid s_full = to_grid(student);
  const Grid t_full = to_grid(teacher);
  const Grid s = pool_grid(s_full, q, &where);
  Grid t;
  if (cfg.pool_coupling == PoolCoupling::Independent) {
    t = pool_grid(t_full, q, nullptr);
  } else {
    t = s;
    for (std::size_t y = 0; y < t.size(); ++y)
      for (std::size_t x = 0; x < t[0].size(); ++x)
        for (std::size_t c = 0; c < t[0][0].size(); ++c)
          t[y][x][c] = t_full[where[y][x][c].first][where[y][x][c].second][c];
  }

  const std::size_t h = s.size();
  const std::size_t w = s[0].size();
  const std::size_t len = student.channels() / m;
  const Real tau = cfg.tau;
  const std::size_t patch_rows = h / n;
  const std::size_t patch_cols = w / n;

  Real total = 0;
  for (std::size_t p = 0; p < patch_rows * patch_cols; ++p) {
    const std::size_t y0 = (p / patch_cols) * n;
    const std::size_t x0 = (p % patch_cols) * n;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < m; ++k) {
          const std::vector<Real> fs = slice(s, y0 + i, x0 + j, k, len);
          const Real numerator = std::exp(-dist(fs, slice(t, y0 + i, x0 + j, k, len), cfg.distance) / tau);
          Real denominator = 0;
          for (std::size_t u = 0; u < n; ++u)
            for (std::size_t v = 0; v < n; ++v)
              for (std::size_t ww = 0; ww < m; ++ww) {
                if (u == i && v == j && ww == k) continue;
                denominator += std::exp(-dist(fs, slice(t, y0 + u, x0 + v, ww, len), cfg.distance) / tau);
              }
          if (cfg.include_positive_in_denominator) denominator += numerator;
          total += -std::log(numerator / denominator);
        }
  }
  return static_cast<double>(total / static_cast<Real>(h * w * m));
}

double sc_bruteforce(const FeatureMap& student, const FeatureMap& teacher, double tau, DistanceKind kind,
                     bool include_positive) {
  if (!student.congruent(teacher)) throw ShapeError("sc_bruteforce: shapes differ");
  if (student.height() * student.width() < 2) throw ParameterError("sc_bruteforce: need two pixels");
  const Grid s = to_grid(student);
  const Grid t = to_grid(teacher);
  const std::size_t c_n = student.channels();
  Real total = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s[0].size(); ++j) {
      const auto fs = slice(s, i, j, 0, c_n);
      const Real numerator = std::exp(-dist(fs, slice(t, i, j, 0, c_n), kind) / tau);
      Real denominator = 0;
      for (std::size_t u = 0; u < s.size(); ++u)
        for (std::size_t v = 0; v < s[0].size(); ++v) {
          if (u == i && v == j) continue;
          denominator += std::exp(-dist(fs, slice(t, u, v, 0, c_n), kind) / tau);
        }
      if (include_positive) denominator += numerator;
      total += -std::log(numerator / denominator);
    }
  return static_cast<double>(total / static_cast<Real>(s.size() * s[0].size()));
}

double cc_bruteforce(const FeatureMap& student, const FeatureMap& teacher, std::size_t groups, double tau,
                     DistanceKind kind, bool include_positive) {
  if (!student.congruent(teacher)) throw ShapeError("cc_bruteforce: shapes differ");
  if (groups < 2) throw ParameterError("cc_bruteforce: need two groups");
  if (student.channels() % groups) throw ShapeError("cc_bruteforce: groups do not divide channels");
  const Grid s = to_grid(student);
  const Grid t = to_grid(teacher);
  const std::size_t len = student.channels() / groups;
  Real total = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s[0].size(); ++j)
      for (std::size_t k = 0; k < groups; ++k) {
        const auto fs = slice(s, i, j, k, len);
        const Real numerator = std::exp(-dist(fs, slice(t, i, j, k, len), kind) / tau);
        Real denominator = 0;
        for (std::size_t w = 0; w < groups; ++w) {
          if (w == k) continue;
          denominator += std::exp(-dist(fs, slice(t, i, j, w, len), kind) / tau);
        }
        if (include_positive) denominator += numerator;
        total += -std::log(numerator / denominator);
      }
  return static_cast<double>(total / static_cast<Real>(s.size() * s[0].size() * groups));
}

std::vector<double> grad_finite_diff(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, const FiniteDiffSpec& spec) {
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + spec.epsilon;
    const double plus = f(probe);
    probe[i] = orig - spec.epsilon;
    const double minus = f(probe);
    probe[i] = orig;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw NumericError("grad_finite_diff: non-finite evaluation at coordinate " + std::to_string(i));
    }
    grad[i] = (plus - minus) / (2.0 * spec.epsilon);
  }
  return grad;
}

FeatureMap grad_finite_diff(const std::function<double(const FeatureMap&)>& f, const FeatureMap& x,
                            const FiniteDiffSpec& spec) {
  const std::size_t h = x.height();
  const std::size_t w = x.width();
  const std::size_t c = x.channels();
  auto flat = [&](std::span<const double> v) {
    return f(FeatureMap(h, w, c, std::vector<double>(v.begin(), v.end())));
  };
  return FeatureMap(h, w, c, grad_finite_diff(flat, x.values(), spec));
}

FeatureMap oc_grad_fd(const FeatureMap& student, const FeatureMap& teacher, const ContrastConfig& cfg,
                      const FiniteDiffSpec& spec) {
  if (!(cfg.tau > 0.0)) throw ParameterError("oc_grad_fd: temperature must be positive");
  const QuadLayout l{std::max<std::size_t>(cfg.pool_factor, 1), cfg.patch_side, cfg.patch_side, cfg.groups,
                     cfg.tau, cfg.distance, cfg.include_positive_in_denominator, cfg.pool_coupling};
  return quad_grad_fd(student, teacher, l, spec);
}

FeatureMap sc_grad_fd(const FeatureMap& student, const FeatureMap& teacher, double tau, DistanceKind kind,
                      bool include_positive, const FiniteDiffSpec& spec) {
  if (!(tau > 0.0)) throw ParameterError("sc_grad_fd: temperature must be positive");
  const QuadLayout l{1, student.height(), student.width(), 1, tau, kind, include_positive, PoolCoupling::Independent};
  return quad_grad_fd(student, teacher, l, spec);
}

FeatureMap cc_grad_fd(const FeatureMap& student, const FeatureMap& teacher, std::size_t groups, double tau,
                      DistanceKind kind, bool include_positive, const FiniteDiffSpec& spec) {
  if (!(tau > 0.0)) throw ParameterError("cc_grad_fd: temperature must be positive");
  const QuadLayout l{1, 1, 1, groups, tau, kind, include_positive, PoolCoupling::Independent};
  return quad_grad_fd(student, teacher, l, spec);
}

double max_relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), 1e-8});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

namespace {

Grid conv_grid(const Grid& in, const ConvLayer& layer) {
  const std::size_t co_n = layer.kernel.dim(0);
  const std::size_t ci_n = layer.kernel.dim(1);
  if (in[0][0].size() != ci_n) throw ShapeError("conv_bruteforce: channel mismatch");
  const long h = static_cast<long>(in.size());
  const long w = static_cast<long>(in[0].size());
  Grid out(in.size(), std::vector<std::vector<Real>>(in[0].size(), std::vector<Real>(co_n)));
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (std::size_t o = 0; o < co_n; ++o) {
        Real acc = layer.bias[o];
        for (std::size_t i = 0; i < ci_n; ++i)
          for (long ky = -1; ky <= 1; ++ky)
            for (long kx = -1; kx <= 1; ++kx) {
              if (y + ky < 0 || y + ky >= h || x + kx < 0 || x + kx >= w) continue;
              acc += static_cast<Real>(layer.kernel[((o * ci_n + i) * 3 + static_cast<std::size_t>(ky + 1)) * 3 +
                                                    static_cast<std::size_t>(kx + 1)]) *
                     in[static_cast<std::size_t>(y + ky)][static_cast<std::size_t>(x + kx)][i];
            }
        out[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)][o] = acc;
      }
  return out;
}

}  // namespace

FeatureMap conv_bruteforce(const FeatureMap& input, const ConvLayer& layer) {
  const Grid g = conv_grid(to_grid(input), layer);
  FeatureMap out(input.height(), input.width(), layer.kernel.dim(0));
  for (std::size_t y = 0; y < out.height(); ++y)
    for (std::size_t x = 0; x < out.width(); ++x)
      for (std::size_t c = 0; c < out.channels(); ++c) out.at(y, x, c) = static_cast<double>(g[y][x][c]);
  return out;
}

long double fd_bruteforce(const FeatureMap& teacher, const FeatureMap& student) {
  if (!student.congruent(teacher)) throw ShapeError("fd_bruteforce: shapes differ");
  const Grid s = to_grid(student);
  const Grid t = to_grid(teacher);
  Real total = 0;
  for (std::size_t y = 0; y < s.size(); ++y)
    for (std::size_t x = 0; x < s[0].size(); ++x)
      for (std::size_t c = 0; c < s[0][0].size(); ++c) total += (t[y][x][c] - s[y][x][c]) * (t[y][x][c] - s[y][x][c]);
  return total;
}

long double kd_bruteforce(const FeatureMap& student_logits, const FeatureMap& teacher_logits, double temperature) {
  if (!student_logits.congruent(teacher_logits)) throw ShapeError("kd_bruteforce: shapes differ");
  const Grid s = to_grid(student_logits);
  const Grid t = to_grid(teacher_logits);
  const Real temp = temperature;
  Real total = 0;
  for (std::size_t y = 0; y < s.size(); ++y)
    for (std::size_t x = 0; x < s[0].size(); ++x) {
      Real zs = 0;
      Real zt = 0;
      for (std::size_t k = 0; k < s[y][x].size(); ++k) {
        zs += std::exp(s[y][x][k] / temp);
        zt += std::exp(t[y][x][k] / temp);
      }
      for (std::size_t k = 0; k < s[y][x].size(); ++k) {
        const Real pt = std::exp(t[y][x][k] / temp) / zt;
        const Real ps = std::exp(s[y][x][k] / temp) / zs;
        total += pt * std::log(pt / ps);
      }
    }
  return total * temp * temp / static_cast<Real>(s.size() * s[0].size());
}

long double xent_bruteforce(const FeatureMap& logits, const LabelMap& labels) {
  if (logits.height() != labels.height() || logits.width() != labels.width()) {
    throw ShapeError("xent_bruteforce: shapes differ");
  }
  const Grid z = to_grid(logits);
  Real total = 0;
  std::size_t counted = 0;
  for (std::size_t y = 0; y < z.size(); ++y)
    for (std::size_t x = 0; x < z[0].size(); ++x) {
      const int label = labels.at(y, x);
      if (label == kIgnoreLabel) continue;
      Real sum = 0;
      for (Real v : z[y][x]) sum += std::exp(v);
      total -= std::log(std::exp(z[y][x][static_cast<std::size_t>(label)]) / sum);
      ++counted;
    }
  if (counted == 0) throw UndefinedResultError("xent_bruteforce: every pixel is ignored");
  return total / static_cast<Real>(counted);
}

std::vector<long double> generator_bruteforce(const FeatureMap& input, const ConvLayer& conv1, const ConvLayer& conv2) {
  Grid hidden = conv_grid(to_grid(input), conv1);
  for (auto& row : hidden)
    for (auto& px : row)
      for (Real& v : px) v = std::max<Real>(v, 0);
  const Grid g = conv_grid(hidden, conv2);
  std::vector<long double> out;
  for (const auto& row : g)
    for (const auto& px : row) out.insert(out.end(), px.begin(), px.end());
  return out;
}

std::vector<double> grad_finite_diff_extended(const std::function<long double(std::span<const double>)>& f,
                                              std::span<const double> x, const FiniteDiffSpec& spec) {
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    const double up = orig + spec.epsilon;
    const double down = orig - spec.epsilon;
    probe[i] = up;
    const long double plus = f(probe);
    probe[i] = down;
    const long double minus = f(probe);
    probe[i] = orig;
    grad[i] = static_cast<double>((plus - minus) / (static_cast<long double>(up) - static_cast<long double>(down)));
    if (!std::isfinite(grad[i])) throw NumericError("grad_finite_diff: non-finite evaluation at coordinate " + std::to_string(i));
  }
  return grad;
}

FeatureMap max_pool_bruteforce(const FeatureMap& input, std::size_t k) {
  if (k == 0 || input.height() % k || input.width() % k) throw ShapeError("max_pool_bruteforce: bad factor");
  const Grid pooled = pool_grid(to_grid(input), k, nullptr);
  FeatureMap out(input.height() / k, input.width() / k, input.channels());
  for (std::size_t y = 0; y < out.height(); ++y)
    for (std::size_t x = 0; x < out.width(); ++x)
      for (std::size_t c = 0; c < out.channels(); ++c) out.at(y, x, c) = static_cast<double>(pooled[y][x][c]);
  return out;
}

}  // namespace afdcd::oracle
