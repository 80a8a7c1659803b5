#include "afdcd/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace afdcd {

namespace {

void check_conv_input(const FeatureMap& input, const ConvLayer& layer) {
  if (layer.kernel.rank() != 4 || layer.kernel.dim(2) != 3 || layer.kernel.dim(3) != 3) {
    throw ShapeError("conv kernel must be (out, in, 3, 3)");
  }
  if (layer.bias.rank() != 1 || layer.bias.dim(0) != layer.out_channels()) {
    throw ShapeError("conv bias length must equal out-channels");
  }
  if (input.channels() != layer.in_channels()) {
    throw ShapeError("conv2d: input has " + std::to_string(input.channels()) +
                     " channels, layer expects " + std::to_string(layer.in_channels()));
  }
}

// (out, in, 3, 3) -> (3, 3, in, out) so the innermost loop runs over
// contiguous output channels.
std::vector<double> pack_kernel(const ConvLayer& layer) {
  const std::size_t co_n = layer.out_channels();
  const std::size_t ci_n = layer.in_channels();
  std::vector<double> packed(9 * ci_n * co_n);
  for (std::size_t co = 0; co < co_n; ++co)
    for (std::size_t ci = 0; ci < ci_n; ++ci)
      for (std::size_t t = 0; t < 9; ++t)
        packed[(t * ci_n + ci) * co_n + co] = layer.weight(co, ci, t / 3, t % 3);
  return packed;
}

// (out, in, 3, 3) -> (3, 3, out, in) for the input-gradient gather.
std::vector<double> pack_kernel_transposed(const ConvLayer& layer) {
  const std::size_t co_n = layer.out_channels();
  const std::size_t ci_n = layer.in_channels();
  std::vector<double> packed(9 * ci_n * co_n);
  for (std::size_t co = 0; co < co_n; ++co)
    for (std::size_t ci = 0; ci < ci_n; ++ci)
      for (std::size_t t = 0; t < 9; ++t)
        packed[(t * co_n + co) * ci_n + ci] = layer.weight(co, ci, t / 3, t % 3);
  return packed;
}

long as_long(std::size_t v) { return static_cast<long>(v); }

}  // namespace

ConvLayer::ConvLayer(std::size_t out_channels, std::size_t in_channels)
    : kernel({out_channels, in_channels, 3, 3}), bias({out_channels}) {}

ConvLayer::ConvLayer(Tensor k, Tensor b) : kernel(std::move(k)), bias(std::move(b)) {
  if (kernel.rank() != 4 || kernel.dim(2) != 3 || kernel.dim(3) != 3) {
    throw ShapeError("conv kernel must be (out, in, 3, 3)");
  }
  if (bias.rank() != 1 || bias.dim(0) != kernel.dim(0)) {
    throw ShapeError("conv bias length must equal out-channels");
  }
}

PointwiseLayer::PointwiseLayer(std::size_t out_channels, std::size_t in_channels)
    : weight({out_channels, in_channels}), bias({out_channels}) {}

FeatureMap conv2d(const FeatureMap& input, const ConvLayer& layer) {
  check_conv_input(input, layer);
  const long h = as_long(input.height());
  const long w = as_long(input.width());
  const std::size_t ci_n = layer.in_channels();
  const std::size_t co_n = layer.out_channels();
  const std::vector<double> packed = pack_kernel(layer);
  FeatureMap out(input.height(), input.width(), co_n);

#pragma omp parallel for schedule(static)
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      double* __restrict o = out.pixel(y, x);
      for (std::size_t co = 0; co < co_n; ++co) o[co] = layer.bias[co];
      for (long ky = 0; ky < 3; ++ky) {
        const long yy = y + ky - 1;
        if (yy < 0 || yy >= h) continue;
        for (long kx = 0; kx < 3; ++kx) {
          const long xx = x + kx - 1;
          if (xx < 0 || xx >= w) continue;
          const double* in = input.pixel(yy, xx);
          const double* tap = packed.data() + (ky * 3 + kx) * ci_n * co_n;
          for (std::size_t ci = 0; ci < ci_n; ++ci) {
            const double v = in[ci];
            const double* __restrict row = tap + ci * co_n;
            for (std::size_t co = 0; co < co_n; ++co) o[co] += v * row[co];
          }
        }
      }
    }
  }
  return out;
}

ConvGrads conv2d_grad(const FeatureMap& input, const ConvLayer& layer, const FeatureMap& upstream) {
  check_conv_input(input, layer);
  if (upstream.height() != input.height() || upstream.width() != input.width() ||
      upstream.channels() != layer.out_channels()) {
    throw ShapeError("conv2d_grad: upstream shape does not match conv2d output");
  }
  const long h = as_long(input.height());
  const long w = as_long(input.width());
  const std::size_t ci_n = layer.in_channels();
  const std::size_t co_n = layer.out_channels();
  const std::vector<double> packed = pack_kernel_transposed(layer);

  ConvGrads g{FeatureMap(input.height(), input.width(), ci_n), Tensor(layer.kernel.shape()),
              Tensor(layer.bias.shape())};

  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      const double* up = upstream.pixel(y, x);
      for (std::size_t co = 0; co < co_n; ++co) g.bias[co] += up[co];
    }

  // Kernel gradient: one tap per thread, pixels accumulated in row-major order.
  std::vector<double> packed_grad(9 * ci_n * co_n, 0.0);
#pragma omp parallel for schedule(static)
  for (long t = 0; t < 9; ++t) {
    const long ky = t / 3;
    const long kx = t % 3;
    double* tap = packed_grad.data() + t * ci_n * co_n;
    for (long y = 0; y < h; ++y) {
      const long yy = y + ky - 1;
      if (yy < 0 || yy >= h) continue;
      for (long x = 0; x < w; ++x) {
        const long xx = x + kx - 1;
        if (xx < 0 || xx >= w) continue;
        const double* in = input.pixel(yy, xx);
        const double* __restrict up = upstream.pixel(y, x);
        for (std::size_t ci = 0; ci < ci_n; ++ci) {
          const double v = in[ci];
          double* __restrict row = tap + ci * co_n;
          for (std::size_t co = 0; co < co_n; ++co) row[co] += v * up[co];
        }
      }
    }
  }
  for (std::size_t co = 0; co < co_n; ++co)
    for (std::size_t ci = 0; ci < ci_n; ++ci)
      for (std::size_t t = 0; t < 9; ++t)
        g.kernel[(co * ci_n + ci) * 9 + t] = packed_grad[(t * ci_n + ci) * co_n + co];

  // Input gradient gathered per input pixel: one row per thread.
#pragma omp parallel for schedule(static)
  for (long yy = 0; yy < h; ++yy) {
    for (long xx = 0; xx < w; ++xx) {
      double* __restrict gi = g.input.pixel(yy, xx);
      for (long ky = 0; ky < 3; ++ky) {
        const long y = yy - ky + 1;
        if (y < 0 || y >= h) continue;
        for (long kx = 0; kx < 3; ++kx) {
          const long x = xx - kx + 1;
          if (x < 0 || x >= w) continue;
          const double* up = upstream.pixel(y, x);
          const double* tap = packed.data() + (ky * 3 + kx) * co_n * ci_n;
          for (std::size_t co = 0; co < co_n; ++co) {
            const double u = up[co];
            const double* __restrict row = tap + co * ci_n;
            for (std::size_t ci = 0; ci < ci_n; ++ci) gi[ci] += u * row[ci];
          }
        }
      }
    }
  }
  return g;
}

FeatureMap pointwise(const FeatureMap& input, const PointwiseLayer& layer) {
  if (input.channels() != layer.in_channels()) throw ShapeError("pointwise: channel mismatch");
  const std::size_t ci_n = layer.in_channels();
  const std::size_t co_n = layer.out_channels();
  FeatureMap out(input.height(), input.width(), co_n);
  const long n = as_long(input.pixels());
#pragma omp parallel for schedule(static)
  for (long p = 0; p < n; ++p) {
    const double* in = input.values().data() + p * ci_n;
    double* o = out.values().data() + p * co_n;
    for (std::size_t co = 0; co < co_n; ++co) {
      double s = layer.bias[co];
      for (std::size_t ci = 0; ci < ci_n; ++ci) s += layer.weight[co * ci_n + ci] * in[ci];
      o[co] = s;
    }
  }
  return out;
}

PointwiseGrads pointwise_grad(const FeatureMap& input, const PointwiseLayer& layer,
                              const FeatureMap& upstream) {
  if (input.channels() != layer.in_channels()) throw ShapeError("pointwise_grad: channel mismatch");
  if (upstream.height() != input.height() || upstream.width() != input.width() ||
      upstream.channels() != layer.out_channels()) {
    throw ShapeError("pointwise_grad: upstream shape mismatch");
  }
  const std::size_t ci_n = layer.in_channels();
  const std::size_t co_n = layer.out_channels();
  PointwiseGrads g{FeatureMap(input.height(), input.width(), ci_n), Tensor(layer.weight.shape()),
                   Tensor(layer.bias.shape())};
  for (std::size_t p = 0; p < input.pixels(); ++p) {
    const double* in = input.values().data() + p * ci_n;
    const double* up = upstream.values().data() + p * co_n;
    double* gi = g.input.values().data() + p * ci_n;
    for (std::size_t co = 0; co < co_n; ++co) {
      g.bias[co] += up[co];
      for (std::size_t ci = 0; ci < ci_n; ++ci) {
        g.weight[co * ci_n + ci] += up[co] * in[ci];
        gi[ci] += up[co] * layer.weight[co * ci_n + ci];
      }
    }
  }
  return g;
}

FeatureMap relu(const FeatureMap& x) {
  FeatureMap out = x;
  for (double& v : out.values()) v = std::max(v, 0.0);
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.values()) v = std::max(v, 0.0);
  return out;
}

FeatureMap relu_grad(const FeatureMap& x, const FeatureMap& upstream) {
  if (!x.congruent(upstream)) throw ShapeError("relu_grad: shape mismatch");
  FeatureMap out(x.height(), x.width(), x.channels());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? upstream[i] : 0.0;
  return out;
}

Tensor relu_grad(const Tensor& x, const Tensor& upstream) {
  if (!x.same_shape(upstream)) throw ShapeError("relu_grad: shape mismatch");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? upstream[i] : 0.0;
  return out;
}

PoolResult max_pool(const FeatureMap& x, std::size_t k) {
  if (k == 0) throw ParameterError("max_pool: factor must be positive");
  if (x.height() % k != 0 || x.width() % k != 0) {
    throw ShapeError("max_pool: extents " + std::to_string(x.height()) + "x" +
                     std::to_string(x.width()) + " not divisible by " + std::to_string(k));
  }
  const std::size_t oh = x.height() / k;
  const std::size_t ow = x.width() / k;
  const std::size_t c_n = x.channels();
  PoolResult r{FeatureMap(oh, ow, c_n), std::vector<std::size_t>(oh * ow * c_n), x.height(),
               x.width(), k};
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t c = 0; c < c_n; ++c) {
        std::size_t best = x.index(oy * k, ox * k, c);
        double best_v = x[best];
        for (std::size_t dy = 0; dy < k; ++dy)
          for (std::size_t dx = 0; dx < k; ++dx) {
            const std::size_t idx = x.index(oy * k + dy, ox * k + dx, c);
            if (x[idx] > best_v) {
              best_v = x[idx];
              best = idx;
            }
          }
        const std::size_t o = r.output.index(oy, ox, c);
        r.output[o] = best_v;
        r.argmax[o] = best;
      }
  return r;
}

FeatureMap max_pool_grad(const PoolResult& pool, const FeatureMap& upstream) {
  if (!upstream.congruent(pool.output)) throw ShapeError("max_pool_grad: upstream shape mismatch");
  FeatureMap g(pool.input_height, pool.input_width, pool.output.channels());
  for (std::size_t i = 0; i < upstream.size(); ++i) g[pool.argmax[i]] += upstream[i];
  return g;
}

XentResult softmax_xent(const FeatureMap& logits, const LabelMap& labels) {
  if (logits.height() != labels.height() || logits.width() != labels.width()) {
    throw ShapeError("softmax_xent: logits and labels differ in spatial extent");
  }
  const std::size_t k_n = logits.channels();
  XentResult r{0.0, FeatureMap(logits.height(), logits.width(), k_n), 0};
  for (std::size_t p = 0; p < logits.pixels(); ++p) {
    const int label = labels[p];
    if (label == kIgnoreLabel) continue;
    if (label < 0 || static_cast<std::size_t>(label) >= k_n) {
      throw ParameterError("softmax_xent: label " + std::to_string(label) + " out of range");
    }
    ++r.counted;
  }
  if (r.counted == 0) return r;

  const double inv = 1.0 / static_cast<double>(r.counted);
  std::vector<double> prob(k_n);
  for (std::size_t p = 0; p < logits.pixels(); ++p) {
    const int label = labels[p];
    if (label == kIgnoreLabel) continue;
    const double* z = logits.values().data() + p * k_n;
    const double zmax = *std::max_element(z, z + k_n);
    double sum = 0.0;
    for (std::size_t k = 0; k < k_n; ++k) {
      prob[k] = std::exp(z[k] - zmax);
      sum += prob[k];
    }
    r.loss += (std::log(sum) + zmax - z[label]) * inv;
    double* g = r.grad.values().data() + p * k_n;
    for (std::size_t k = 0; k < k_n; ++k) {
      g[k] = (prob[k] / sum - (static_cast<int>(k) == label ? 1.0 : 0.0)) * inv;
    }
  }
  require_finite(std::span<const double>(&r.loss, 1), "softmax_xent");
  return r;
}

void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
              double lr, double momentum) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw ShapeError("sgd_step: params, grads and velocity must have equal length");
  }
  if (!(lr > 0.0)) throw ParameterError("sgd_step: learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("sgd_step: momentum must be in [0,1)");
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grads[i];
    params[i] -= lr * velocity[i];
  }
}

namespace reference {

FeatureMap conv2d(const FeatureMap& input, const ConvLayer& layer) {
  check_conv_input(input, layer);
  const long h = as_long(input.height());
  const long w = as_long(input.width());
  FeatureMap out(input.height(), input.width(), layer.out_channels());
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (std::size_t co = 0; co < layer.out_channels(); ++co) {
        double s = layer.bias[co];
        for (std::size_t ci = 0; ci < layer.in_channels(); ++ci)
          for (long ky = 0; ky < 3; ++ky)
            for (long kx = 0; kx < 3; ++kx) {
              const long yy = y + ky - 1;
              const long xx = x + kx - 1;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              s += layer.weight(co, ci, ky, kx) * input.at(yy, xx, ci);
            }
        out.at(y, x, co) = s;
      }
  return out;
}

ConvGrads conv2d_grad(const FeatureMap& input, const ConvLayer& layer, const FeatureMap& upstream) {
  check_conv_input(input, layer);
  if (upstream.height() != input.height() || upstream.width() != input.width() ||
      upstream.channels() != layer.out_channels()) {
    throw ShapeError("conv2d_grad: upstream shape does not match conv2d output");
  }
  const long h = as_long(input.height());
  const long w = as_long(input.width());
  ConvGrads g{FeatureMap(input.height(), input.width(), layer.in_channels()),
              Tensor(layer.kernel.shape()), Tensor(layer.bias.shape())};
  const std::size_t ci_n = layer.in_channels();
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (std::size_t co = 0; co < layer.out_channels(); ++co) {
        const double up = upstream.at(y, x, co);
        g.bias[co] += up;
        for (std::size_t ci = 0; ci < ci_n; ++ci)
          for (long ky = 0; ky < 3; ++ky)
            for (long kx = 0; kx < 3; ++kx) {
              const long yy = y + ky - 1;
              const long xx = x + kx - 1;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              g.kernel[((co * ci_n + ci) * 3 + ky) * 3 + kx] += up * input.at(yy, xx, ci);
              g.input.at(yy, xx, ci) += up * layer.weight(co, ci, ky, kx);
            }
      }
  return g;
}

}  // namespace reference

}  // namespace afdcd
