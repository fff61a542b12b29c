// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "gnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

namespace gnet::ops {

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

struct ConvDims {
  std::size_t n, c, h, w;     // input
  std::size_t o, kh, kw;      // kernel
  std::size_t ho, wo;         // output
  std::size_t cg, og;         // per-group channels
  std::size_t kcols;          // cg·kh·kw
  std::size_t pixels;         // ho·wo
  bool direct;                // 1×1, stride 1, pad 0: input is its own column matrix
};

template <typename T>
ConvDims conv_dims(const BasicTensor<T>& input, const BasicTensor<T>& kernel, ConvGeometry g) {
  require_rank4(input, "conv2d");
  if (kernel.rank() != 4) {
    throw DimensionError("conv2d", "kernel rank", "expected O×C/g×KH×KW, got " + shape_to_string(kernel.shape()));
  }
  if (g.groups < 1 || g.stride < 1 || g.padding < 0) {
    throw DimensionError("conv2d", "geometry", "groups and stride must be >= 1, padding >= 0");
  }
  ConvDims d{};
  d.n = input.dim(0);
  d.c = input.dim(1);
  d.h = input.dim(2);
  d.w = input.dim(3);
  d.o = kernel.dim(0);
  d.kh = kernel.dim(2);
  d.kw = kernel.dim(3);
  const auto groups = static_cast<std::size_t>(g.groups);
  if (d.c % groups != 0) {
    throw DimensionError("conv2d", "input channels",
                         std::to_string(d.c) + " not divisible by groups=" + std::to_string(groups));
  }
  if (d.o % groups != 0) {
    throw DimensionError("conv2d", "output channels",
                         std::to_string(d.o) + " not divisible by groups=" + std::to_string(groups));
  }
  d.cg = d.c / groups;
  d.og = d.o / groups;
  if (kernel.dim(1) != d.cg) {
    throw DimensionError("conv2d", "kernel input channels",
                         "kernel expects " + std::to_string(kernel.dim(1)) + " channels per group, input provides " +
                             std::to_string(d.cg));
  }
  d.ho = conv_output_extent(d.h, d.kh, g.stride, g.padding, "height");
  d.wo = conv_output_extent(d.w, d.kw, g.stride, g.padding, "width");
  d.kcols = d.cg * d.kh * d.kw;
  d.pixels = d.ho * d.wo;
  d.direct = d.kh == 1 && d.kw == 1 && g.stride == 1 && g.padding == 0;
  return d;
}

// Unfolds channels [c0, c0+cg) of one image into a (cg·kh·kw)×(ho·wo) matrix.
template <typename T>
void im2col(const T* image, const ConvDims& d, std::size_t c0, int stride, int pad, T* col) {
  const auto s = static_cast<std::ptrdiff_t>(stride);
  const auto p = static_cast<std::ptrdiff_t>(pad);
  const auto H = static_cast<std::ptrdiff_t>(d.h);
  const auto W = static_cast<std::ptrdiff_t>(d.w);
  for (std::size_t c = 0; c < d.cg; ++c) {
    const T* plane = image + (c0 + c) * d.h * d.w;
    for (std::size_t ki = 0; ki < d.kh; ++ki) {
      for (std::size_t kj = 0; kj < d.kw; ++kj) {
        T* row = col + ((c * d.kh + ki) * d.kw + kj) * d.pixels;
        for (std::size_t oh = 0; oh < d.ho; ++oh) {
          T* dst = row + oh * d.wo;
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh) * s - p + static_cast<std::ptrdiff_t>(ki);
          if (ih < 0 || ih >= H) {
            std::fill(dst, dst + d.wo, T(0));
            continue;
          }
          const T* src = plane + ih * W;
          const std::ptrdiff_t iw0 = static_cast<std::ptrdiff_t>(kj) - p;
          if (s == 1) {
            // valid ow range: 0 <= ow + iw0 < W
            const auto wo = static_cast<std::ptrdiff_t>(d.wo);
            const std::ptrdiff_t lo = std::clamp<std::ptrdiff_t>(-iw0, 0, wo);
            const std::ptrdiff_t hi = std::clamp<std::ptrdiff_t>(W - iw0, lo, wo);
            std::fill(dst, dst + lo, T(0));
            if (hi > lo) std::memcpy(dst + lo, src + lo + iw0, static_cast<std::size_t>(hi - lo) * sizeof(T));
            std::fill(dst + hi, dst + wo, T(0));
          } else {
            for (std::size_t ow = 0; ow < d.wo; ++ow) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow) * s + iw0;
              dst[ow] = (iw >= 0 && iw < W) ? src[iw] : T(0);
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates a column matrix back into the image.
template <typename T>
void col2im_add(const T* col, const ConvDims& d, std::size_t c0, int stride, int pad, T* image) {
  const auto s = static_cast<std::ptrdiff_t>(stride);
  const auto p = static_cast<std::ptrdiff_t>(pad);
  const auto H = static_cast<std::ptrdiff_t>(d.h);
  const auto W = static_cast<std::ptrdiff_t>(d.w);
  for (std::size_t c = 0; c < d.cg; ++c) {
    T* plane = image + (c0 + c) * d.h * d.w;
    for (std::size_t ki = 0; ki < d.kh; ++ki) {
      for (std::size_t kj = 0; kj < d.kw; ++kj) {
        const T* row = col + ((c * d.kh + ki) * d.kw + kj) * d.pixels;
        for (std::size_t oh = 0; oh < d.ho; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh) * s - p + static_cast<std::ptrdiff_t>(ki);
          if (ih < 0 || ih >= H) continue;
          const T* src = row + oh * d.wo;
          T* dst = plane + ih * W;
          const std::ptrdiff_t iw0 = static_cast<std::ptrdiff_t>(kj) - p;
          if (s == 1) {
            const auto wo = static_cast<std::ptrdiff_t>(d.wo);
            const std::ptrdiff_t lo = std::clamp<std::ptrdiff_t>(-iw0, 0, wo);
            const std::ptrdiff_t hi = std::clamp<std::ptrdiff_t>(W - iw0, lo, wo);
            for (std::ptrdiff_t ow = lo; ow < hi; ++ow) dst[ow + iw0] += src[ow];
          } else {
            for (std::size_t ow = 0; ow < d.wo; ++ow) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow) * s + iw0;
              if (iw >= 0 && iw < W) dst[iw] += src[ow];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void check_bn_params(const BasicTensor<T>& input, const BatchNormParams<T>& p) {
  const std::size_t c = input.dim(1);
  auto check = [&](const BasicTensor<T>& t, const char* axis) {
    if (t.size() != c) {
      throw DimensionError("batchnorm2d", axis,
                           "expected " + std::to_string(c) + " entries, got " + std::to_string(t.size()));
    }
  };
  check(p.gamma, "gamma");
  check(p.beta, "beta");
  check(p.running_mean, "running_mean");
  check(p.running_var, "running_var");
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, int stride, int padding, const char* axis) {
  const auto padded = static_cast<std::ptrdiff_t>(in) + 2 * padding;
  if (static_cast<std::ptrdiff_t>(kernel) > padded) {
    throw DimensionError("window", axis,
                         "kernel " + std::to_string(kernel) + " larger than padded extent " + std::to_string(padded));
  }
  return static_cast<std::size_t>((padded - static_cast<std::ptrdiff_t>(kernel)) / stride + 1);
}

// ---------------------------------------------------------------- conv2d

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, ConvGeometry geom,
                      const BasicTensor<T>* bias) {
  const ConvDims d = conv_dims(input, kernel, geom);
  if (bias && bias->size() != d.o) {
    throw DimensionError("conv2d", "bias", "expected " + std::to_string(d.o) + " entries");
  }
  BasicTensor<T> out({d.n, d.o, d.ho, d.wo});
  std::vector<T> col(d.direct ? 0 : d.kcols * d.pixels);
  const auto groups = static_cast<std::size_t>(geom.groups);
  for (std::size_t n = 0; n < d.n; ++n) {
    const T* image = input.data() + n * d.c * d.h * d.w;
    for (std::size_t g = 0; g < groups; ++g) {
      const T* cols = image + g * d.cg * d.h * d.w;
      if (!d.direct) {
        im2col(image, d, g * d.cg, geom.stride, geom.padding, col.data());
        cols = col.data();
      }
      CMapRM<T> w(kernel.data() + g * d.og * d.kcols, static_cast<Eigen::Index>(d.og),
                  static_cast<Eigen::Index>(d.kcols));
      CMapRM<T> x(cols, static_cast<Eigen::Index>(d.kcols), static_cast<Eigen::Index>(d.pixels));
      MapRM<T> y(out.data() + (n * d.o + g * d.og) * d.pixels, static_cast<Eigen::Index>(d.og),
                 static_cast<Eigen::Index>(d.pixels));
      y.noalias() = w * x;
    }
    if (bias) {
      for (std::size_t o = 0; o < d.o; ++o) {
        T* plane = out.data() + (n * d.o + o) * d.pixels;
        const T b = (*bias)[o];
        for (std::size_t p = 0; p < d.pixels; ++p) plane[p] += b;
      }
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& upstream, const BasicTensor<T>& input,
                             const BasicTensor<T>& kernel, ConvGeometry geom, bool with_bias, bool need_input_grad) {
  const ConvDims d = conv_dims(input, kernel, geom);
  const Shape expected{d.n, d.o, d.ho, d.wo};
  if (upstream.shape() != expected) {
    throw DimensionError("conv2d_backward", "upstream",
                         "expected " + shape_to_string(expected) + ", got " + shape_to_string(upstream.shape()));
  }
  ConvGrads<T> grads;
  grads.kernel = BasicTensor<T>::zeros(kernel.shape());
  if (need_input_grad) grads.input = BasicTensor<T>::zeros(input.shape());
  if (with_bias) grads.bias = BasicTensor<T>::zeros({d.o});

  std::vector<T> col(d.direct ? 0 : d.kcols * d.pixels);
  std::vector<T> dcol(d.direct || !need_input_grad ? 0 : d.kcols * d.pixels);
  const auto groups = static_cast<std::size_t>(geom.groups);
  const auto og = static_cast<Eigen::Index>(d.og);
  const auto kc = static_cast<Eigen::Index>(d.kcols);
  const auto px = static_cast<Eigen::Index>(d.pixels);
  for (std::size_t n = 0; n < d.n; ++n) {
    const T* image = input.data() + n * d.c * d.h * d.w;
    for (std::size_t g = 0; g < groups; ++g) {
      const T* cols = image + g * d.cg * d.h * d.w;
      if (!d.direct) {
        im2col(image, d, g * d.cg, geom.stride, geom.padding, col.data());
        cols = col.data();
      }
      CMapRM<T> dy(upstream.data() + (n * d.o + g * d.og) * d.pixels, og, px);
      CMapRM<T> x(cols, kc, px);
      MapRM<T> dw(grads.kernel.data() + g * d.og * d.kcols, og, kc);
      dw.noalias() += dy * x.transpose();
      if (need_input_grad) {
        CMapRM<T> w(kernel.data() + g * d.og * d.kcols, og, kc);
        if (d.direct) {
          MapRM<T> dx(grads.input.data() + n * d.c * d.h * d.w + g * d.cg * d.h * d.w, kc, px);
          dx.noalias() = w.transpose() * dy;
        } else {
          MapRM<T> dc(dcol.data(), kc, px);
          dc.noalias() = w.transpose() * dy;
          col2im_add(dcol.data(), d, g * d.cg, geom.stride, geom.padding,
                     grads.input.data() + n * d.c * d.h * d.w);
        }
      }
    }
    if (with_bias) {
      for (std::size_t o = 0; o < d.o; ++o) {
        const T* plane = upstream.data() + (n * d.o + o) * d.pixels;
        T acc = 0;
        for (std::size_t p = 0; p < d.pixels; ++p) acc += plane[p];
        grads.bias[o] += acc;
      }
    }
  }
  return grads;
}

// ---------------------------------------------------------------- batch norm

template <typename T>
BasicTensor<T> batchnorm2d(const BasicTensor<T>& input, BatchNormParams<T> params, Mode mode,
                           BatchNormCache<T>* cache, double eps) {
  require_rank4(input, "batchnorm2d");
  check_bn_params(input, params);
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  BasicTensor<T> out(input.shape());
  if (mode == Mode::Eval) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(params.running_var[ch]) + eps));
      const T scale = params.gamma[ch] * inv;
      const T shift = params.beta[ch] - params.running_mean[ch] * scale;
      for (std::size_t i = 0; i < n; ++i) {
        const T* src = input.data() + (i * c + ch) * hw;
        T* dst = out.data() + (i * c + ch) * hw;
        for (std::size_t p = 0; p < hw; ++p) dst[p] = src[p] * scale + shift;
      }
    }
    return out;
  }

  const std::size_t count = n * hw;
  if (count < 2) {
    throw DegenerateBatchError("batchnorm2d: train mode needs at least 2 values per channel (N·H·W = " +
                               std::to_string(count) + ")");
  }
  BatchNormCache<T> local;
  BatchNormCache<T>& stats = cache ? *cache : local;
  stats.mean.assign(c, T(0));
  stats.inv_std.assign(c, T(0));
  const double momentum = kBatchNormMomentum;
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const T* src = input.data() + (i * c + ch) * hw;
      for (std::size_t p = 0; p < hw; ++p) sum += src[p];
    }
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const T* src = input.data() + (i * c + ch) * hw;
      for (std::size_t p = 0; p < hw; ++p) {
        const double dv = src[p] - mean;
        sq += dv * dv;
      }
    }
    const double var = sq / static_cast<double>(count);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    stats.mean[ch] = static_cast<T>(mean);
    stats.inv_std[ch] = static_cast<T>(inv_std);

    const T scale = static_cast<T>(params.gamma[ch] * inv_std);
    const T shift = static_cast<T>(params.beta[ch] - mean * params.gamma[ch] * inv_std);
    for (std::size_t i = 0; i < n; ++i) {
      const T* src = input.data() + (i * c + ch) * hw;
      T* dst = out.data() + (i * c + ch) * hw;
      for (std::size_t p = 0; p < hw; ++p) dst[p] = src[p] * scale + shift;
    }
    const double unbiased = var * static_cast<double>(count) / static_cast<double>(count - 1);
    params.running_mean[ch] = static_cast<T>((1.0 - momentum) * params.running_mean[ch] + momentum * mean);
    params.running_var[ch] = static_cast<T>((1.0 - momentum) * params.running_var[ch] + momentum * unbiased);
  }
  return out;
}

template <typename T>
BatchNormGrads<T> batchnorm2d_backward(const BasicTensor<T>& upstream, const BasicTensor<T>& input,
                                       const BasicTensor<T>& gamma, const BatchNormCache<T>& cache) {
  input.require_same_shape(upstream, "batchnorm2d_backward");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (cache.mean.size() != c || gamma.size() != c) {
    throw DimensionError("batchnorm2d_backward", "channels", "cache/gamma do not match input channels");
  }
  BatchNormGrads<T> g{BasicTensor<T>(input.shape()), BasicTensor<T>::zeros({c}), BasicTensor<T>::zeros({c})};
  const double count = static_cast<double>(n * hw);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double mean = cache.mean[ch];
    const double inv_std = cache.inv_std[ch];
    double dbeta = 0.0, dgamma = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const T* x = input.data() + (i * c + ch) * hw;
      const T* dy = upstream.data() + (i * c + ch) * hw;
      for (std::size_t p = 0; p < hw; ++p) {
        dbeta += dy[p];
        dgamma += dy[p] * (x[p] - mean) * inv_std;
      }
    }
    g.beta[ch] = static_cast<T>(dbeta);
    g.gamma[ch] = static_cast<T>(dgamma);
    // dx = gamma·inv_std·(dy - mean(dy) - xhat·mean(dy·xhat))
    const T k = static_cast<T>(gamma[ch] * inv_std);
    const T mdy = static_cast<T>(dbeta / count);
    const T mdx = static_cast<T>(dgamma / count);
    const T m = static_cast<T>(mean);
    const T is = static_cast<T>(inv_std);
    for (std::size_t i = 0; i < n; ++i) {
      const T* x = input.data() + (i * c + ch) * hw;
      const T* dy = upstream.data() + (i * c + ch) * hw;
      T* dx = g.input.data() + (i * c + ch) * hw;
      for (std::size_t p = 0; p < hw; ++p) dx[p] = k * (dy[p] - mdy - (x[p] - m) * is * mdx);
    }
  }
  return g;
}

// ---------------------------------------------------------------- activations

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& input, T slope) {
  BasicTensor<T> out = input;
  leaky_relu_inplace(out, slope);
  return out;
}

template <typename T>
void leaky_relu_inplace(BasicTensor<T>& x, T slope) {
  T* p = x.data();
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) p[i] = p[i] > T(0) ? p[i] : p[i] * slope;
}

template <typename T>
BasicTensor<T> leaky_relu_backward(const BasicTensor<T>& upstream, const BasicTensor<T>& forward_value, T slope) {
  upstream.require_same_shape(forward_value, "leaky_relu_backward");
  BasicTensor<T> out(upstream.shape());
  const T* dy = upstream.data();
  const T* v = forward_value.data();
  T* dx = out.data();
  const std::size_t n = upstream.size();
  for (std::size_t i = 0; i < n; ++i) dx[i] = v[i] > T(0) ? dy[i] : dy[i] * slope;
  return out;
}

// ---------------------------------------------------------------- pooling

template <typename T>
MaxPoolResult<T> maxpool2d(const BasicTensor<T>& input, int kernel, int stride, int padding) {
  require_rank4(input, "maxpool2d");
  if (kernel < 1 || stride < 1 || padding < 0) {
    throw DimensionError("maxpool2d", "geometry", "kernel and stride must be >= 1, padding >= 0");
  }
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const auto k = static_cast<std::size_t>(kernel);
  const std::size_t ho = conv_output_extent(h, k, stride, padding, "height");
  const std::size_t wo = conv_output_extent(w, k, stride, padding, "width");
  MaxPoolResult<T> r{BasicTensor<T>({n, c, ho, wo}), std::vector<std::uint32_t>(n * c * ho * wo)};
  const auto H = static_cast<std::ptrdiff_t>(h);
  const auto W = static_cast<std::ptrdiff_t>(w);
  std::size_t out_i = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* src = input.data() + plane * h * w;
    const auto base = static_cast<std::uint32_t>(plane * h * w);
    for (std::size_t oh = 0; oh < ho; ++oh) {
      const std::ptrdiff_t h0 = static_cast<std::ptrdiff_t>(oh) * stride - padding;
      for (std::size_t ow = 0; ow < wo; ++ow, ++out_i) {
        const std::ptrdiff_t w0 = static_cast<std::ptrdiff_t>(ow) * stride - padding;
        T best = -std::numeric_limits<T>::infinity();
        std::ptrdiff_t best_i = -1;
        for (std::ptrdiff_t ih = std::max<std::ptrdiff_t>(h0, 0); ih < std::min<std::ptrdiff_t>(h0 + kernel, H); ++ih) {
          for (std::ptrdiff_t iw = std::max<std::ptrdiff_t>(w0, 0); iw < std::min<std::ptrdiff_t>(w0 + kernel, W);
               ++iw) {
            const T v = src[ih * W + iw];
            if (best_i < 0 || v > best) {
              best = v;
              best_i = ih * W + iw;
            }
          }
        }
        if (best_i < 0) {
          throw DimensionError("maxpool2d", "window", "a pooling window lies entirely in the padding");
        }
        r.output[out_i] = best;
        r.argmax[out_i] = base + static_cast<std::uint32_t>(best_i);
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& upstream, std::span<const std::uint32_t> argmax,
                                  const Shape& input_shape) {
  if (argmax.size() != upstream.size()) {
    throw DimensionError("maxpool2d_backward", "upstream", "argmax length does not match upstream");
  }
  auto dx = BasicTensor<T>::zeros(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += upstream[i];
  return dx;
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input) {
  require_rank4(input, "global_avg_pool");
  return avg_pool_region(input, 0, input.dim(2));
}

template <typename T>
BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>& upstream, const Shape& input_shape) {
  auto dx = BasicTensor<T>::zeros(input_shape);
  avg_pool_region_backward(upstream, 0, input_shape.at(2), dx);
  return dx;
}

template <typename T>
BasicTensor<T> avg_pool_region(const BasicTensor<T>& input, std::size_t row_start, std::size_t row_end) {
  require_rank4(input, "avg_pool_region");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (row_start >= row_end || row_end > h) {
    throw DimensionError("avg_pool_region", "rows",
                         "region [" + std::to_string(row_start) + ", " + std::to_string(row_end) +
                             ") is empty or exceeds height " + std::to_string(h));
  }
  BasicTensor<T> out({n, c});
  const std::size_t count = (row_end - row_start) * w;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* src = input.data() + plane * h * w + row_start * w;
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i) acc += src[i];
    out[plane] = static_cast<T>(acc / static_cast<double>(count));
  }
  return out;
}

template <typename T>
void avg_pool_region_backward(const BasicTensor<T>& upstream, std::size_t row_start, std::size_t row_end,
                              BasicTensor<T>& grad_input) {
  require_rank4(grad_input, "avg_pool_region_backward");
  const std::size_t n = grad_input.dim(0), c = grad_input.dim(1), h = grad_input.dim(2), w = grad_input.dim(3);
  if (upstream.size() != n * c) {
    throw DimensionError("avg_pool_region_backward", "upstream", "expected N×C = " + std::to_string(n * c));
  }
  if (row_start >= row_end || row_end > h) {
    throw DimensionError("avg_pool_region_backward", "rows", "empty or out-of-range region");
  }
  const std::size_t count = (row_end - row_start) * w;
  const T scale = static_cast<T>(1.0 / static_cast<double>(count));
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    T* dst = grad_input.data() + plane * h * w + row_start * w;
    const T g = upstream[plane] * scale;
    for (std::size_t i = 0; i < count; ++i) dst[i] += g;
  }
}

// ---------------------------------------------------------------- dense

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  if (input.rank() != 2 || weight.rank() != 2) {
    throw DimensionError("linear", "rank", "expected N×D input and C×D weight");
  }
  const std::size_t n = input.dim(0), d = input.dim(1), c = weight.dim(0);
  if (weight.dim(1) != d) {
    throw DimensionError("linear", "features",
                         "input has " + std::to_string(d) + " features, weight expects " + std::to_string(weight.dim(1)));
  }
  if (bias.size() != c) throw DimensionError("linear", "bias", "expected " + std::to_string(c) + " entries");
  BasicTensor<T> out({n, c});
  CMapRM<T> x(input.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  CMapRM<T> wm(weight.data(), static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(d));
  MapRM<T> y(out.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c));
  y.noalias() = x * wm.transpose();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bias[j];
  }
  return out;
}

template <typename T>
LinearGrads<T> linear_backward(const BasicTensor<T>& upstream, const BasicTensor<T>& input,
                               const BasicTensor<T>& weight) {
  const std::size_t n = input.dim(0), d = input.dim(1), c = weight.dim(0);
  if (upstream.shape() != Shape{n, c}) {
    throw DimensionError("linear_backward", "upstream", "expected " + shape_to_string(Shape{n, c}));
  }
  LinearGrads<T> g{BasicTensor<T>({n, d}), BasicTensor<T>({c, d}), BasicTensor<T>::zeros({c})};
  const auto ni = static_cast<Eigen::Index>(n), di = static_cast<Eigen::Index>(d), ci = static_cast<Eigen::Index>(c);
  CMapRM<T> dy(upstream.data(), ni, ci);
  CMapRM<T> x(input.data(), ni, di);
  CMapRM<T> wm(weight.data(), ci, di);
  MapRM<T>(g.input.data(), ni, di).noalias() = dy * wm;
  MapRM<T>(g.weight.data(), ci, di).noalias() = dy.transpose() * x;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) g.bias[j] += upstream[i * c + j];
  }
  return g;
}

template <typename T>
SoftmaxLoss<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw DimensionError("softmax_cross_entropy", "rank", "expected B×C logits");
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  if (labels.size() != b) {
    throw DimensionError("softmax_cross_entropy", "batch",
                         std::to_string(labels.size()) + " labels for " + std::to_string(b) + " rows");
  }
  SoftmaxLoss<T> r{0.0, BasicTensor<T>({b, c})};
  for (std::size_t i = 0; i < b; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(c) + ")");
    }
    const T* row = logits.data() + i * c;
    T* grow = r.grad_logits.data() + i * c;
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max<double>(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
    const double log_z = std::log(z);
    r.loss += log_z - (static_cast<double>(row[y]) - mx);
    for (std::size_t j = 0; j < c; ++j) {
      grow[j] = static_cast<T>(std::exp(static_cast<double>(row[j]) - mx - log_z));
    }
    grow[y] -= T(1);
  }
  return r;
}

// ---------------------------------------------------------------- layout helpers

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank4(a, "concat_channels");
  require_rank4(b, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw DimensionError("concat_channels", "shape", shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  BasicTensor<T> out({n, ca + cb, a.dim(2), a.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::memcpy(out.data() + i * (ca + cb) * hw, a.data() + i * ca * hw, ca * hw * sizeof(T));
    std::memcpy(out.data() + (i * (ca + cb) + ca) * hw, b.data() + i * cb * hw, cb * hw * sizeof(T));
  }
  return out;
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, std::size_t begin, std::size_t end) {
  require_rank4(x, "slice_channels");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (begin >= end || end > c) throw DimensionError("slice_channels", "channels", "invalid channel range");
  BasicTensor<T> out({n, end - begin, x.dim(2), x.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::memcpy(out.data() + i * (end - begin) * hw, x.data() + (i * c + begin) * hw, (end - begin) * hw * sizeof(T));
  }
  return out;
}

template <typename T>
BasicTensor<T> flip_horizontal(const BasicTensor<T>& x) {
  if (x.rank() < 1) throw DimensionError("flip_horizontal", "rank", "empty tensor");
  BasicTensor<T> out(x.shape());
  const std::size_t w = x.shape().back();
  const std::size_t rows = x.size() / w;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* src = x.data() + r * w;
    T* dst = out.data() + r * w;
    for (std::size_t j = 0; j < w; ++j) dst[j] = src[w - 1 - j];
  }
  return out;
}

#define GNET_INSTANTIATE_OPS(T)                                                                                    \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, ConvGeometry, const BasicTensor<T>*); \
  template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,        \
                                        ConvGeometry, bool, bool);                                                  \
  template BasicTensor<T> batchnorm2d(const BasicTensor<T>&, BatchNormParams<T>, Mode, BatchNormCache<T>*, double); \
  template BatchNormGrads<T> batchnorm2d_backward(const BasicTensor<T>&, const BasicTensor<T>&,                     \
                                                  const BasicTensor<T>&, const BatchNormCache<T>&);                 \
  template BasicTensor<T> leaky_relu(const BasicTensor<T>&, T);                                                     \
  template void leaky_relu_inplace(BasicTensor<T>&, T);                                                             \
  template BasicTensor<T> leaky_relu_backward(const BasicTensor<T>&, const BasicTensor<T>&, T);                     \
  template MaxPoolResult<T> maxpool2d(const BasicTensor<T>&, int, int, int);                                        \
  template BasicTensor<T> maxpool2d_backward(const BasicTensor<T>&, std::span<const std::uint32_t>, const Shape&);  \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                                                   \
  template BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>&, const Shape&);                            \
  template BasicTensor<T> avg_pool_region(const BasicTensor<T>&, std::size_t, std::size_t);                         \
  template void avg_pool_region_backward(const BasicTensor<T>&, std::size_t, std::size_t, BasicTensor<T>&);         \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);              \
  template LinearGrads<T> linear_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);     \
  template SoftmaxLoss<T> softmax_cross_entropy(const BasicTensor<T>&, std::span<const int>);                       \
  template BasicTensor<T> concat_channels(const BasicTensor<T>&, const BasicTensor<T>&);                            \
  template BasicTensor<T> slice_channels(const BasicTensor<T>&, std::size_t, std::size_t);                          \
  template BasicTensor<T> flip_horizontal(const BasicTensor<T>&);

GNET_INSTANTIATE_OPS(float)
GNET_INSTANTIATE_OPS(double)

#undef GNET_INSTANTIATE_OPS

}  // namespace gnet::ops
