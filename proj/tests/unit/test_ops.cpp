// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "gnet/gradcheck.hpp"
#include "gnet/ops.hpp"
#include "test_support.hpp"

using namespace gnet;
using gnet::test::max_abs_diff;
using gnet::test::random_away_from_zero;
using gnet::test::random_tensor;
using gnet::test::weighted_sum;

namespace {

constexpr int kSeeds = 20;

// Direct cross-correlation with zero padding, one loop per index.
TensorD direct_conv(const TensorD& x, const TensorD& k, int groups, int stride, int pad, const TensorD* bias) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t o = k.dim(0), cg = k.dim(1), kh = k.dim(2), kw = k.dim(3);
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1, wo = (w + 2 * pad - kw) / stride + 1;
  const std::size_t og = o / groups;
  (void)c;
  TensorD y({n, o, ho, wo});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t i = 0; i < ho; ++i)
        for (std::size_t j = 0; j < wo; ++j) {
          double s = bias ? (*bias)[oc] : 0.0;
          const std::size_t g = oc / og;
          for (std::size_t ic = 0; ic < cg; ++ic)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const long r = static_cast<long>(i * stride + u) - pad;
                const long q = static_cast<long>(j * stride + v) - pad;
                if (r < 0 || q < 0 || r >= static_cast<long>(h) || q >= static_cast<long>(w)) continue;
                s += x.at(b, g * cg + ic, r, q) * k.at(oc, ic, u, v);
              }
          y.at(b, oc, i, j) = s;
        }
  return y;
}

}  // namespace

// ---------------------------------------------------------------- conv2d

TEST_CASE("conv2d identity kernel") {
  Tensor x({1, 1, 3, 3}, 1.0f);
  Tensor k({1, 1, 1, 1}, 1.0f);
  CHECK(ops::conv2d(x, k, {}) == x);
}

TEST_CASE("conv2d groups isolate channels") {
  Tensor x({1, 2, 2, 2}, std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8});
  Tensor k({2, 1, 1, 1}, std::vector<float>{2, -1});
  Tensor y = ops::conv2d(x, k, {2, 1, 0});
  CHECK(y == Tensor({1, 2, 2, 2}, std::vector<float>{2, 4, 6, 8, -5, -6, -7, -8}));
}

TEST_CASE("conv2d matches a direct loop convolution") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    const TensorD x = random_tensor({2, 4, 5, 5}, 100 + seed);
    const TensorD k = random_tensor({3, 4, 3, 3}, 200 + seed);
    const TensorD bias = random_tensor({3}, 300 + seed);
    CHECK(max_abs_diff(ops::conv2d(x, k, {1, 2, 1}, &bias), direct_conv(x, k, 1, 2, 1, &bias)) < 1e-12);
  }
}

TEST_CASE("conv2d grouped, strided and 1×1 paths match the direct loop") {
  struct Case {
    Shape x, k;
    int groups, stride, pad;
  };
  const Case cases[] = {
      {{2, 8, 6, 4}, {4, 2, 1, 1}, 4, 1, 0},  // grouped 1×1 (reduction style)
      {{1, 6, 7, 5}, {6, 3, 3, 3}, 2, 1, 1},
      {{2, 3, 9, 8}, {5, 3, 7, 7}, 1, 2, 3},  // stem geometry
      {{1, 4, 5, 6}, {2, 4, 1, 1}, 1, 2, 0},  // strided projection
      {{3, 5, 4, 4}, {6, 5, 1, 1}, 1, 1, 0},
      {{1, 2, 2, 3}, {2, 2, 3, 3}, 1, 1, 1},  // kernel wider than the image interior
  };
  int seed = 0;
  for (const auto& c : cases) {
    const TensorD x = random_tensor(c.x, 400 + seed);
    const TensorD k = random_tensor(c.k, 500 + seed++);
    CHECK(max_abs_diff(ops::conv2d(x, k, {c.groups, c.stride, c.pad}), direct_conv(x, k, c.groups, c.stride, c.pad,
                                                                                     nullptr)) < 1e-12);
  }
}

TEST_CASE("groups=1 equals grouped conv for block-diagonal kernels") {
  const TensorD x = random_tensor({2, 6, 4, 5}, 7);
  const TensorD kg = random_tensor({6, 2, 3, 3}, 8);
  TensorD kfull({6, 6, 3, 3});
  for (std::size_t o = 0; o < 6; ++o) {
    const std::size_t g = o / 2;
    for (std::size_t ic = 0; ic < 2; ++ic)
      for (std::size_t u = 0; u < 3; ++u)
        for (std::size_t v = 0; v < 3; ++v) kfull.at(o, g * 2 + ic, u, v) = kg.at(o, ic, u, v);
  }
  CHECK(max_abs_diff(ops::conv2d(x, kg, {3, 1, 1}), ops::conv2d(x, kfull, {1, 1, 1})) < 1e-12);
}

TEST_CASE("conv2d dimension errors name the axis") {
  const Tensor x({1, 3, 4, 4});
  try {
    ops::conv2d(x, Tensor({2, 2, 1, 1}), {});
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(e.axis().find("channels") != std::string::npos);
  }
  CHECK_THROWS_AS(ops::conv2d(x, Tensor({2, 1, 1, 1}), {3, 1, 0}), DimensionError);  // O not divisible
  CHECK_THROWS_AS(ops::conv2d(x, Tensor({2, 3, 7, 7}), {}), DimensionError);          // H' < 1
  const Tensor wrong_bias({3});
  CHECK_THROWS_AS(ops::conv2d(x, Tensor({2, 3, 1, 1}), {}, &wrong_bias), DimensionError);
}

TEST_CASE("conv2d_backward of a zero upstream is zero") {
  const TensorD x = random_tensor({1, 2, 4, 4}, 1);
  const TensorD k = random_tensor({3, 2, 3, 3}, 2);
  const auto g = ops::conv2d_backward(TensorD({1, 3, 4, 4}), x, k, {1, 1, 1}, true);
  for (double v : g.input.values()) CHECK(v == 0.0);
  for (double v : g.kernel.values()) CHECK(v == 0.0);
  for (double v : g.bias.values()) CHECK(v == 0.0);
}

TEST_CASE("conv2d_backward scalar chain rule on a single pixel") {
  const TensorD x({1, 1, 1, 1}, 3.0);
  const TensorD k({1, 1, 1, 1}, -2.0);
  const auto g = ops::conv2d_backward(TensorD({1, 1, 1, 1}, 5.0), x, k, {}, true);
  CHECK(g.kernel[0] == doctest::Approx(15.0));
  CHECK(g.input[0] == doctest::Approx(-10.0));
  CHECK(g.bias[0] == doctest::Approx(5.0));
}

TEST_CASE("conv2d_backward rejects a mis-shaped upstream") {
  const TensorD x({1, 2, 4, 4});
  const TensorD k({3, 2, 3, 3});
  CHECK_THROWS_AS(ops::conv2d_backward(TensorD({1, 3, 2, 2}), x, k, {1, 1, 1}), DimensionError);
}

TEST_CASE("conv2d gradients match finite differences") {
  struct Case {
    Shape x, k;
    ops::ConvGeometry geom;
  };
  const Case cases[] = {
      {{2, 4, 5, 5}, {3, 4, 3, 3}, {1, 2, 1}},
      {{2, 4, 3, 4}, {6, 2, 1, 1}, {2, 1, 0}},
      {{1, 3, 6, 5}, {2, 3, 1, 1}, {1, 2, 0}},
      {{1, 2, 7, 6}, {2, 2, 7, 7}, {1, 2, 3}},
  };
  for (int seed = 0; seed < kSeeds; ++seed) {
    const Case& c = cases[seed % 4];
    TensorD x = random_tensor(c.x, 1000 + seed);
    TensorD k = random_tensor(c.k, 2000 + seed);
    TensorD b = random_tensor({c.k[0]}, 3000 + seed);
    const TensorD w = random_tensor(ops::conv2d(x, k, c.geom).shape(), 4000 + seed);
    const auto loss = [&] { return weighted_sum(ops::conv2d(x, k, c.geom, &b), w); };
    const auto g = ops::conv2d_backward(w, x, k, c.geom, true);
    CHECK(finite_diff_check(loss, x, g.input) < 1e-4);
    CHECK(finite_diff_check(loss, k, g.kernel) < 1e-4);
    CHECK(finite_diff_check(loss, b, g.bias) < 1e-4);
  }
}

// ---------------------------------------------------------------- batch norm

namespace {

struct BnState {
  TensorD gamma, beta, mean, var;
  explicit BnState(std::size_t c) : gamma({c}, 1.0), beta({c}, 0.0), mean({c}, 0.0), var({c}, 1.0) {}
  ops::BatchNormParams<double> params() { return {gamma, beta, mean, var}; }
};

}  // namespace

TEST_CASE("batchnorm on standardized input is near identity") {
  // Two samples at ±1 per channel: mean 0, biased variance 1.
  TensorD x({2, 2, 1, 1}, std::vector<double>{1, -1, -1, 1});
  BnState s(2);
  const TensorD y = ops::batchnorm2d(x, s.params(), ops::Mode::Train);
  CHECK(max_abs_diff(x, y) < 1e-5);
}

TEST_CASE("batchnorm of constant input yields beta") {
  TensorD x({3, 2, 2, 2}, 4.0);
  BnState s(2);
  s.beta.fill(5.0);
  const TensorD y = ops::batchnorm2d(x, s.params(), ops::Mode::Train);
  for (double v : y.values()) CHECK(v == doctest::Approx(5.0));
}

TEST_CASE("batchnorm train output is standardized per channel") {
  const TensorD x = random_tensor({4, 3, 5, 6}, 11, -3.0, 7.0);
  BnState s(3);
  const TensorD y = ops::batchnorm2d(x, s.params(), ops::Mode::Train);
  const std::size_t m = 4 * 5 * 6;
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t h = 0; h < 5; ++h)
        for (std::size_t w = 0; w < 6; ++w) sum += y.at(n, c, h, w);
    const double mean = sum / m;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t h = 0; h < 5; ++h)
        for (std::size_t w = 0; w < 6; ++w) sq += (y.at(n, c, h, w) - mean) * (y.at(n, c, h, w) - mean);
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(sq / m - 1.0) < 1e-3);
  }
}

TEST_CASE("batchnorm running stats use momentum 0.1 and unbiased variance") {
  TensorD x({4, 1, 1, 1}, std::vector<double>{1, 2, 3, 6});
  BnState s(1);
  s.mean.fill(10.0);
  s.var.fill(2.0);
  ops::batchnorm2d(x, s.params(), ops::Mode::Train);
  // mean 3, unbiased variance (4 + 1 + 0 + 9) / 3
  CHECK(s.mean[0] == doctest::Approx(0.9 * 10.0 + 0.1 * 3.0));
  CHECK(s.var[0] == doctest::Approx(0.9 * 2.0 + 0.1 * 14.0 / 3.0));
}

TEST_CASE("batchnorm eval mode uses running stats") {
  TensorD x({1, 2, 1, 2}, std::vector<double>{1, 3, 5, 7});
  BnState s(2);
  s.mean = TensorD({2}, std::vector<double>{2, 6});
  s.var = TensorD({2}, std::vector<double>{4, 1});
  s.gamma = TensorD({2}, std::vector<double>{2, 1});
  s.beta = TensorD({2}, std::vector<double>{1, 0});
  const TensorD before_mean = s.mean;
  const TensorD y = ops::batchnorm2d(x, s.params(), ops::Mode::Eval);
  const double inv0 = 1.0 / std::sqrt(4.0 + 1e-5), inv1 = 1.0 / std::sqrt(1.0 + 1e-5);
  CHECK(y[0] == doctest::Approx(2.0 * (1 - 2) * inv0 + 1));
  CHECK(y[1] == doctest::Approx(2.0 * (3 - 2) * inv0 + 1));
  CHECK(y[2] == doctest::Approx((5 - 6) * inv1));
  CHECK(y[3] == doctest::Approx((7 - 6) * inv1));
  CHECK(s.mean == before_mean);
}

TEST_CASE("batchnorm rejects a degenerate train batch") {
  TensorD x({1, 3, 1, 1}, 1.0);
  BnState s(3);
  CHECK_THROWS_AS(ops::batchnorm2d(x, s.params(), ops::Mode::Train), ops::DegenerateBatchError);
  CHECK_NOTHROW(ops::batchnorm2d(x, s.params(), ops::Mode::Eval));
}

TEST_CASE("batchnorm gradients match finite differences") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    // With only two values per channel the normalized output is ±1 whatever
    // the input, leaving gradients at the rounding floor; use at least four.
    const Shape shape = seed % 2 ? Shape{4, 3, 1, 1} : Shape{3, 2, 3, 2};
    TensorD x = random_tensor(shape, 50 + seed, -2.0, 2.0);
    BnState s(shape[1]);
    s.gamma = random_tensor({shape[1]}, 60 + seed, 0.5, 1.5);
    s.beta = random_tensor({shape[1]}, 70 + seed);
    const TensorD w = random_tensor(shape, 80 + seed);
    const auto loss = [&] {
      BnState scratch = s;  // keep running stats untouched across probes
      return weighted_sum(ops::batchnorm2d(x, scratch.params(), ops::Mode::Train), w);
    };
    ops::BatchNormCache<double> cache;
    BnState run = s;
    ops::batchnorm2d(x, run.params(), ops::Mode::Train, &cache);
    const auto g = ops::batchnorm2d_backward(w, x, s.gamma, cache);
    CHECK(finite_diff_check(loss, x, g.input) < 1e-4);
    CHECK(finite_diff_check(loss, s.gamma, g.gamma) < 1e-4);
    CHECK(finite_diff_check(loss, s.beta, g.beta) < 1e-4);
  }
}

// ---------------------------------------------------------------- activations

TEST_CASE("leaky relu with slope 0.1") {
  const Tensor y = ops::leaky_relu(Tensor({3}, std::vector<float>{-1, 0, 2}), 0.1f);
  CHECK(y[0] == doctest::Approx(-0.1f));
  CHECK(y[1] == 0.0f);
  CHECK(y[2] == 2.0f);
}

TEST_CASE("leaky relu slope 1 is identity and slope 0 is relu") {
  const TensorD x = random_tensor({2, 3, 4, 4}, 5);
  CHECK(ops::leaky_relu(x, 1.0) == x);
  CHECK(ops::leaky_relu(x, 0.0) == ops::relu(x));
}

TEST_CASE("relu values") {
  CHECK(ops::relu(Tensor({3}, std::vector<float>{-3, 0, 3})) == Tensor({3}, std::vector<float>{0, 0, 3}));
  const Tensor pos = random_tensor<float>({10}, 3, 0.1, 2.0);
  CHECK(ops::relu(pos) == pos);
}

TEST_CASE("activation subgradients at zero") {
  const TensorD zero({1}, 0.0), up({1}, 1.0);
  CHECK(ops::leaky_relu_backward(up, zero, 0.1)[0] == doctest::Approx(0.1));
  CHECK(ops::relu_backward(up, zero)[0] == 0.0);
}

TEST_CASE("activation gradients match finite differences away from 0") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    TensorD x = random_away_from_zero({2, 3, 3, 3}, 90 + seed);
    const TensorD w = random_tensor(x.shape(), 91 + seed);
    for (double slope : {0.0, 0.1}) {
      const auto loss = [&] { return weighted_sum(ops::leaky_relu(x, slope), w); };
      const TensorD g = ops::leaky_relu_backward(w, x, slope);
      CHECK(finite_diff_check(loss, x, g) < 1e-6);
    }
  }
}

// ---------------------------------------------------------------- pooling

TEST_CASE("maxpool on a ramp") {
  Tensor x({1, 1, 4, 4});
  std::iota(x.values().begin(), x.values().end(), 0.0f);
  const auto r = ops::maxpool2d(x, 2, 2, 0);
  CHECK(r.output == Tensor({1, 1, 2, 2}, std::vector<float>{5, 7, 13, 15}));
}

TEST_CASE("maxpool 3/2/1 halves 48 exactly") {
  const auto r = ops::maxpool2d(Tensor({1, 2, 48, 24}), 3, 2, 1);
  CHECK(r.output.shape() == Shape{1, 2, 24, 12});
  CHECK(ops::conv_output_extent(48, 3, 2, 1, "height") == 24);
}

TEST_CASE("maxpool of a constant is constant and routes one gradient per window") {
  const Tensor x({1, 1, 5, 5}, 2.0f);
  const auto r = ops::maxpool2d(x, 3, 2, 1);
  for (float v : r.output.values()) CHECK(v == 2.0f);
  const Tensor g = ops::maxpool2d_backward(Tensor(r.output.shape(), 1.0f), r.argmax, x.shape());
  double total = 0.0;
  for (float v : g.values()) total += v;
  CHECK(total == doctest::Approx(static_cast<double>(r.output.size())));
  // Ties go to the first in-bounds element of each window in row-major
  // order. Windows start at -1, 1, 3, so rows/cols {0, 1, 3} receive one each.
  for (std::size_t h = 0; h < 5; ++h)
    for (std::size_t w = 0; w < 5; ++w) {
      const bool first = (h == 0 || h == 1 || h == 3) && (w == 0 || w == 1 || w == 3);
      CHECK(g.at(0, 0, h, w) == (first ? 1.0f : 0.0f));
    }
}

TEST_CASE("maxpool errors when the kernel exceeds the padded input") {
  CHECK_THROWS_AS(ops::maxpool2d(Tensor({1, 1, 2, 2}), 5, 1, 1), DimensionError);
}

TEST_CASE("maxpool gradient matches finite differences") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    TensorD x = random_tensor({2, 2, 7, 6}, 120 + seed);  // continuous values: ties have probability 0
    const auto r = ops::maxpool2d(x, 3, 2, 1);
    const TensorD w = random_tensor(r.output.shape(), 121 + seed);
    const auto loss = [&] { return weighted_sum(ops::maxpool2d(x, 3, 2, 1).output, w); };
    CHECK(finite_diff_check(loss, x, ops::maxpool2d_backward(w, r.argmax, x.shape())) < 1e-6);
  }
}

TEST_CASE("global average pool") {
  CHECK(ops::global_avg_pool(Tensor({1, 1, 3, 2}, 3.0f))[0] == doctest::Approx(3.0f));
  CHECK(ops::global_avg_pool(Tensor({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4}))[0] == doctest::Approx(2.5f));
  const TensorD x = random_tensor({2, 3, 4, 5}, 13);
  const TensorD g = ops::global_avg_pool(x);
  REQUIRE(g.shape() == Shape{2, 3});
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0.0;
      for (std::size_t h = 0; h < 4; ++h)
        for (std::size_t w = 0; w < 5; ++w) s += x.at(n, c, h, w);
      CHECK(std::abs(g[n * 3 + c] - s / 20.0) < 1e-6);
    }
}

TEST_CASE("global average pool is linear") {
  const TensorD x = random_tensor({2, 3, 4, 5}, 14);
  const TensorD y = random_tensor({2, 3, 4, 5}, 15);
  TensorD combo(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) combo[i] = 2.5 * x[i] - 0.75 * y[i];
  const TensorD gx = ops::global_avg_pool(x), gy = ops::global_avg_pool(y), gc = ops::global_avg_pool(combo);
  for (std::size_t i = 0; i < gc.size(); ++i) CHECK(std::abs(gc[i] - (2.5 * gx[i] - 0.75 * gy[i])) < 1e-6);
}

TEST_CASE("global average pool gradient matches finite differences") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    TensorD x = random_tensor({2, 3, 3, 4}, 130 + seed);
    const TensorD w = random_tensor({2, 3}, 131 + seed);
    const auto loss = [&] { return weighted_sum(ops::global_avg_pool(x), w); };
    CHECK(finite_diff_check(loss, x, ops::global_avg_pool_backward(w, x.shape())) < 1e-6);
  }
}

TEST_CASE("region pool over all rows equals global pool") {
  const TensorD x = random_tensor({2, 3, 6, 4}, 16);
  CHECK(max_abs_diff(ops::avg_pool_region(x, 0, 6), ops::global_avg_pool(x)) < 1e-12);
}

TEST_CASE("region pool halves") {
  TensorD x({1, 1, 12, 4}, 0.0);
  for (std::size_t h = 0; h < 6; ++h)
    for (std::size_t w = 0; w < 4; ++w) x.at(0, 0, h, w) = 1.0;
  CHECK(ops::avg_pool_region(x, 0, 6)[0] == doctest::Approx(1.0));
  CHECK(ops::avg_pool_region(x, 6, 12)[0] == doctest::Approx(0.0));
}

TEST_CASE("region pool three-way split matches direct sums") {
  const TensorD x = random_tensor({2, 2, 12, 3}, 17);
  for (std::size_t p = 0; p < 3; ++p) {
    const TensorD r = ops::avg_pool_region(x, 4 * p, 4 * p + 4);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < 2; ++c) {
        double s = 0.0;
        for (std::size_t h = 4 * p; h < 4 * p + 4; ++h)
          for (std::size_t w = 0; w < 3; ++w) s += x.at(n, c, h, w);
        CHECK(std::abs(r[n * 2 + c] - s / 12.0) < 1e-6);
      }
  }
}

TEST_CASE("region pool rejects empty or out-of-range regions") {
  const TensorD x({1, 1, 4, 2});
  CHECK_THROWS(ops::avg_pool_region(x, 2, 2));
  CHECK_THROWS(ops::avg_pool_region(x, 3, 5));
}

TEST_CASE("region pool gradient matches finite differences") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    TensorD x = random_tensor({2, 2, 5, 3}, 140 + seed);
    const TensorD w = random_tensor({2, 2}, 141 + seed);
    const auto loss = [&] { return weighted_sum(ops::avg_pool_region(x, 1, 4), w); };
    TensorD g = TensorD::zeros_like(x);
    ops::avg_pool_region_backward(w, 1, 4, g);
    CHECK(finite_diff_check(loss, x, g) < 1e-6);
  }
}

// ---------------------------------------------------------------- linear

TEST_CASE("linear identity and bias-only cases") {
  const TensorD x = random_tensor({3, 4}, 18);
  TensorD eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  CHECK(ops::linear(x, eye, TensorD({4})) == x);
  const TensorD b = random_tensor({5}, 19);
  const TensorD y = ops::linear(x, TensorD({5, 4}), b);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 5; ++c) CHECK(y[r * 5 + c] == b[c]);
}

TEST_CASE("linear matches a nested-loop product") {
  const TensorD x = random_tensor({6, 7}, 20);
  const TensorD wt = random_tensor({5, 7}, 21);
  const TensorD b = random_tensor({5}, 22);
  const TensorD y = ops::linear(x, wt, b);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 5; ++c) {
      double s = b[c];
      for (std::size_t d = 0; d < 7; ++d) s += x[r * 7 + d] * wt[c * 7 + d];
      CHECK(std::abs(y[r * 5 + c] - s) < 1e-12);
    }
}

TEST_CASE("linear gradients match finite differences") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    TensorD x = random_tensor({3, 5}, 150 + seed);
    TensorD wt = random_tensor({4, 5}, 151 + seed);
    TensorD b = random_tensor({4}, 152 + seed);
    const TensorD w = random_tensor({3, 4}, 153 + seed);
    const auto loss = [&] { return weighted_sum(ops::linear(x, wt, b), w); };
    const auto g = ops::linear_backward(w, x, wt);
    CHECK(finite_diff_check(loss, x, g.input) < 1e-6);
    CHECK(finite_diff_check(loss, wt, g.weight) < 1e-6);
    CHECK(finite_diff_check(loss, b, g.bias) < 1e-6);
  }
}

TEST_CASE("linear dimension mismatch") {
  CHECK_THROWS_AS(ops::linear(TensorD({2, 3}), TensorD({4, 5}), TensorD({4})), DimensionError);
  CHECK_THROWS_AS(ops::linear(TensorD({2, 3}), TensorD({4, 3}), TensorD({3})), DimensionError);
}

// ---------------------------------------------------------------- softmax loss

TEST_CASE("softmax cross-entropy on uniform logits") {
  const int label = 0;
  const auto r = ops::softmax_cross_entropy(TensorD({1, 2}), std::span<const int>(&label, 1));
  CHECK(r.loss == doctest::Approx(std::log(2.0)));
}

TEST_CASE("softmax cross-entropy is stable for huge logits") {
  const int label = 0;
  const auto r = ops::softmax_cross_entropy(Tensor({1, 2}, std::vector<float>{1e4f, -1e4f}),
                                            std::span<const int>(&label, 1));
  CHECK(std::isfinite(r.loss));
  CHECK(r.loss == doctest::Approx(0.0));
  for (float v : r.grad_logits.values()) CHECK(std::isfinite(v));
}

TEST_CASE("softmax cross-entropy sums over the batch") {
  const std::vector<int> labels{0, 1, 1};
  const auto r = ops::softmax_cross_entropy(TensorD({3, 2}), labels);
  CHECK(r.loss == doctest::Approx(3.0 * std::log(2.0)));
}

TEST_CASE("softmax cross-entropy gradient") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    TensorD logits = random_tensor({4, 7}, 160 + seed, -3.0, 3.0);
    const std::vector<int> labels{seed % 7, (seed + 3) % 7, 6, 0};
    const auto r = ops::softmax_cross_entropy(logits, labels);
    for (std::size_t b = 0; b < 4; ++b) {
      double s = 0.0;
      for (std::size_t c = 0; c < 7; ++c) s += r.grad_logits[b * 7 + c];
      CHECK(std::abs(s) < 1e-6);
    }
    const auto loss = [&] { return ops::softmax_cross_entropy(logits, labels).loss; };
    CHECK(finite_diff_check(loss, logits, r.grad_logits) < 1e-4);
  }
}

TEST_CASE("softmax cross-entropy rejects out-of-range labels") {
  const std::vector<int> bad{0, 7};
  CHECK_THROWS_AS(ops::softmax_cross_entropy(TensorD({2, 7}), bad), std::out_of_range);
  const std::vector<int> negative{-1, 0};
  CHECK_THROWS_AS(ops::softmax_cross_entropy(TensorD({2, 7}), negative), std::out_of_range);
}

// ---------------------------------------------------------------- layout helpers

TEST_CASE("concat and slice are inverse") {
  const TensorD a = random_tensor({2, 3, 2, 2}, 23);
  const TensorD b = random_tensor({2, 1, 2, 2}, 24);
  const TensorD c = ops::concat_channels(a, b);
  CHECK(c.shape() == Shape{2, 4, 2, 2});
  CHECK(ops::slice_channels(c, 0, 3) == a);
  CHECK(ops::slice_channels(c, 3, 4) == b);
  CHECK(c.at(1, 3, 1, 0) == b.at(1, 0, 1, 0));
}

TEST_CASE("flip mirrors the last axis and is an involution") {
  const TensorD x({1, 1, 2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(ops::flip_horizontal(x) == TensorD({1, 1, 2, 3}, std::vector<double>{3, 2, 1, 6, 5, 4}));
  const TensorD r = random_tensor({2, 3, 4, 5}, 25);
  CHECK(ops::flip_horizontal(ops::flip_horizontal(r)) == r);
}

// ---------------------------------------------------------------- determinism

TEST_CASE("ops are bit-deterministic") {
  const Tensor x = random_tensor<float>({2, 8, 9, 7}, 26);
  const Tensor k = random_tensor<float>({6, 8, 3, 3}, 27);
  CHECK(ops::conv2d(x, k, {1, 2, 1}) == ops::conv2d(x, k, {1, 2, 1}));
  const Tensor up = random_tensor<float>(ops::conv2d(x, k, {1, 2, 1}).shape(), 28);
  const auto g1 = ops::conv2d_backward(up, x, k, {1, 2, 1});
  const auto g2 = ops::conv2d_backward(up, x, k, {1, 2, 1});
  CHECK(g1.input == g2.input);
  CHECK(g1.kernel == g2.kernel);
}

TEST_CASE("conv2d per-image results do not depend on batch position") {
  const Tensor x = random_tensor<float>({3, 4, 6, 5}, 29);
  const Tensor k = random_tensor<float>({5, 4, 3, 3}, 30);
  const Tensor full = ops::conv2d(x, k, {1, 1, 1});
  Tensor single({1, 4, 6, 5});
  std::copy(x.data() + 2 * 120, x.data() + 3 * 120, single.data());
  const Tensor one = ops::conv2d(single, k, {1, 1, 1});
  CHECK(std::equal(one.values().begin(), one.values().end(), full.values().begin() + 2 * one.size()));
}
