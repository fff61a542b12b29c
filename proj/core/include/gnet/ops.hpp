// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

// Differentiable layer primitives. Every forward op is a pure function of
// its arguments (batch-norm train mode additionally updates the running
// statistics it is handed). Backward ops take the tensors saved from the
// forward call and return fresh gradient tensors.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "gnet/tensor.hpp"

namespace gnet::ops {

enum class Mode { Train, Eval };

// ---------------------------------------------------------------- conv2d

struct ConvGeometry {
  int groups = 1;
  int stride = 1;
  int padding = 0;
};

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, int stride, int padding, const char* axis);

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, ConvGeometry geom,
                      const BasicTensor<T>* bias = nullptr);

template <typename T>
struct ConvGrads {
  BasicTensor<T> input;   // empty when not requested
  BasicTensor<T> kernel;
  BasicTensor<T> bias;    // empty when the forward had no bias
};

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& upstream, const BasicTensor<T>& input,
                             const BasicTensor<T>& kernel, ConvGeometry geom, bool with_bias = false,
                             bool need_input_grad = true);

// ---------------------------------------------------------------- batch norm

inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEps = 1e-5;

class DegenerateBatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Per-channel batch statistics saved by a train-mode forward.
template <typename T>
struct BatchNormCache {
  std::vector<T> mean;
  std::vector<T> inv_std;
};

template <typename T>
struct BatchNormParams {
  const BasicTensor<T>& gamma;
  const BasicTensor<T>& beta;
  BasicTensor<T>& running_mean;
  BasicTensor<T>& running_var;
};

// Train mode normalizes with batch statistics (N·H·W >= 2 required) and
// folds them into the running stats with momentum 0.1 (unbiased variance).
// Eval mode uses the running stats. `cache` receives the batch statistics
// in train mode and may be null otherwise.
template <typename T>
BasicTensor<T> batchnorm2d(const BasicTensor<T>& input, BatchNormParams<T> params, Mode mode,
                           BatchNormCache<T>* cache = nullptr, double eps = kBatchNormEps);

template <typename T>
struct BatchNormGrads {
  BasicTensor<T> input;
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
};

// Backward of a train-mode forward. `input` is the pre-normalization tensor.
template <typename T>
BatchNormGrads<T> batchnorm2d_backward(const BasicTensor<T>& upstream, const BasicTensor<T>& input,
                                       const BasicTensor<T>& gamma, const BatchNormCache<T>& cache);

// ---------------------------------------------------------------- activations

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& input, T slope);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  return leaky_relu(input, T(0));
}

template <typename T>
void leaky_relu_inplace(BasicTensor<T>& x, T slope);

// The subgradient at exactly 0 is `slope` (0 for relu). For slope >= 0 the
// forward output has the same sign as the input, so either may be passed.
template <typename T>
BasicTensor<T> leaky_relu_backward(const BasicTensor<T>& upstream, const BasicTensor<T>& forward_value, T slope);

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& upstream, const BasicTensor<T>& forward_value) {
  return leaky_relu_backward(upstream, forward_value, T(0));
}

// ---------------------------------------------------------------- pooling

template <typename T>
struct MaxPoolResult {
  BasicTensor<T> output;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

// Padding behaves as -inf. Ties go to the first element in row-major window
// order.
template <typename T>
MaxPoolResult<T> maxpool2d(const BasicTensor<T>& input, int kernel, int stride, int padding);

template <typename T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& upstream, std::span<const std::uint32_t> argmax,
                                  const Shape& input_shape);

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>& upstream, const Shape& input_shape);

// Mean over rows [row_start, row_end) and all columns -> N×C.
template <typename T>
BasicTensor<T> avg_pool_region(const BasicTensor<T>& input, std::size_t row_start, std::size_t row_end);

// Adds the region-pool adjoint into `grad_input` (shape of the forward input).
template <typename T>
void avg_pool_region_backward(const BasicTensor<T>& upstream, std::size_t row_start, std::size_t row_end,
                              BasicTensor<T>& grad_input);

// ---------------------------------------------------------------- dense

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

template <typename T>
struct LinearGrads {
  BasicTensor<T> input;
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

template <typename T>
LinearGrads<T> linear_backward(const BasicTensor<T>& upstream, const BasicTensor<T>& input,
                               const BasicTensor<T>& weight);

template <typename T>
struct SoftmaxLoss {
  double loss = 0.0;            // summed over the batch, not averaged
  BasicTensor<T> grad_logits;   // softmax - onehot, per row
};

template <typename T>
SoftmaxLoss<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels);

// ---------------------------------------------------------------- layout helpers

// Concatenates two N×Ca×H×W and N×Cb×H×W tensors along channels.
template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Inverse of concat_channels: channels [begin, end).
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, std::size_t begin, std::size_t end);

// Mirrors the last axis.
template <typename T>
BasicTensor<T> flip_horizontal(const BasicTensor<T>& x);

}  // namespace gnet::ops
