// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

// Parameter-owning layers built on the primitives in ops.hpp.
//
// Backward convention used across the library: a component's forward takes
// its input by const reference and returns its output by value. The caller
// keeps both alive and hands them back to backward(x, y, dy). Components
// store only the intermediates the caller never sees, and only in train
// mode, so every activation is held exactly once.

#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "gnet/ops.hpp"
#include "gnet/optim.hpp"

namespace gnet {

using ops::Mode;

inline constexpr double kLeakySlope = 0.1;

enum class Activation { None, Relu, Leaky };

// Non-learnable state persisted with the weights (batch-norm running stats).
template <typename T>
struct NamedBuffer {
  std::string name;
  BasicTensor<T>* tensor = nullptr;
};

template <typename T>
struct ParameterSink {
  std::vector<Parameter<T>*> parameters;
  std::vector<NamedBuffer<T>> buffers;
};

template <typename T>
class Conv2d {
 public:
  Conv2d(const std::string& name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         ops::ConvGeometry geom, LrGroup group);

  BasicTensor<T> forward(const BasicTensor<T>& x) const;
  // Accumulates into the weight gradient; returns dL/dx (empty if not needed).
  BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& dy, bool need_input_grad = true);

  Parameter<T>& weight() { return weight_; }
  const Parameter<T>& weight() const { return weight_; }
  const ops::ConvGeometry& geometry() const { return geom_; }
  void collect(ParameterSink<T>& sink) { sink.parameters.push_back(&weight_); }

 private:
  Parameter<T> weight_;
  ops::ConvGeometry geom_;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d(const std::string& name, std::size_t channels, LrGroup group);

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode);
  BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& dy);

  Parameter<T>& gamma() { return gamma_; }
  Parameter<T>& beta() { return beta_; }
  BasicTensor<T>& running_mean() { return running_mean_; }
  BasicTensor<T>& running_var() { return running_var_; }
  void collect(ParameterSink<T>& sink);

 private:
  std::string name_;
  Parameter<T> gamma_;
  Parameter<T> beta_;
  BasicTensor<T> running_mean_;
  BasicTensor<T> running_var_;
  ops::BatchNormCache<T> cache_;
};

// conv (no bias) -> batch norm -> optional activation. Parameters are named
// `<name>.weight` and `<name>_bn.{gamma,beta}`.
template <typename T>
class ConvBn {
 public:
  ConvBn(const std::string& name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         ops::ConvGeometry geom, Activation act, LrGroup group);

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode);
  // `y` is the tensor forward returned; it is only read when an activation
  // is applied.
  BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& y, const BasicTensor<T>& dy,
                          bool need_input_grad = true);

  Conv2d<T>& conv() { return conv_; }
  BatchNorm2d<T>& bn() { return bn_; }
  void collect(ParameterSink<T>& sink) {
    conv_.collect(sink);
    bn_.collect(sink);
  }

 private:
  Conv2d<T> conv_;
  BatchNorm2d<T> bn_;
  Activation act_;
  BasicTensor<T> pre_;  // conv output, train mode only
};

template <typename T>
class Linear {
 public:
  Linear(const std::string& name, std::size_t in_features, std::size_t out_features, LrGroup group);

  BasicTensor<T> forward(const BasicTensor<T>& x) const;
  BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& dy);

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }
  void collect(ParameterSink<T>& sink) {
    sink.parameters.push_back(&weight_);
    sink.parameters.push_back(&bias_);
  }

 private:
  Parameter<T> weight_;
  Parameter<T> bias_;
};

// Fan-in scaled Gaussian (std = sqrt(2 / fan_in)) for conv and linear
// weights, zeros for biases, gamma = 1 and beta = 0 for batch norm. Momentum
// buffers and gradients are cleared. Parameters are visited in order so the
// result depends only on the generator state.
template <typename T>
void initialize_parameters(std::span<Parameter<T>* const> params, std::mt19937_64& rng);

// Resets running statistics to mean 0 / variance 1.
template <typename T>
void reset_buffers(std::span<const NamedBuffer<T>> buffers);

bool is_batchnorm_affine(const std::string& param_name);

}  // namespace gnet
