// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "gnet/layers.hpp"

#include <cmath>

namespace gnet {

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

bool is_batchnorm_affine(const std::string& param_name) {
  return ends_with(param_name, ".gamma") || ends_with(param_name, ".beta");
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(const std::string& name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                  ops::ConvGeometry geom, LrGroup group)
    : weight_(name + ".weight", {out_channels, in_channels / static_cast<std::size_t>(geom.groups), kernel, kernel},
              group),
      geom_(geom) {
  if (geom.groups < 1 || in_channels % static_cast<std::size_t>(geom.groups) != 0 ||
      out_channels % static_cast<std::size_t>(geom.groups) != 0) {
    throw DimensionError("Conv2d " + name, "groups", "channels must be divisible by groups");
  }
}

template <typename T>
BasicTensor<T> Conv2d<T>::forward(const BasicTensor<T>& x) const {
  return ops::conv2d(x, weight_.value, geom_);
}

template <typename T>
BasicTensor<T> Conv2d<T>::backward(const BasicTensor<T>& x, const BasicTensor<T>& dy, bool need_input_grad) {
  auto g = ops::conv2d_backward(dy, x, weight_.value, geom_, false, need_input_grad);
  weight_.accumulate(g.kernel);
  return std::move(g.input);
}

// ---------------------------------------------------------------- BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(const std::string& name, std::size_t channels, LrGroup group)
    : name_(name),
      gamma_(name + ".gamma", {channels}, group, false),
      beta_(name + ".beta", {channels}, group, false),
      running_mean_({channels}, T(0)),
      running_var_({channels}, T(1)) {
  gamma_.value.fill(T(1));
}

template <typename T>
BasicTensor<T> BatchNorm2d<T>::forward(const BasicTensor<T>& x, Mode mode) {
  return ops::batchnorm2d(x, ops::BatchNormParams<T>{gamma_.value, beta_.value, running_mean_, running_var_}, mode,
                          mode == Mode::Train ? &cache_ : nullptr);
}

template <typename T>
BasicTensor<T> BatchNorm2d<T>::backward(const BasicTensor<T>& x, const BasicTensor<T>& dy) {
  auto g = ops::batchnorm2d_backward(dy, x, gamma_.value, cache_);
  gamma_.accumulate(g.gamma);
  beta_.accumulate(g.beta);
  return std::move(g.input);
}

template <typename T>
void BatchNorm2d<T>::collect(ParameterSink<T>& sink) {
  sink.parameters.push_back(&gamma_);
  sink.parameters.push_back(&beta_);
  sink.buffers.push_back({name_ + ".running_mean", &running_mean_});
  sink.buffers.push_back({name_ + ".running_var", &running_var_});
}

// ---------------------------------------------------------------- ConvBn

template <typename T>
ConvBn<T>::ConvBn(const std::string& name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                  ops::ConvGeometry geom, Activation act, LrGroup group)
    : conv_(name, in_channels, out_channels, kernel, geom, group),
      bn_(name + "_bn", out_channels, group),
      act_(act) {}

template <typename T>
BasicTensor<T> ConvBn<T>::forward(const BasicTensor<T>& x, Mode mode) {
  BasicTensor<T> pre = conv_.forward(x);
  BasicTensor<T> y = bn_.forward(pre, mode);
  if (act_ == Activation::Relu) ops::leaky_relu_inplace(y, T(0));
  if (act_ == Activation::Leaky) ops::leaky_relu_inplace(y, static_cast<T>(kLeakySlope));
  if (mode == Mode::Train) pre_ = std::move(pre);
  return y;
}

template <typename T>
BasicTensor<T> ConvBn<T>::backward(const BasicTensor<T>& x, const BasicTensor<T>& y, const BasicTensor<T>& dy,
                                   bool need_input_grad) {
  BasicTensor<T> d_bn;
  switch (act_) {
    case Activation::None: d_bn = dy; break;
    case Activation::Relu: d_bn = ops::relu_backward(dy, y); break;
    case Activation::Leaky: d_bn = ops::leaky_relu_backward(dy, y, static_cast<T>(kLeakySlope)); break;
  }
  BasicTensor<T> d_pre = bn_.backward(pre_, d_bn);
  pre_ = {};
  return conv_.backward(x, d_pre, need_input_grad);
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(const std::string& name, std::size_t in_features, std::size_t out_features, LrGroup group)
    : weight_(name + ".weight", {out_features, in_features}, group), bias_(name + ".bias", {out_features}, group) {}

template <typename T>
BasicTensor<T> Linear<T>::forward(const BasicTensor<T>& x) const {
  return ops::linear(x, weight_.value, bias_.value);
}

template <typename T>
BasicTensor<T> Linear<T>::backward(const BasicTensor<T>& x, const BasicTensor<T>& dy) {
  auto g = ops::linear_backward(dy, x, weight_.value);
  weight_.accumulate(g.weight);
  bias_.accumulate(g.bias);
  return std::move(g.input);
}

// ---------------------------------------------------------------- init

template <typename T>
void initialize_parameters(std::span<Parameter<T>* const> params, std::mt19937_64& rng) {
  for (Parameter<T>* p : params) {
    p->grad.fill(T(0));
    p->momentum.fill(T(0));
    const std::string& name = p->name;
    if (ends_with(name, ".gamma")) {
      p->value.fill(T(1));
    } else if (ends_with(name, ".beta") || ends_with(name, ".bias")) {
      p->value.fill(T(0));
    } else {
      const Shape& s = p->value.shape();
      std::size_t fan_in = 1;
      for (std::size_t i = 1; i < s.size(); ++i) fan_in *= s[i];
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      for (T& v : p->value.values()) v = static_cast<T>(normal(rng));
    }
  }
}

template <typename T>
void reset_buffers(std::span<const NamedBuffer<T>> buffers) {
  for (const auto& b : buffers) {
    b.tensor->fill(ends_with(b.name, ".running_var") ? T(1) : T(0));
  }
}

template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class ConvBn<float>;
template class ConvBn<double>;
template class Linear<float>;
template class Linear<double>;
template void initialize_parameters(std::span<Parameter<float>* const>, std::mt19937_64&);
template void initialize_parameters(std::span<Parameter<double>* const>, std::mt19937_64&);
template void reset_buffers(std::span<const NamedBuffer<float>>);
template void reset_buffers(std::span<const NamedBuffer<double>>);

}  // namespace gnet
