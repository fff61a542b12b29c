// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "gnet/heads.hpp"

#include <stdexcept>

namespace gnet {

std::string tap_label(const std::string& tap) {
  constexpr std::string_view prefix = "fire_conv";
  if (tap.starts_with(prefix)) return tap.substr(prefix.size());
  return tap;
}

std::vector<HeadSpec> make_head_specs(std::span<const std::string> level_taps, std::span<const std::size_t> part_scheme,
                                      const std::string& final_tap) {
  std::vector<HeadSpec> heads;
  for (const auto& tap : level_taps) heads.push_back({tap_label(tap), tap, 0, 0});
  for (std::size_t p : part_scheme) {
    if (p == 0) throw std::invalid_argument("part counts must be positive");
    for (std::size_t s = 0; s < p; ++s) {
      heads.push_back({tap_label(final_tap) + "_p" + std::to_string(p) + "s" + std::to_string(s + 1), final_tap, p, s});
    }
  }
  for (std::size_t i = 0; i < heads.size(); ++i)
    for (std::size_t j = i + 1; j < heads.size(); ++j)
      if (heads[i].name == heads[j].name) throw std::invalid_argument("duplicate head " + heads[i].name);
  return heads;
}

std::pair<std::size_t, std::size_t> stripe_rows(std::size_t height, std::size_t parts, std::size_t stripe) {
  if (parts == 0 || stripe >= parts || parts > height) {
    throw DimensionError("part_pool", "height",
                         "cannot cut " + std::to_string(height) + " rows into " + std::to_string(parts) + " stripes");
  }
  return {stripe * height / parts, (stripe + 1) * height / parts};
}

template <typename T>
std::vector<BasicTensor<T>> part_pool(const BasicTensor<T>& tap, std::size_t parts) {
  require_rank4(tap, "part_pool");
  std::vector<BasicTensor<T>> out;
  for (std::size_t s = 0; s < parts; ++s) {
    const auto [r0, r1] = stripe_rows(tap.dim(2), parts, s);
    out.push_back(ops::avg_pool_region(tap, r0, r1));
  }
  return out;
}

template <typename T>
ReductionHead<T>::ReductionHead(const std::string& name, std::size_t in_channels, std::size_t out_dim, int groups)
    : unit_(name, in_channels, out_dim, 1, ops::ConvGeometry{groups, 1, 0}, Activation::Leaky, LrGroup::Fresh) {}

template <typename T>
BasicTensor<T> ReductionHead<T>::forward(const BasicTensor<T>& pooled, Mode mode) {
  const std::size_t n = pooled.dim(0);
  BasicTensor<T> y = unit_.forward(pooled.reshaped({n, pooled.dim(1), 1, 1}), mode);
  return std::move(y).reshaped({n, y.dim(1)});
}

template <typename T>
BasicTensor<T> ReductionHead<T>::backward(const BasicTensor<T>& pooled, const BasicTensor<T>& reduced,
                                          const BasicTensor<T>& dy) {
  const std::size_t n = pooled.dim(0);
  const Shape out4{n, reduced.dim(1), 1, 1};
  BasicTensor<T> dx = unit_.backward(pooled.reshaped({n, pooled.dim(1), 1, 1}), reduced.reshaped(out4),
                                     dy.reshaped(out4));
  return std::move(dx).reshaped(pooled.shape());
}

template <typename T>
std::size_t ReductionHead<T>::param_count(std::size_t in_channels, std::size_t out_dim, int groups) {
  return in_channels / static_cast<std::size_t>(groups) * out_dim + 2 * out_dim;
}

template <typename T>
JointLoss<T> joint_loss(std::span<const HeadOutput<T>> heads, std::span<const int> labels) {
  if (heads.empty()) throw std::invalid_argument("joint_loss needs at least one head");
  JointLoss<T> out;
  for (const auto& h : heads) {
    if (h.logits.empty()) throw std::logic_error("head " + h.name + " has no logits (eval-mode output?)");
    auto r = ops::softmax_cross_entropy(h.logits, labels);
    out.per_head.push_back(r.loss);
    out.total += r.loss;
    out.grad_logits.push_back(std::move(r.grad_logits));
  }
  return out;
}

template <typename T>
ops::SoftmaxLoss<T> accompanying_loss(const BasicTensor<T>& logits, std::span<const int> labels) {
  return ops::softmax_cross_entropy(logits, labels);
}

template <typename T>
BasicTensor<T> concat_feature(std::span<const HeadOutput<T>> heads) {
  if (heads.empty()) throw std::invalid_argument("concat_feature needs at least one head");
  const std::size_t n = heads.front().reduced.dim(0);
  std::size_t width = 0;
  for (const auto& h : heads) {
    if (h.reduced.rank() != 2 || h.reduced.dim(0) != n) {
      throw DimensionError("concat_feature", "batch", "head " + h.name + " has shape " + shape_to_string(h.reduced.shape()));
    }
    width += h.reduced.dim(1);
  }
  BasicTensor<T> out({n, width});
  for (std::size_t r = 0; r < n; ++r) {
    T* dst = out.data() + r * width;
    for (const auto& h : heads) {
      const std::size_t d = h.reduced.dim(1);
      std::copy_n(h.reduced.data() + r * d, d, dst);
      dst += d;
    }
  }
  return out;
}

#define GNET_INSTANTIATE_HEADS(T)                                                                       \
  template std::vector<BasicTensor<T>> part_pool(const BasicTensor<T>&, std::size_t);                  \
  template class ReductionHead<T>;                                                                      \
  template JointLoss<T> joint_loss(std::span<const HeadOutput<T>>, std::span<const int>);              \
  template ops::SoftmaxLoss<T> accompanying_loss(const BasicTensor<T>&, std::span<const int>);         \
  template BasicTensor<T> concat_feature(std::span<const HeadOutput<T>>);

GNET_INSTANTIATE_HEADS(float)
GNET_INSTANTIATE_HEADS(double)

}  // namespace gnet
