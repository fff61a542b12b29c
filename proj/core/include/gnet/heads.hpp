// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

// Feature heads on top of the scion: pooling (global or horizontal
// stripes), the 1×1 group-conv reduction to a compact embedding, per-head
// identity classifiers, and the losses that supervise them.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "gnet/layers.hpp"

namespace gnet {

// One embedding head. `parts == 0` pools the whole tap map (a multi-level
// head); otherwise the head pools stripe `stripe` of `parts` equal-height
// horizontal stripes.
struct HeadSpec {
  std::string name;
  std::string tap;
  std::size_t parts = 0;
  std::size_t stripe = 0;
};

// Level heads first (in the given tap order), then for each part count the
// stripes top to bottom. Part heads read the final scion block.
std::vector<HeadSpec> make_head_specs(std::span<const std::string> level_taps, std::span<const std::size_t> part_scheme,
                                      const std::string& final_tap = "fire_conv5c");

// Short label used in parameter names: "fire_conv4f" -> "4f".
std::string tap_label(const std::string& tap);

// Rows [floor(i·H/p), floor((i+1)·H/p)) of stripe i.
std::pair<std::size_t, std::size_t> stripe_rows(std::size_t height, std::size_t parts, std::size_t stripe);

// Average of each horizontal stripe, top to bottom.
template <typename T>
std::vector<BasicTensor<T>> part_pool(const BasicTensor<T>& tap, std::size_t parts);

// pooled N×C -> 1×1 group conv (no bias) -> BN -> leaky relu(0.1) -> N×D.
template <typename T>
class ReductionHead {
 public:
  ReductionHead(const std::string& name, std::size_t in_channels, std::size_t out_dim, int groups);

  BasicTensor<T> forward(const BasicTensor<T>& pooled, Mode mode);
  BasicTensor<T> backward(const BasicTensor<T>& pooled, const BasicTensor<T>& reduced, const BasicTensor<T>& dy);
  void collect(ParameterSink<T>& sink) { unit_.collect(sink); }

  // (in/g)·out conv weights + 2·out batch-norm affine.
  static std::size_t param_count(std::size_t in_channels, std::size_t out_dim, int groups);

 private:
  ConvBn<T> unit_;
};

template <typename T>
struct HeadOutput {
  std::string name;
  BasicTensor<T> reduced;  // N×D
  BasicTensor<T> logits;   // N×C, train mode only
};

template <typename T>
struct JointLoss {
  double total = 0.0;
  std::vector<double> per_head;
  std::vector<BasicTensor<T>> grad_logits;
};

// Sum of the per-head softmax losses (each already summed over the batch),
// accumulated in head order.
template <typename T>
JointLoss<T> joint_loss(std::span<const HeadOutput<T>> heads, std::span<const int> labels);

// Single softmax objective on the accompanying branch's logits.
template <typename T>
ops::SoftmaxLoss<T> accompanying_loss(const BasicTensor<T>& logits, std::span<const int> labels);

// Row-wise concatenation of the reduced features in head order: N×(K·D).
template <typename T>
BasicTensor<T> concat_feature(std::span<const HeadOutput<T>> heads);

}  // namespace gnet
