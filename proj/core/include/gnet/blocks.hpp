// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

// Composite building blocks: the ResNet-50 stem and bottleneck used by the
// rootstock and the accompanying branch, and the skip-connected fire block
// that makes up the scion.

#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "gnet/layers.hpp"

namespace gnet {

// 7×7 stride-2 conv -> BN -> relu, optionally followed by a 3/2/1 max-pool.
struct StemSpec {
  std::string name;
  std::size_t in_channels = 3;
  std::size_t out_channels = 64;
  std::size_t kernel = 7;
  int stride = 2;
  bool pool_after = true;
};

// 1×1(mid) -> 3×3(mid, stride) -> 1×1(out), identity or projected shortcut.
struct BottleneckSpec {
  std::string name;
  std::size_t in_channels = 0;
  std::size_t mid_channels = 0;
  std::size_t out_channels = 0;
  int stride = 1;
  bool has_projection = false;
  bool pool_after = false;

  void validate() const;
};

// squeeze 1×1 -> {expand 1×1, expand 3×3} concatenated -> BN (+ identity) -> relu.
struct FireSpec {
  std::string name;
  std::size_t in_channels = 0;
  std::size_t squeeze_planes = 0;
  std::size_t expand_planes = 0;  // per branch
  bool skip = false;
  bool pool_after = false;

  std::size_t out_channels() const { return 2 * expand_planes; }
  void validate() const;
};

using BlockSpec = std::variant<StemSpec, BottleneckSpec, FireSpec>;

// A named run of blocks. Pooling is attached to individual blocks through
// `pool_after` so that the scion can pool after its first block.
struct StageSpec {
  std::string name;
  std::vector<BlockSpec> blocks;

  void validate() const;  // channel agreement between consecutive blocks
};

std::size_t in_channels(const BlockSpec& spec);
std::size_t out_channels(const BlockSpec& spec);
const std::string& block_name(const BlockSpec& spec);

// Closed-form learnable-scalar counts (conv weights + BN gamma/beta).
std::size_t param_count(const StemSpec& spec);
std::size_t param_count(const BottleneckSpec& spec);
std::size_t param_count(const FireSpec& spec);
std::size_t param_count(const BlockSpec& spec);
std::size_t param_count(const std::vector<StageSpec>& stages);

struct TrunkOptions {
  std::size_t width_divisor = 1;  // shrinks every channel count; 1 is the published network
  bool scion_pooling = true;      // the two scion max-pools (disabled only for tiny test variants)
};

// res_conv1 (stem + max-pool), res_conv2 (3 bottlenecks, 256 out), res_conv3
// (4 bottlenecks, 512 out, first strided).
std::vector<StageSpec> make_rootstock(const TrunkOptions& opt = {});
// fire_conv4a..f (512 channels, squeeze 64, pool after 4a) and fire_conv5a..c
// (768 channels, squeeze 128, pool after 5a; 5a has no skip).
std::vector<StageSpec> make_scion(const TrunkOptions& opt = {});
// res_conv4 (6 bottlenecks, 1024 out) and res_conv5 (3 bottlenecks, 2048 out).
std::vector<StageSpec> make_accompanying(const TrunkOptions& opt = {});

template <typename T>
class Block {
 public:
  virtual ~Block() = default;

  virtual const std::string& name() const = 0;
  virtual BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) = 0;
  // x and y are this block's forward input and output.
  virtual BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& y, const BasicTensor<T>& dy,
                                  bool need_input_grad) = 0;
  virtual void collect(ParameterSink<T>& sink) = 0;
};

// Builds a block whose parameters are named `<prefix>.<spec name>.*`.
template <typename T>
std::unique_ptr<Block<T>> make_block(const BlockSpec& spec, const std::string& prefix, LrGroup group);

// Runs a list of stages block by block. Train mode keeps every block output
// for backward; eval mode keeps only retained blocks and the final output.
template <typename T>
class Trunk {
 public:
  Trunk(const std::vector<StageSpec>& stages, const std::string& prefix, LrGroup group);

  void retain(const std::string& block);

  const BasicTensor<T>& forward(const BasicTensor<T>& x, Mode mode);

  const BasicTensor<T>& output() const { return outputs_.back(); }
  const BasicTensor<T>& output(const std::string& block) const;

  // `grads` holds dL/d(output) for any subset of blocks (typically the final
  // block plus tap points). Releases stored activations.
  BasicTensor<T> backward(const BasicTensor<T>& x, const std::map<std::string, BasicTensor<T>>& grads,
                          bool need_input_grad = true);

  void collect(ParameterSink<T>& sink);
  void release();

  std::size_t size() const { return blocks_.size(); }
  Block<T>& block(std::size_t i) { return *blocks_.at(i); }
  std::size_t index_of(const std::string& block) const;

 private:
  std::vector<std::unique_ptr<Block<T>>> blocks_;
  std::vector<bool> retained_;
  std::vector<BasicTensor<T>> outputs_;
};

}  // namespace gnet
