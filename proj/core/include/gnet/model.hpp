// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

// The assembled network: rootstock -> scion -> pooled reduction heads, with
// per-head classifiers and the accompanying branch present only while
// training.
//
// Parameter scopes (first name component): rootstock, scion, reduction,
// objective, accompanying. The accompanying classifier is
// `objective.acc.*`, so the accompanying scope holds the two ResNet stages
// only.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gnet/archive.hpp"
#include "gnet/blocks.hpp"
#include "gnet/heads.hpp"

namespace gnet {

struct GraftedNetConfig {
  std::size_t num_classes = 751;
  int reduction_groups = 8;
  std::size_t reduced_dim = 256;
  std::vector<std::size_t> part_scheme{1, 2, 3};
  std::vector<std::string> level_taps{"fire_conv4f", "fire_conv5a", "fire_conv5b"};
  bool with_accompanying = true;
  bool with_classifiers = true;  // false builds the inference-only network
  std::size_t input_height = 384;
  std::size_t input_width = 192;
  // Tiny-variant knobs for tests; the published network uses the defaults.
  std::size_t width_divisor = 1;
  bool scion_pooling = true;
  bool allow_uneven_parts = false;

  TrunkOptions trunk_options() const { return {width_divisor, scion_pooling}; }
  std::vector<HeadSpec> heads() const { return make_head_specs(level_taps, part_scheme); }
  std::size_t head_count() const;
  std::size_t feature_dim() const { return head_count() * reduced_dim; }
  std::size_t tap_channels(const std::string& tap) const;
  // Spatial extent (H, W) of a scion block's output for the configured input.
  std::pair<std::size_t, std::size_t> tap_extent(const std::string& tap) const;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

// Scope prefixes in canonical order.
inline constexpr std::string_view kScopes[] = {"rootstock", "scion", "reduction", "objective", "accompanying"};

// True when `name` equals `scope` or starts with `scope` followed by '.'.
bool in_scope(std::string_view name, std::string_view scope);

// "1.445M"-style rendering with the given number of decimals.
std::string format_millions(std::size_t count, int decimals);

// Tap activations of one forward pass, copied out of the trunks.
template <typename T>
struct TapSet {
  std::map<std::string, BasicTensor<T>> maps;  // scion block name -> N×C×H×W
  BasicTensor<T> accompanying;                 // N×2048 pooled, train mode with the branch only
};

struct StepLoss {
  double joint = 0.0;
  std::vector<double> per_head;
  double accompanying = 0.0;
  double total = 0.0;
};

template <typename T>
class GraftedNet {
 public:
  explicit GraftedNet(GraftedNetConfig config);
  ~GraftedNet();
  GraftedNet(GraftedNet&&) noexcept;
  GraftedNet& operator=(GraftedNet&&) noexcept;

  const GraftedNetConfig& config() const { return config_; }
  const std::vector<HeadSpec>& heads() const { return heads_; }

  // All learnable parameters and persistent buffers in construction order.
  ParameterSink<T> sink();
  std::vector<Parameter<T>*> parameters() { return sink().parameters; }
  std::size_t count_params(std::string_view scope = {});

  // He-normal init for every conv/linear weight in construction order from a
  // generator seeded with `seed`, BN gamma 1 / beta 0, fresh running stats.
  // With `pretrained`, rootstock (and accompanying, when built) tensors are
  // then copied by name; the archive must cover exactly those tensors.
  void init_params(std::uint64_t seed, const WeightArchive* pretrained = nullptr);

  WeightArchive save_weights();
  // Requires an exact name and shape match with this build.
  void load_weights(const WeightArchive& archive);

  TapSet<T> forward_taps(const BasicTensor<T>& images, Mode mode);
  std::vector<HeadOutput<T>> compute_heads(const TapSet<T>& taps, Mode mode);
  BasicTensor<T> accompanying_logits(const TapSet<T>& taps);

  // Backpropagates loss gradients w.r.t. every head's logits (and the
  // accompanying logits, when present) through the whole network. Requires a
  // preceding train-mode forward_taps / compute_heads / accompanying_logits.
  void backward(const BasicTensor<T>& images, const TapSet<T>& taps, const std::vector<HeadOutput<T>>& heads,
                std::span<const BasicTensor<T>> grad_logits, const BasicTensor<T>* grad_acc_logits);

  // Train-mode forward, joint (+ accompanying) loss, backward. Gradients
  // are accumulated into the parameters.
  StepLoss forward_backward(const BasicTensor<T>& images, std::span<const int> labels);
  // Train-mode forward and loss only (running stats are updated).
  StepLoss loss(const BasicTensor<T>& images, std::span<const int> labels);

  // Eval-mode concatenated embedding, N×(heads·reduced_dim).
  BasicTensor<T> embed(const BasicTensor<T>& images);

  // Drops the classifiers and the accompanying branch.
  void strip_for_inference();

 private:
  struct Impl;
  GraftedNetConfig config_;
  std::vector<HeadSpec> heads_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace gnet
