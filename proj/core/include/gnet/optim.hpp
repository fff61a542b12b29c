// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "gnet/tensor.hpp"

namespace gnet {

// Pretrained parameters (rootstock, accompanying branch) train at the
// smaller rate; everything freshly initialized trains at the larger one.
enum class LrGroup { Pretrained, Fresh };

const char* to_string(LrGroup group);

template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;
  BasicTensor<T> momentum;
  LrGroup group = LrGroup::Fresh;
  bool weight_decay = true;  // false for batch-norm gamma/beta

  Parameter() = default;
  Parameter(std::string n, Shape shape, LrGroup g, bool decay = true)
      : name(std::move(n)),
        value(shape),
        grad(shape),
        momentum(std::move(shape)),
        group(g),
        weight_decay(decay) {}

  void zero_grad() { grad.fill(T(0)); }
  void accumulate(const BasicTensor<T>& g) { grad += g; }
};

struct SgdConfig {
  double base_lr_pretrained = 0.01;
  double base_lr_fresh = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::vector<int> decay_epochs{40, 60};
  double decay_factor = 0.1;
  int total_epochs = 80;
  int batch_size = 32;

  // Throws std::invalid_argument on non-positive rates or a bad schedule.
  void validate() const;
};

struct LearningRates {
  double pretrained = 0.0;
  double fresh = 0.0;

  double for_group(LrGroup g) const { return g == LrGroup::Pretrained ? pretrained : fresh; }
};

// Step schedule: each entry of decay_epochs already passed multiplies both
// base rates by decay_factor.
LearningRates lr_at_epoch(int epoch, const SgdConfig& cfg);

// Classic momentum SGD:
//   v <- momentum·v + (g + wd·w)      (wd = 0 for weight_decay == false)
//   w <- w - lr(group)·v
// Gradients are zeroed afterwards.
template <typename T>
void sgd_step(std::span<Parameter<T>* const> params, LearningRates lr, const SgdConfig& cfg);

}  // namespace gnet
