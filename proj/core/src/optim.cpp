// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "gnet/optim.hpp"

#include <stdexcept>

namespace gnet {

const char* to_string(LrGroup group) { return group == LrGroup::Pretrained ? "pretrained" : "fresh"; }

void SgdConfig::validate() const {
  if (!(base_lr_pretrained > 0) || !(base_lr_fresh > 0)) {
    throw std::invalid_argument("sgd: base learning rates must be > 0");
  }
  if (!(momentum >= 0) || momentum >= 1) throw std::invalid_argument("sgd: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0)) throw std::invalid_argument("sgd: weight decay must be >= 0");
  if (!(decay_factor > 0)) throw std::invalid_argument("sgd: decay factor must be > 0");
  if (total_epochs < 1) throw std::invalid_argument("sgd: total epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("sgd: batch size must be >= 1");
  for (std::size_t i = 0; i < decay_epochs.size(); ++i) {
    if (decay_epochs[i] < 1 || decay_epochs[i] >= total_epochs) {
      throw std::invalid_argument("sgd: decay epoch " + std::to_string(decay_epochs[i]) +
                                  " outside [1, total_epochs)");
    }
    if (i > 0 && decay_epochs[i] <= decay_epochs[i - 1]) {
      throw std::invalid_argument("sgd: decay epochs must be strictly increasing");
    }
  }
}

LearningRates lr_at_epoch(int epoch, const SgdConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.total_epochs) {
    throw std::out_of_range("lr_at_epoch: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(cfg.total_epochs) + ")");
  }
  double scale = 1.0;
  for (int boundary : cfg.decay_epochs) {
    if (epoch >= boundary) scale *= cfg.decay_factor;
  }
  return {cfg.base_lr_pretrained * scale, cfg.base_lr_fresh * scale};
}

template <typename T>
void sgd_step(std::span<Parameter<T>* const> params, LearningRates lr, const SgdConfig& cfg) {
  const T m = static_cast<T>(cfg.momentum);
  for (Parameter<T>* p : params) {
    const T rate = static_cast<T>(lr.for_group(p->group));
    const T wd = p->weight_decay ? static_cast<T>(cfg.weight_decay) : T(0);
    T* w = p->value.data();
    T* g = p->grad.data();
    T* v = p->momentum.data();
    const std::size_t n = p->value.size();
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = m * v[i] + (g[i] + wd * w[i]);
      w[i] -= rate * v[i];
      g[i] = T(0);
    }
  }
}

template void sgd_step(std::span<Parameter<float>* const>, LearningRates, const SgdConfig&);
template void sgd_step(std::span<Parameter<double>* const>, LearningRates, const SgdConfig&);

}  // namespace gnet
