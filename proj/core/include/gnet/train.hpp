// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

// Accompanying-learning trainer: augmentation, shuffled mini-batches, the
// two-group SGD schedule and resumable state.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <vector>

#include "gnet/archive.hpp"
#include "gnet/data.hpp"
#include "gnet/model.hpp"
#include "gnet/optim.hpp"

namespace gnet {

struct AugmentConfig {
  std::size_t pad = 10;  // reflect padding before the random crop
  double hflip_prob = 0.5;
  double erase_prob = 0.5;
  double erase_area_min = 0.02;
  double erase_area_max = 0.4;
  double erase_aspect_min = 0.3;
  double erase_aspect_max = 3.33;

  void validate() const;
};

// image: 3×H×W in [0, 1]. Pad-and-crop, horizontal flip, then random
// erasing with per-pixel uniform noise. Deterministic in `sample_seed`.
Tensor augment(const Tensor& image, const AugmentConfig& cfg, std::uint64_t sample_seed);

Tensor hflip_image(const Tensor& image);

struct EpochRecord {
  int epoch = 0;
  std::size_t batches = 0;
  std::size_t images = 0;
  // Means per image (the objectives themselves are batch sums).
  double joint = 0.0;
  std::vector<double> per_head;
  double accompanying = 0.0;
};

struct TrainState {
  int epoch = 0;          // epochs completed
  std::int64_t step = 0;  // optimizer steps taken
  std::uint64_t seed = 0;
  std::vector<EpochRecord> history;
};

struct TrainOptions {
  SgdConfig sgd;
  AugmentConfig augment;
  bool augment_enabled = true;
  Normalization normalization;
};

// Identity labels 0..C-1 assigned to the sorted distinct training ids.
std::map<int, int> label_map(const std::vector<ReidSample>& train);

// Batch boundaries for one epoch: consecutive runs of `batch_size` over the
// shuffled order, the short remainder kept. A remainder of one sample is
// folded into the previous batch because batch statistics need two.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t count, std::size_t batch_size);

// Order in which `count` samples are visited in `epoch`.
std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, int epoch);

// Augmented, normalized network input for sample `index` in `epoch`.
Tensor training_input(const ReidSample& sample, const GraftedNetConfig& model, const TrainOptions& opt,
                      std::uint64_t seed, int epoch, std::size_t index);

// One pass over `train`. Appends to state.history, advances epoch/step.
EpochRecord train_epoch(GraftedNet<float>& net, TrainState& state, const std::vector<ReidSample>& train,
                        const std::map<int, int>& labels, const TrainOptions& opt);

// Checkpoint sidecar: epoch, step, seed, history and every momentum buffer.
WeightArchive save_train_state(const TrainState& state, GraftedNet<float>& net);
TrainState load_train_state(const WeightArchive& archive, GraftedNet<float>& net);

}  // namespace gnet
