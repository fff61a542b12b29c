// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

// A whole training run as described by a RunConfig: data, model build,
// the epoch loop with periodic evaluation and early stopping.

#pragma once

#include <functional>
#include <optional>

#include "gnet/config.hpp"
#include "gnet/eval.hpp"
#include "gnet/train.hpp"

namespace gnet {

ReidDataset load_dataset(const RunConfig& config);

// The configured model with num_classes resolved from the training ids
// when left at 0.
GraftedNetConfig resolve_model(const RunConfig& config, const ReidDataset& data);

// Fresh parameters from config.seed, copying config.pretrained if set.
void initialize(GraftedNet<float>& net, const RunConfig& config);

struct EpochReport {
  EpochRecord record;
  std::optional<EvalReport> eval;  // present on evaluation epochs
};

struct RunOutcome {
  TrainState state;
  std::optional<EvalReport> last_eval;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(GraftedNet<float>&, const TrainState&, const EpochReport&)>;

// Trains from `state` until sgd.epochs, or until an evaluation meets both
// early-stop thresholds.
RunOutcome run_training(const RunConfig& config, GraftedNet<float>& net, const ReidDataset& data, TrainState state,
                        const EpochCallback& after_epoch = {});

// Weights restricted to the inference network: classifier and
// accompanying tensors dropped.
WeightArchive inference_weights(const WeightArchive& full);

// Inference network for `model` with `archive` loaded (training archives
// are reduced first).
GraftedNet<float> load_inference_model(GraftedNetConfig model, const WeightArchive& archive);

}  // namespace gnet
