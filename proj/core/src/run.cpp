// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "gnet/run.hpp"

namespace gnet {

ReidDataset load_dataset(const RunConfig& config) {
  if (config.dataset_kind == "synth") {
    const SynthSpec& s = config.synth;
    return synth_dataset(s.ids, s.per_id, s.cameras, s.seed, s.height, s.width);
  }
  if (!config.split_file.empty()) return ingest_split_file(config.dataset_root, config.split_file);
  return ingest_market_layout(config.dataset_root);
}

GraftedNetConfig resolve_model(const RunConfig& config, const ReidDataset& data) {
  GraftedNetConfig m = config.model;
  const std::size_t ids = label_map(data.train).size();
  if (m.num_classes == 0) m.num_classes = ids;
  if (m.num_classes < ids) {
    throw ConfigError("model.num_classes = " + std::to_string(m.num_classes) + " but the training split has " +
                      std::to_string(ids) + " identities");
  }
  m.validate();
  return m;
}

void initialize(GraftedNet<float>& net, const RunConfig& config) {
  if (config.pretrained.empty()) {
    net.init_params(config.seed);
    return;
  }
  const WeightArchive pre = WeightArchive::load(config.pretrained);
  net.init_params(config.seed, &pre);
}

RunOutcome run_training(const RunConfig& config, GraftedNet<float>& net, const ReidDataset& data, TrainState state,
                        const EpochCallback& after_epoch) {
  const auto labels = label_map(data.train);
  const bool can_eval = !data.query.empty() && !data.gallery.empty();
  const EarlyStop& stop = config.early_stop;
  RunOutcome out;
  while (state.epoch < config.train.sgd.total_epochs) {
    EpochReport rep;
    rep.record = train_epoch(net, state, data.train, labels, config.train);
    const bool last = state.epoch == config.train.sgd.total_epochs;
    if (can_eval && stop.eval_every > 0 && (state.epoch % stop.eval_every == 0 || last)) {
      rep.eval = evaluate(net, data, config.train.normalization, config.eval_batch);
      out.last_eval = rep.eval;
    }
    if (after_epoch) after_epoch(net, state, rep);
    if (rep.eval && rep.eval->metrics.cmc.front() >= stop.min_rank1 && rep.eval->metrics.mean_ap >= stop.min_map) {
      out.stopped_early = !last;
      break;
    }
  }
  out.state = std::move(state);
  return out;
}

WeightArchive inference_weights(const WeightArchive& full) {
  WeightArchive out = full;
  for (const auto& name : full.names()) {
    if (in_scope(name, "objective") || in_scope(name, "accompanying")) out.erase(name);
  }
  return out;
}

GraftedNet<float> load_inference_model(GraftedNetConfig model, const WeightArchive& archive) {
  model.with_classifiers = false;
  model.with_accompanying = false;
  if (model.num_classes == 0) model.num_classes = 1;
  GraftedNet<float> net(model);
  net.load_weights(inference_weights(archive));
  return net;
}

}  // namespace gnet
