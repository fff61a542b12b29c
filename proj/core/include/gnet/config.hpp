// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

// Run configuration: flat `section.key = value` text, one entry per line,
// `#` comments. Every key has a default; unknown or repeated keys are errors.

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gnet/data.hpp"
#include "gnet/model.hpp"
#include "gnet/optim.hpp"
#include "gnet/train.hpp"

namespace gnet {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SynthSpec {
  std::size_t ids = 16;
  std::size_t per_id = 8;
  std::size_t cameras = 4;
  std::uint64_t seed = 0;
  std::size_t height = 384;
  std::size_t width = 192;
};

struct EarlyStop {
  int eval_every = 0;        // 0 disables periodic evaluation
  double min_rank1 = 2.0;    // stop once rank-1 >= min_rank1 and mAP >= min_map
  double min_map = 2.0;
};

struct RunConfig {
  std::string dataset_kind = "market";  // market | synth
  std::filesystem::path dataset_root;
  std::filesystem::path split_file;  // optional; replaces the directory layout
  SynthSpec synth;
  GraftedNetConfig model;  // num_classes 0: one class per training identity
  std::filesystem::path pretrained;
  TrainOptions train;
  EarlyStop early_stop;
  std::size_t eval_batch = 16;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "gnet-run";

  RunConfig();
  void validate() const;
};

// Throws ConfigError naming the line on malformed lines, unknown keys,
// duplicates and bad values.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

// Every key in canonical order with its current value.
std::string serialize_run_config(const RunConfig& config);

// Sets one key, as a config line would. Throws ConfigError.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);

std::vector<std::string> config_keys();

// GNET_SEED, when set, replaces config.seed.
void apply_environment(RunConfig& config);

}  // namespace gnet
