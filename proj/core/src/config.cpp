// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "gnet/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace gnet {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key) + ": expected " +
                    std::string(expected));
}

template <typename T>
T parse_number(std::string_view key, std::string_view v, std::string_view expected) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) bad_value(key, v, expected);
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  const double d = parse_number<double>(key, v, "a real number");
  if (!std::isfinite(d)) bad_value(key, v, "a finite real number");
  return d;
}

std::size_t parse_size(std::string_view key, std::string_view v) {
  return parse_number<std::size_t>(key, v, "a non-negative integer");
}

int parse_int(std::string_view key, std::string_view v) { return parse_number<int>(key, v, "an integer"); }

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true") return true;
  if (v == "false") return false;
  bad_value(key, v, "true or false");
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  if (trim(v).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    out.push_back(trim(v.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename R>
std::string real_text(R d) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, d);
  (void)ec;
  return {buf, ptr};
}

template <typename C, typename F>
std::string join(const C& items, F&& fmt) {
  std::string out;
  for (const auto& x : items) {
    if (!out.empty()) out += ',';
    out += fmt(x);
  }
  return out;
}

struct Key {
  std::string_view name;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Member>
Key size_key(std::string_view name, Member m) {
  return {name, [m](RunConfig& c, auto k, auto v) { m(c) = parse_size(k, v); },
          [m](const RunConfig& c) { return std::to_string(m(c)); }};
}
template <typename Member>
Key int_key(std::string_view name, Member m) {
  return {name, [m](RunConfig& c, auto k, auto v) { m(c) = parse_int(k, v); },
          [m](const RunConfig& c) { return std::to_string(m(c)); }};
}
template <typename Member>
Key real_key(std::string_view name, Member m) {
  return {name, [m](RunConfig& c, auto k, auto v) { m(c) = parse_real(k, v); },
          [m](const RunConfig& c) { return real_text(m(c)); }};
}
template <typename Member>
Key bool_key(std::string_view name, Member m) {
  return {name, [m](RunConfig& c, auto k, auto v) { m(c) = parse_bool(k, v); },
          [m](const RunConfig& c) { return std::string(m(c) ? "true" : "false"); }};
}
template <typename Member>
Key path_key(std::string_view name, Member m) {
  return {name, [m](RunConfig& c, auto, auto v) { m(c) = std::filesystem::path(std::string(v)); },
          [m](const RunConfig& c) { return m(c).string(); }};
}
template <typename Member>
Key channels_key(std::string_view name, Member m) {
  return {name,
          [m](RunConfig& c, auto k, auto v) {
            const auto parts = split_list(v);
            if (parts.size() != 3) bad_value(k, v, "three comma-separated reals");
            for (std::size_t i = 0; i < 3; ++i) {
              const float f = parse_number<float>(k, parts[i], "a real number");
              if (!std::isfinite(f)) bad_value(k, parts[i], "a finite real number");
              m(c)[i] = f;
            }
          },
          [m](const RunConfig& c) {
            return join(m(c), [](float f) { return real_text(f); });
          }};
}

#define GNET_FIELD(expr) [](auto& c) -> auto& { return expr; }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"dataset.kind",
       [](RunConfig& c, auto k, auto v) {
         if (v != "market" && v != "synth") bad_value(k, v, "market or synth");
         c.dataset_kind = std::string(v);
       },
       [](const RunConfig& c) { return c.dataset_kind; }},
      path_key("dataset.root", GNET_FIELD(c.dataset_root)),
      path_key("dataset.split_file", GNET_FIELD(c.split_file)),
      size_key("synth.ids", GNET_FIELD(c.synth.ids)),
      size_key("synth.per_id", GNET_FIELD(c.synth.per_id)),
      size_key("synth.cameras", GNET_FIELD(c.synth.cameras)),
      {"synth.seed", [](RunConfig& c, auto k, auto v) { c.synth.seed = parse_number<std::uint64_t>(k, v, "an unsigned integer"); },
       [](const RunConfig& c) { return std::to_string(c.synth.seed); }},
      size_key("synth.height", GNET_FIELD(c.synth.height)),
      size_key("synth.width", GNET_FIELD(c.synth.width)),
      size_key("model.num_classes", GNET_FIELD(c.model.num_classes)),
      int_key("model.reduction_groups", GNET_FIELD(c.model.reduction_groups)),
      size_key("model.reduced_dim", GNET_FIELD(c.model.reduced_dim)),
      {"model.part_scheme",
       [](RunConfig& c, auto k, auto v) {
         std::vector<std::size_t> parts;
         for (auto p : split_list(v)) parts.push_back(parse_size(k, p));
         c.model.part_scheme = std::move(parts);
       },
       [](const RunConfig& c) { return join(c.model.part_scheme, [](std::size_t p) { return std::to_string(p); }); }},
      {"model.level_taps",
       [](RunConfig& c, auto, auto v) {
         std::vector<std::string> taps;
         for (auto t : split_list(v)) taps.emplace_back(t);
         c.model.level_taps = std::move(taps);
       },
       [](const RunConfig& c) { return join(c.model.level_taps, [](const std::string& t) { return t; }); }},
      bool_key("model.accompanying", GNET_FIELD(c.model.with_accompanying)),
      size_key("model.input_height", GNET_FIELD(c.model.input_height)),
      size_key("model.input_width", GNET_FIELD(c.model.input_width)),
      size_key("model.width_divisor", GNET_FIELD(c.model.width_divisor)),
      bool_key("model.scion_pooling", GNET_FIELD(c.model.scion_pooling)),
      bool_key("model.allow_uneven_parts", GNET_FIELD(c.model.allow_uneven_parts)),
      path_key("model.pretrained", GNET_FIELD(c.pretrained)),
      real_key("sgd.lr_pretrained", GNET_FIELD(c.train.sgd.base_lr_pretrained)),
      real_key("sgd.lr_fresh", GNET_FIELD(c.train.sgd.base_lr_fresh)),
      real_key("sgd.momentum", GNET_FIELD(c.train.sgd.momentum)),
      real_key("sgd.weight_decay", GNET_FIELD(c.train.sgd.weight_decay)),
      {"sgd.decay_epochs",
       [](RunConfig& c, auto k, auto v) {
         std::vector<int> epochs;
         for (auto e : split_list(v)) epochs.push_back(parse_int(k, e));
         c.train.sgd.decay_epochs = std::move(epochs);
       },
       [](const RunConfig& c) { return join(c.train.sgd.decay_epochs, [](int e) { return std::to_string(e); }); }},
      real_key("sgd.decay_factor", GNET_FIELD(c.train.sgd.decay_factor)),
      int_key("sgd.epochs", GNET_FIELD(c.train.sgd.total_epochs)),
      int_key("sgd.batch_size", GNET_FIELD(c.train.sgd.batch_size)),
      bool_key("augment.enabled", GNET_FIELD(c.train.augment_enabled)),
      size_key("augment.pad", GNET_FIELD(c.train.augment.pad)),
      real_key("augment.hflip", GNET_FIELD(c.train.augment.hflip_prob)),
      real_key("augment.erase", GNET_FIELD(c.train.augment.erase_prob)),
      real_key("augment.erase_area_min", GNET_FIELD(c.train.augment.erase_area_min)),
      real_key("augment.erase_area_max", GNET_FIELD(c.train.augment.erase_area_max)),
      real_key("augment.erase_aspect_min", GNET_FIELD(c.train.augment.erase_aspect_min)),
      real_key("augment.erase_aspect_max", GNET_FIELD(c.train.augment.erase_aspect_max)),
      channels_key("normalize.mean", GNET_FIELD(c.train.normalization.mean)),
      channels_key("normalize.std", GNET_FIELD(c.train.normalization.stddev)),
      int_key("train.eval_every", GNET_FIELD(c.early_stop.eval_every)),
      real_key("train.stop_rank1", GNET_FIELD(c.early_stop.min_rank1)),
      real_key("train.stop_map", GNET_FIELD(c.early_stop.min_map)),
      size_key("eval.batch", GNET_FIELD(c.eval_batch)),
      {"seed", [](RunConfig& c, auto k, auto v) { c.seed = parse_number<std::uint64_t>(k, v, "an unsigned integer"); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      path_key("output.dir", GNET_FIELD(c.output_dir)),
  };
  return table;
}

#undef GNET_FIELD

const Key* find_key(std::string_view name) {
  for (const auto& k : keys())
    if (k.name == name) return &k;
  return nullptr;
}

}  // namespace

RunConfig::RunConfig() { model.num_classes = 0; }

void RunConfig::validate() const {
  if (dataset_kind == "market" && dataset_root.empty()) throw ConfigError("dataset.root is required for market data");
  if (dataset_kind == "synth" && (synth.ids < 2 || synth.per_id < 2 || synth.cameras < 2)) {
    throw ConfigError("synth.ids, synth.per_id and synth.cameras must each be at least 2");
  }
  if (eval_batch == 0) throw ConfigError("eval.batch must be positive");
  if (early_stop.eval_every < 0) throw ConfigError("train.eval_every must be non-negative");
  if (output_dir.empty()) throw ConfigError("output.dir must not be empty");
  try {
    train.sgd.validate();
    train.augment.validate();
    GraftedNetConfig m = model;
    if (m.num_classes == 0) m.num_classes = 2;  // resolved from the data later
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  for (float s : train.normalization.stddev)
    if (!(s > 0.0f)) throw ConfigError("normalize.std entries must be positive");
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  const Key* k = find_key(key);
  if (k == nullptr) throw ConfigError("unknown key '" + std::string(key) + "'");
  k->set(config, key, value);
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig c;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (!seen.insert(std::string(key)).second) throw ConfigError(where + "duplicate key '" + std::string(key) + "'");
    try {
      set_config_value(c, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string serialize_run_config(const RunConfig& config) {
  std::string out;
  for (const auto& k : keys()) {
    out += k.name;
    out += " = ";
    out += k.get(config);
    out += '\n';
  }
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.emplace_back(k.name);
  return out;
}

void apply_environment(RunConfig& config) {
  const char* s = std::getenv("GNET_SEED");
  if (s == nullptr) return;
  try {
    set_config_value(config, "seed", trim(s));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("GNET_SEED: ") + e.what());
  }
}

}  // namespace gnet
