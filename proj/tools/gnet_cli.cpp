// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

// gnet: parameter counts, training, evaluation, feature extraction,
// synthetic data and a build self-test.

#include <malloc.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <json.hpp>
#include <random>
#include <sstream>

#include "brute_force_eval.hpp"
#include "gnet/archive.hpp"
#include "gnet/run.hpp"
#include "model_gradcheck.hpp"

namespace fs = std::filesystem;
using namespace gnet;

namespace {

struct CliFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void tune_allocator() {
  // Activations are large and short-lived; keeping them on the heap instead
  // of fresh mmaps avoids page-fault churn every step.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
}

std::string quoted(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

// ------------------------------------------------------------ count-params

int cmd_count_params(int groups, std::size_t classes, const std::string& scope) {
  GraftedNetConfig c;
  c.reduction_groups = groups;
  c.num_classes = classes;
  const bool training_scope = in_scope(scope, "objective") || in_scope(scope, "accompanying");
  if (!training_scope) {
    c.with_classifiers = false;
    c.with_accompanying = false;
  }
  GraftedNet<float> net(c);
  if (scope.empty()) {
    const std::size_t n = net.count_params();
    std::printf("total=%zu (%s)\n", n, format_millions(n, 1).c_str());
  } else {
    if (std::find(std::begin(kScopes), std::end(kScopes), scope) == std::end(kScopes)) {
      throw CliFailure("unknown scope '" + scope + "' (rootstock, scion, reduction, objective, accompanying)");
    }
    const std::size_t n = net.count_params(scope);
    std::printf("%zu (%s)\n", n, format_millions(n, 3).c_str());
  }
  return 0;
}

// ------------------------------------------------------------------ train

std::string history_csv(const TrainState& s) {
  std::string out = "epoch,batches,images,joint,accompanying\n";
  char line[160];
  for (const auto& r : s.history) {
    std::snprintf(line, sizeof line, "%d,%zu,%zu,%.6f,%.6f\n", r.epoch, r.batches, r.images, r.joint, r.accompanying);
    out += line;
  }
  return out;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets, const std::optional<std::uint64_t>& seed,
              const std::string& out_dir, bool resume) {
  RunConfig cfg = load_run_config(config_path);
  apply_environment(cfg);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw CliFailure("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed) cfg.seed = *seed;
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  cfg.validate();

  const ReidDataset data = load_dataset(cfg);
  const GraftedNetConfig model = resolve_model(cfg, data);
  std::cerr << "train: " << data.train.size() << " images, " << model.num_classes << " classes, "
            << model.head_count() << " heads\n";
  GraftedNet<float> net(model);
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  TrainState state;
  state.seed = cfg.seed;
  if (resume && fs::exists(dir / "state.gnw")) {
    net.load_weights(WeightArchive::load(dir / "model.gnw"));
    state = load_train_state(WeightArchive::load(dir / "state.gnw"), net);
    if (state.seed != cfg.seed) throw CliFailure("checkpoint was trained with a different seed");
    std::cerr << "train: resuming after epoch " << state.epoch << "\n";
  } else {
    initialize(net, cfg);
  }
  write_file_atomic(dir / "config.txt", serialize_run_config(cfg));

  const auto t0 = std::chrono::steady_clock::now();
  const auto outcome = run_training(cfg, net, data, state, [&](GraftedNet<float>& n, const TrainState& s, const EpochReport& r) {
    n.save_weights().save(dir / "model.gnw");
    save_train_state(s, n).save(dir / "state.gnw");
    write_file_atomic(dir / "history.csv", history_csv(s));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "epoch %d joint=%.4f accompanying=%.4f", r.record.epoch + 1, r.record.joint,
                 r.record.accompanying);
    if (r.eval) std::fprintf(stderr, " rank1=%.4f mAP=%.4f", r.eval->metrics.cmc.front(), r.eval->metrics.mean_ap);
    std::fprintf(stderr, " elapsed=%.0fs\n", secs);
  });
  inference_weights(net.save_weights()).save(dir / "inference.gnw");
  if (outcome.last_eval) {
    write_file_atomic(dir / "report.txt", format_report(*outcome.last_eval));
    write_file_atomic(dir / "queries.csv", format_query_csv(*outcome.last_eval));
    std::cout << format_report(*outcome.last_eval);
  }
  std::cout << "epochs=" << outcome.state.epoch << "\n";
  std::cout << "stopped_early=" << (outcome.stopped_early ? 1 : 0) << "\n";
  return 0;
}

// ------------------------------------------------------------ eval/extract

GraftedNetConfig model_for(const std::string& config_path) {
  if (config_path.empty()) return GraftedNetConfig{};
  return load_run_config(config_path).model;
}

int cmd_eval(const std::string& weights, const std::string& dataset, const std::string& split_file,
             const std::string& config_path, const std::string& out_dir, std::size_t batch) {
  const GraftedNetConfig model = model_for(config_path);
  GraftedNet<float> net = load_inference_model(model, WeightArchive::load(weights));
  const ReidDataset data = split_file.empty() ? ingest_market_layout(dataset) : ingest_split_file(dataset, split_file);
  const Normalization norm = config_path.empty() ? Normalization{} : load_run_config(config_path).train.normalization;
  const EvalReport rep = evaluate(net, data, norm, batch);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_file_atomic(fs::path(out_dir) / "report.txt", format_report(rep));
    write_file_atomic(fs::path(out_dir) / "queries.csv", format_query_csv(rep));
  }
  std::cout << format_report(rep);
  return 0;
}

int cmd_extract(const std::string& weights, const std::string& image, const std::string& out,
                const std::string& config_path) {
  const GraftedNetConfig model = model_for(config_path);
  GraftedNet<float> net = load_inference_model(model, WeightArchive::load(weights));
  const Normalization norm = config_path.empty() ? Normalization{} : load_run_config(config_path).train.normalization;
  ReidSample s;
  s.name = fs::path(image).filename().string();
  s.path = image;
  const auto entries = extract_entries(net, {s}, norm, 1);
  nlohmann::json j;
  j["image"] = image;
  j["dim"] = entries.front().feature.size();
  j["feature"] = entries.front().feature;
  write_file_atomic(out, j.dump() + "\n");
  return 0;
}

// ------------------------------------------------------------------ synth

int cmd_synth(const std::string& out, std::size_t ids, std::size_t per_id, std::size_t cameras, std::uint64_t seed,
              std::size_t height, std::size_t width) {
  const fs::path dest(out);
  if (fs::exists(dest)) throw CliFailure("output directory " + out + " already exists");
  const ReidDataset d = synth_dataset(ids, per_id, cameras, seed, height, width);
  // Written beside the destination and renamed into place once complete.
  fs::path tmp = dest;
  tmp += ".partial";
  fs::remove_all(tmp);
  try {
    write_market_layout(d, tmp);
    fs::rename(tmp, dest);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
  std::printf("train=%zu query=%zu gallery=%zu identities=%zu\n", d.train.size(), d.query.size(), d.gallery.size(), ids);
  return 0;
}

// --------------------------------------------------------------- selftest

bool report_check(const char* name, bool ok, const std::string& detail) {
  std::printf("%-10s %s  %s\n", name, ok ? "ok  " : "FAIL", detail.c_str());
  return ok;
}

int cmd_selftest(std::uint64_t seed) {
  bool all = true;

  {
    GraftedNetConfig c;
    c.with_classifiers = false;
    c.with_accompanying = false;
    GraftedNet<float> net(c);
    const std::size_t n = net.count_params();
    const std::size_t red = net.count_params("reduction");
    // Grouped 1×1 reductions, one 512-wide and eight 768-wide, plus a BN
    // scale/shift pair per head.
    const std::size_t red_closed = 512 * 256 / 8 + 8 * (768 * 256 / 8) + 9 * 2 * 256;
    all &= report_check("counts", red == red_closed && format_millions(n, 1) == "4.6M",
                        "total=" + std::to_string(n) + " reduction=" + std::to_string(red));
  }

  {
    const auto cfg = test::tiny_model_config(3, true);
    std::size_t probes = 0, bad = 0;
    double worst = 0.0;
    for (std::uint64_t s = seed; s < seed + 2; ++s) {
      for (const auto& r : test::probe_model_gradients(cfg, 4, s, 2)) {
        const auto& o = r.outcome;
        ++probes;
        // Entries whose true derivative vanishes sit at the loss's rounding
        // floor and have no meaningful relative error.
        const bool structural_zero = std::abs(o.analytic) < 1e-10 && std::abs(o.numeric) < 1e-7;
        if (o.error < 1e-4 || structural_zero || std::abs(o.numeric - o.analytic) < 1e-10) continue;
        ++bad;
        worst = std::max(worst, o.error);
      }
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "probes=%zu failing=%zu worst=%.2e", probes, bad, worst);
    all &= report_check("gradients", bad == 0, buf);
  }

  {
    std::size_t mismatches = 0, compared = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
      const auto inst = test::random_instance(seed * 1000 + s);
      const auto oracle = test::brute_force_metrics(inst.queries, inst.gallery, 20);
      if (oracle.evaluated == 0) continue;
      std::vector<RetrievalEntry> q, g;
      for (const auto& it : inst.queries) q.push_back({{it.feature.begin(), it.feature.end()}, it.id, it.cam, it.id == -1});
      for (const auto& it : inst.gallery) g.push_back({{it.feature.begin(), it.feature.end()}, it.id, it.cam, it.id == -1});
      std::vector<RankingResult> results;
      for (std::size_t i = 0; i < q.size(); ++i) results.push_back(cosine_rank(q[i], g, i));
      const auto m = summarize(results, {1, 5, 10, 20});
      ++compared;
      bool ok = std::abs(m.mean_ap - oracle.mean_ap) <= 1e-9;
      for (std::size_t i = 0; i < m.ranks.size(); ++i) ok = ok && std::abs(m.cmc[i] - oracle.cmc[m.ranks[i] - 1]) <= 1e-9;
      mismatches += !ok;
    }
    all &= report_check("metrics", mismatches == 0 && compared > 0,
                        "instances=" + std::to_string(compared) + " mismatches=" + std::to_string(mismatches));
  }

  {
    GraftedNet<float> net(test::tiny_model_config(3, true));
    net.init_params(seed);
    const std::string bytes = net.save_weights().serialize();
    const std::string again = WeightArchive::parse(bytes).serialize();
    bool truncated_rejected = false;
    try {
      WeightArchive::parse(std::string_view(bytes).substr(0, bytes.size() - 1));
    } catch (const ArchiveError&) {
      truncated_rejected = true;
    }
    all &= report_check("archive", again == bytes && truncated_rejected, "bytes=" + std::to_string(bytes.size()));
  }

  std::printf("selftest=%s\n", all ? "pass" : "fail");
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"GraftedNet person re-identification"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "Random seed (overrides config and GNET_SEED)");

  int groups = 8;
  std::size_t classes = 751;
  std::string scope;
  auto* count = app.add_subcommand("count-params", "Print parameter counts of the published network");
  count->add_option("--groups", groups, "Reduction group count")->check(CLI::IsMember({1, 2, 4, 8}));
  count->add_option("--classes", classes, "Identity classes (objective scope)")->check(CLI::PositiveNumber);
  count->add_option("--scope", scope, "rootstock | scion | reduction | objective | accompanying");

  std::string config_path, out_dir;
  std::vector<std::string> sets;
  bool resume = false;
  auto* train = app.add_subcommand("train", "Train from a config file");
  train->add_option("--config", config_path, "Run config (key = value lines)")->required()->check(CLI::ExistingFile);
  train->add_option("--set", sets, "Override one config key: key=value");
  train->add_option("--out", out_dir, "Output directory (overrides output.dir)");
  train->add_flag("--resume", resume, "Continue from the checkpoint in the output directory");

  std::string weights, dataset, split_file, eval_out;
  std::size_t batch = 16;
  auto* eval = app.add_subcommand("eval", "Evaluate weights on a query/gallery layout");
  eval->add_option("--weights", weights, "Weight archive")->required()->check(CLI::ExistingFile);
  eval->add_option("--dataset", dataset, "Dataset root")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--split-file", split_file, "Split list instead of the directory layout")->check(CLI::ExistingFile);
  eval->add_option("--config", config_path, "Run config describing the model")->check(CLI::ExistingFile);
  eval->add_option("--out", eval_out, "Directory for report.txt and queries.csv");
  eval->add_option("--batch", batch, "Extraction batch size")->check(CLI::PositiveNumber);

  std::string image, feature_out;
  auto* extract = app.add_subcommand("extract", "Write the flip-averaged feature of one image as JSON");
  extract->add_option("--weights", weights, "Weight archive")->required()->check(CLI::ExistingFile);
  extract->add_option("--image", image, "Image file")->required()->check(CLI::ExistingFile);
  extract->add_option("--out", feature_out, "Output JSON file")->required();
  extract->add_option("--config", config_path, "Run config describing the model")->check(CLI::ExistingFile);

  std::string synth_out;
  std::size_t ids = 16, per_id = 8, cameras = 4, height = 384, width = 192;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset in the Market layout");
  synth->add_option("--out", synth_out, "Destination directory (must not exist)")->required();
  synth->add_option("--ids", ids, "Identities")->required();
  synth->add_option("--per-id", per_id, "Images per identity")->required();
  synth->add_option("--cameras", cameras, "Cameras");
  synth->add_option("--height", height, "Image height");
  synth->add_option("--width", width, "Image width");

  auto* selftest = app.add_subcommand("selftest", "Gradient checks, metric oracles, counts and archive round trip");

  CLI11_PARSE(app, argc, argv);

  const char* command = app.get_subcommands().front()->get_name().c_str();
  try {
    if (*count) return cmd_count_params(groups, classes, scope);
    if (*train) return cmd_train(config_path, sets, seed, out_dir, resume);
    if (*eval) return cmd_eval(weights, dataset, split_file, config_path, eval_out, batch);
    if (*extract) return cmd_extract(weights, image, feature_out, config_path);
    if (*synth) return cmd_synth(synth_out, ids, per_id, cameras, seed.value_or(0), height, width);
    if (*selftest) return cmd_selftest(seed.value_or(0));
  } catch (const std::exception& e) {
    std::cerr << "error command=" << command << " message=" << quoted(e.what()) << "\n";
    return 1;
  }
  return 2;
}
