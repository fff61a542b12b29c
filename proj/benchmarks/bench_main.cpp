// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "gnet/archive.hpp"
#include "gnet/eval.hpp"
#include "gnet/ops.hpp"
#include "gnet/train.hpp"

using namespace gnet;

namespace {

Tensor random_tensor(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  Tensor t(shape);
  for (auto& v : t.values()) v = d(rng);
  return t;
}

// 3×3 expand convolution of a conv5-level fire module.
void BM_Conv3x3Forward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({n, 96, 24, 12}, 1);
  const Tensor k = random_tensor({384, 96, 3, 3}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, k, {1, 1, 1}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Conv3x3Forward)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_Conv3x3Backward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({n, 96, 24, 12}, 1);
  const Tensor k = random_tensor({384, 96, 3, 3}, 2);
  const Tensor up = random_tensor({n, 384, 24, 12}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d_backward(up, x, k, {1, 1, 1}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Conv3x3Backward)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

// Grouped 1×1 reduction of one 768-channel pooled feature.
void BM_GroupedReduction(benchmark::State& state) {
  const Tensor x = random_tensor({32, 768, 1, 1}, 4);
  const auto g = static_cast<int>(state.range(0));
  const Tensor k = random_tensor({256, static_cast<std::size_t>(768 / g), 1, 1}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, k, {g, 1, 0}));
}
BENCHMARK(BM_GroupedReduction)->Arg(1)->Arg(8);

void BM_EmbedFullSize(benchmark::State& state) {
  GraftedNetConfig c;
  c.with_classifiers = false;
  c.with_accompanying = false;
  GraftedNet<float> net(c);
  net.init_params(0);
  const Tensor x = random_tensor({1, 3, 384, 192}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(net.embed(x));
}
BENCHMARK(BM_EmbedFullSize)->Unit(benchmark::kMillisecond)->Iterations(3);

void BM_TrainStepToySize(benchmark::State& state) {
  GraftedNetConfig c;
  c.num_classes = 16;
  c.input_height = 128;
  c.input_width = 64;
  c.allow_uneven_parts = true;
  GraftedNet<float> net(c);
  net.init_params(0);
  const Tensor x = random_tensor({8, 3, 128, 64}, 7);
  const std::vector<int> labels{0, 1, 2, 3, 4, 5, 6, 7};
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.forward_backward(x, labels));
    for (auto* p : net.parameters()) p->zero_grad();
  }
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_TrainStepToySize)->Unit(benchmark::kMillisecond)->Iterations(3);

void BM_CosineRanking(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  std::vector<RetrievalEntry> gallery(n);
  for (std::size_t i = 0; i < n; ++i) {
    gallery[i].feature.resize(2304);
    for (auto& v : gallery[i].feature) v = d(rng);
    gallery[i].person_id = static_cast<int>(i % 500);
    gallery[i].camera_id = static_cast<int>(i % 6) + 1;
  }
  const RetrievalEntry query = gallery[n / 2];
  for (auto _ : state) benchmark::DoNotOptimize(cosine_rank(query, gallery).average_precision());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_CosineRanking)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_Augment(benchmark::State& state) {
  const Tensor img = random_tensor({3, 384, 192}, 9);
  AugmentConfig cfg;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(augment(img, cfg, ++seed));
}
BENCHMARK(BM_Augment)->Unit(benchmark::kMicrosecond);

void BM_ArchiveSerialize(benchmark::State& state) {
  GraftedNetConfig c;
  c.with_classifiers = false;
  c.with_accompanying = false;
  GraftedNet<float> net(c);
  net.init_params(0);
  const WeightArchive a = net.save_weights();
  std::size_t size = 0;
  for (auto _ : state) {
    const std::string bytes = a.serialize();
    size = bytes.size();
    benchmark::DoNotOptimize(WeightArchive::parse(bytes).size());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(size));
}
BENCHMARK(BM_ArchiveSerialize)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
