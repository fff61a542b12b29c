// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <set>

#include "gnet/train.hpp"
#include "model_gradcheck.hpp"
#include "test_support.hpp"

using namespace gnet;

namespace {

Tensor ramp_image(std::size_t h, std::size_t w) {
  Tensor t({3, h, w});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(i % 251) / 251.0f;
  return t;
}

bool same(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

AugmentConfig no_augment() {
  AugmentConfig c;
  c.pad = 0;
  c.hflip_prob = 0;
  c.erase_prob = 0;
  return c;
}

// Mirror padding without repeating the edge pixel: index -1 maps to 1.
float reflect_padded(const Tensor& img, std::size_t c, long y, long x) {
  const long h = static_cast<long>(img.dim(1)), w = static_cast<long>(img.dim(2));
  auto mirror = [](long i, long n) { return i < 0 ? -i : (i >= n ? 2 * (n - 1) - i : i); };
  return img[(c * img.dim(1) + static_cast<std::size_t>(mirror(y, h))) * img.dim(2) + static_cast<std::size_t>(mirror(x, w))];
}

struct TinySetup {
  GraftedNetConfig model;
  ReidDataset data;
  std::map<int, int> labels;
  TrainOptions opt;
};

TinySetup tiny_setup(bool accompanying) {
  TinySetup s;
  s.model = test::tiny_model_config(3, accompanying);
  s.data = synth_dataset(3, 4, 2, 21, s.model.input_height, s.model.input_width);
  s.labels = label_map(s.data.train);
  s.opt.sgd.batch_size = 2;
  s.opt.sgd.total_epochs = 4;
  s.opt.sgd.decay_epochs = {2};
  s.opt.sgd.base_lr_pretrained = 0.001;
  s.opt.sgd.base_lr_fresh = 0.01;
  s.opt.augment.pad = 2;
  return s;
}

std::string weight_bytes(GraftedNet<float>& net) { return net.save_weights().serialize(); }

}  // namespace

TEST_CASE("augmentation with everything off is the identity") {
  const Tensor img = ramp_image(12, 8);
  CHECK(same(augment(img, no_augment(), 5), img));
}

TEST_CASE("horizontal flip is an involution") {
  const Tensor img = ramp_image(5, 7);
  const Tensor f = hflip_image(img);
  CHECK_FALSE(same(f, img));
  CHECK(same(hflip_image(f), img));
  CHECK(f[0] == img[6]);
}

TEST_CASE("augmentation is deterministic in the sample seed") {
  const Tensor img = ramp_image(24, 12);
  AugmentConfig cfg;
  cfg.pad = 3;
  CHECK(same(augment(img, cfg, 77), augment(img, cfg, 77)));
  bool differs = false;
  for (std::uint64_t s = 0; s < 8 && !differs; ++s) differs = !same(augment(img, cfg, s), augment(img, cfg, s + 100));
  CHECK(differs);
}

TEST_CASE("pad-and-crop picks a window of the mirrored image") {
  const Tensor img = ramp_image(10, 9);
  AugmentConfig cfg = no_augment();
  cfg.pad = 3;
  std::set<std::pair<long, long>> offsets;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const Tensor out = augment(img, cfg, seed);
    bool found = false;
    for (long oy = -3; oy <= 3 && !found; ++oy)
      for (long ox = -3; ox <= 3 && !found; ++ox) {
        bool match = true;
        for (std::size_t c = 0; c < 3 && match; ++c)
          for (long y = 0; y < 10 && match; ++y)
            for (long x = 0; x < 9 && match; ++x)
              match = out[(c * 10 + static_cast<std::size_t>(y)) * 9 + static_cast<std::size_t>(x)] ==
                      reflect_padded(img, c, y + oy, x + ox);
        if (match) {
          offsets.emplace(oy, ox);
          found = true;
        }
      }
    CHECK(found);
  }
  CHECK(offsets.size() > 10);
}

TEST_CASE("random erasing fills one rectangle with noise") {
  Tensor img({3, 40, 20});
  img.fill(2.0f);  // outside [0, 1), so erased pixels are recognizable
  AugmentConfig cfg = no_augment();
  cfg.erase_prob = 1.0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Tensor out = augment(img, cfg, seed);
    std::size_t y0 = 40, y1 = 0, x0 = 20, x1 = 0, erased = 0;
    for (std::size_t y = 0; y < 40; ++y)
      for (std::size_t x = 0; x < 20; ++x) {
        const float v = out[y * 20 + x];
        if (v == 2.0f) continue;
        CHECK(v >= 0.0f);
        CHECK(v < 1.0f);
        ++erased;
        y0 = std::min(y0, y), y1 = std::max(y1, y + 1), x0 = std::min(x0, x), x1 = std::max(x1, x + 1);
      }
    if (erased == 0) continue;  // all attempts rejected
    CHECK(erased == (y1 - y0) * (x1 - x0));
    const double frac = static_cast<double>(erased) / 800.0;
    CHECK(frac >= 0.01);
    CHECK(frac <= 0.45);
  }
}

TEST_CASE("augmentation rejects bad settings") {
  const Tensor img = ramp_image(8, 8);
  AugmentConfig cfg;
  cfg.pad = 8;
  CHECK_THROWS_AS(augment(img, cfg, 0), std::invalid_argument);
  cfg.pad = 1;
  cfg.hflip_prob = 1.5;
  CHECK_THROWS_AS(augment(img, cfg, 0), std::invalid_argument);
  cfg.hflip_prob = 0.5;
  cfg.erase_area_min = 0.5;
  cfg.erase_area_max = 0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("batch ranges") {
  using R = std::vector<std::pair<std::size_t, std::size_t>>;
  CHECK(batch_ranges(8, 4) == R{{0, 4}, {4, 8}});
  CHECK(batch_ranges(10, 4) == R{{0, 4}, {4, 8}, {8, 10}});
  CHECK(batch_ranges(9, 4) == R{{0, 4}, {4, 9}});
  CHECK(batch_ranges(3, 8) == R{{0, 3}});
  CHECK(batch_ranges(0, 8).empty());
  CHECK_THROWS_AS(batch_ranges(8, 1), std::invalid_argument);
}

TEST_CASE("epoch order is a seeded permutation") {
  const auto a = epoch_order(50, 3, 0);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 50; ++i) CHECK(sorted[i] == i);
  CHECK(a == epoch_order(50, 3, 0));
  CHECK(a != epoch_order(50, 3, 1));
  CHECK(a != epoch_order(50, 4, 0));
}

TEST_CASE("labels follow sorted identity order") {
  std::vector<ReidSample> s(4);
  s[0].person_id = 9;
  s[1].person_id = 2;
  s[2].person_id = 9;
  s[3].person_id = 5;
  const auto m = label_map(s);
  CHECK(m == std::map<int, int>{{2, 0}, {5, 1}, {9, 2}});
  s[1].person_id = -1;
  CHECK_THROWS_AS(label_map(s), DatasetError);
}

TEST_CASE("an epoch steps once per batch and records per-image losses") {
  auto s = tiny_setup(true);
  GraftedNet<float> net(s.model);
  net.init_params(2);
  TrainState st;
  st.seed = 5;
  const std::string before = weight_bytes(net);
  const auto rec = train_epoch(net, st, s.data.train, s.labels, s.opt);
  CHECK(rec.batches == 3);
  CHECK(rec.images == 6);
  CHECK(st.epoch == 1);
  CHECK(st.step == 3);
  CHECK(st.history.size() == 1);
  CHECK(rec.per_head.size() == 9);
  double sum = 0;
  for (double v : rec.per_head) sum += v;
  CHECK(rec.joint == doctest::Approx(sum).epsilon(1e-12));
  CHECK(rec.accompanying > 0.0);
  CHECK(weight_bytes(net) != before);
  for (auto* p : net.parameters())
    for (float g : p->grad.values()) REQUIRE(g == 0.0f);
}

TEST_CASE("training without the accompanying branch touches no such parameters") {
  auto s = tiny_setup(false);
  GraftedNet<float> net(s.model);
  net.init_params(2);
  for (auto* p : net.parameters()) CHECK_FALSE(in_scope(p->name, "accompanying"));
  TrainState st;
  const auto rec = train_epoch(net, st, s.data.train, s.labels, s.opt);
  CHECK(rec.accompanying == 0.0);
  CHECK(net.count_params("accompanying") == 0);
}

TEST_CASE("training is repeatable and resumes bit-exactly") {
  auto s = tiny_setup(true);
  GraftedNet<float> a(s.model);
  a.init_params(3);
  TrainState sa;
  sa.seed = 8;
  for (int e = 0; e < 3; ++e) train_epoch(a, sa, s.data.train, s.labels, s.opt);

  GraftedNet<float> b(s.model);
  b.init_params(3);
  TrainState sb;
  sb.seed = 8;
  for (int e = 0; e < 2; ++e) train_epoch(b, sb, s.data.train, s.labels, s.opt);
  const std::string weights = weight_bytes(b);
  const std::string state = save_train_state(sb, b).serialize();

  GraftedNet<float> c(s.model);
  c.init_params(99);
  c.load_weights(WeightArchive::parse(weights));
  TrainState sc = load_train_state(WeightArchive::parse(state), c);
  CHECK(sc.epoch == 2);
  CHECK(sc.step == sb.step);
  CHECK(sc.seed == 8);
  REQUIRE(sc.history.size() == 2);
  CHECK(sc.history[1].joint == sb.history[1].joint);
  CHECK(sc.history[1].per_head == sb.history[1].per_head);
  CHECK(save_train_state(sc, c).serialize() == state);
  train_epoch(c, sc, s.data.train, s.labels, s.opt);

  // The crossing of the decay epoch also survives the restart.
  CHECK(weight_bytes(c) == weight_bytes(a));
  CHECK(sc.history.back().joint == sa.history.back().joint);
}

TEST_CASE("state archive must cover every momentum buffer") {
  auto s = tiny_setup(false);
  GraftedNet<float> net(s.model);
  net.init_params(1);
  TrainState st;
  auto archive = save_train_state(st, net);
  archive.erase("momentum." + net.parameters().front()->name);
  CHECK_THROWS_AS(load_train_state(archive, net), ArchiveError);
}

TEST_CASE("labels outside the classifier range are rejected") {
  auto s = tiny_setup(false);
  s.model.num_classes = 2;
  GraftedNet<float> net(s.model);
  net.init_params(1);
  TrainState st;
  CHECK_THROWS_AS(train_epoch(net, st, s.data.train, s.labels, s.opt), DatasetError);
}
