// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "gnet/train.hpp"

#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gnet/random.hpp"

namespace gnet {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kAugmentStream = 0x4155474dULL;

std::size_t reflect(long i, std::size_t n) {
  const long len = static_cast<long>(n);
  if (i < 0) i = -i;
  if (i >= len) i = 2 * len - 2 - i;
  return static_cast<std::size_t>(i);
}

std::vector<std::int64_t> bits_of(const std::vector<double>& v) {
  std::vector<std::int64_t> out;
  out.reserve(v.size());
  for (double d : v) out.push_back(std::bit_cast<std::int64_t>(d));
  return out;
}

std::vector<double> doubles_of(const std::vector<std::int64_t>& v) {
  std::vector<double> out;
  out.reserve(v.size());
  for (std::int64_t i : v) out.push_back(std::bit_cast<double>(i));
  return out;
}

}  // namespace

void AugmentConfig::validate() const {
  const auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
  };
  prob(hflip_prob, "augment.hflip_prob");
  prob(erase_prob, "augment.erase_prob");
  if (!(erase_area_min > 0.0 && erase_area_min <= erase_area_max && erase_area_max <= 1.0)) {
    throw std::invalid_argument("augment.erase_area range must satisfy 0 < min <= max <= 1");
  }
  if (!(erase_aspect_min > 0.0 && erase_aspect_min <= erase_aspect_max)) {
    throw std::invalid_argument("augment.erase_aspect range must satisfy 0 < min <= max");
  }
}

Tensor hflip_image(const Tensor& image) {
  if (image.rank() != 3) throw DimensionError("hflip", "rank", "expected C×H×W");
  Tensor out(image.shape());
  const std::size_t rows = image.dim(0) * image.dim(1), w = image.dim(2);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t x = 0; x < w; ++x) out[r * w + x] = image[r * w + (w - 1 - x)];
  return out;
}

Tensor augment(const Tensor& image, const AugmentConfig& cfg, std::uint64_t sample_seed) {
  cfg.validate();
  if (image.rank() != 3) throw DimensionError("augment", "rank", "expected C×H×W");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (cfg.pad >= h || cfg.pad >= w) throw std::invalid_argument("augment.pad must be smaller than the image");
  std::mt19937_64 rng(sample_seed);

  Tensor out;
  if (cfg.pad == 0) {
    out = image;
  } else {
    // Crop origin inside the (H + 2p)×(W + 2p) reflect-padded image.
    const long oy = static_cast<long>(uniform_index(rng, 2 * cfg.pad + 1));
    const long ox = static_cast<long>(uniform_index(rng, 2 * cfg.pad + 1));
    const long p = static_cast<long>(cfg.pad);
    out = Tensor(image.shape());
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y) {
        const std::size_t sy = reflect(static_cast<long>(y) + oy - p, h);
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t sx = reflect(static_cast<long>(x) + ox - p, w);
          out[(ch * h + y) * w + x] = image[(ch * h + sy) * w + sx];
        }
      }
  }

  if (uniform01(rng) < cfg.hflip_prob) out = hflip_image(out);

  if (uniform01(rng) < cfg.erase_prob) {
    const double area = static_cast<double>(h * w);
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double target = uniform(rng, cfg.erase_area_min, cfg.erase_area_max) * area;
      const double aspect = uniform(rng, cfg.erase_aspect_min, cfg.erase_aspect_max);
      const auto eh = static_cast<std::size_t>(std::lround(std::sqrt(target * aspect)));
      const auto ew = static_cast<std::size_t>(std::lround(std::sqrt(target / aspect)));
      if (eh == 0 || ew == 0 || eh >= h || ew >= w) continue;
      const std::size_t y0 = uniform_index(rng, h - eh + 1);
      const std::size_t x0 = uniform_index(rng, w - ew + 1);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = y0; y < y0 + eh; ++y)
          for (std::size_t x = x0; x < x0 + ew; ++x) out[(ch * h + y) * w + x] = static_cast<float>(uniform01(rng));
      break;
    }
  }
  return out;
}

std::map<int, int> label_map(const std::vector<ReidSample>& train) {
  std::map<int, int> m;
  for (const auto& s : train) {
    if (s.distractor()) throw DatasetError("training sample " + s.name + " is a distractor");
    m.emplace(s.person_id, 0);
  }
  int next = 0;
  for (auto& [id, label] : m) label = next++;
  return m;
}

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t count, std::size_t batch_size) {
  if (batch_size < 2) throw std::invalid_argument("batch size must be at least 2");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < count; b += batch_size) out.emplace_back(b, std::min(count, b + batch_size));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out.pop_back();
    out.back().second = count;
  }
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed({seed, kShuffleStream, static_cast<std::uint64_t>(epoch)}));
  shuffle_in_place(order, rng);
  return order;
}

Tensor training_input(const ReidSample& sample, const GraftedNetConfig& model, const TrainOptions& opt,
                      std::uint64_t seed, int epoch, std::size_t index) {
  Tensor img = load_sample(sample, model.input_height, model.input_width);
  if (opt.augment_enabled) {
    img = augment(img, opt.augment, derive_seed({seed, kAugmentStream, static_cast<std::uint64_t>(epoch), index}));
  }
  normalize_inplace(img, opt.normalization);
  return img;
}

EpochRecord train_epoch(GraftedNet<float>& net, TrainState& state, const std::vector<ReidSample>& train,
                        const std::map<int, int>& labels, const TrainOptions& opt) {
  if (train.empty()) throw std::invalid_argument("training set is empty");
  opt.sgd.validate();
  const GraftedNetConfig& mc = net.config();
  if (!mc.with_classifiers) throw std::logic_error("training needs the classifier heads");

  std::vector<int> sample_labels(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto it = labels.find(train[i].person_id);
    if (it == labels.end()) throw DatasetError("no label for person id " + std::to_string(train[i].person_id));
    if (it->second < 0 || static_cast<std::size_t>(it->second) >= mc.num_classes) {
      throw DatasetError("label " + std::to_string(it->second) + " of " + train[i].name + " is outside [0, " +
                         std::to_string(mc.num_classes) + ")");
    }
    sample_labels[i] = it->second;
  }

  const auto params = net.parameters();
  for (auto* p : params) p->zero_grad();
  const LearningRates lr = lr_at_epoch(state.epoch, opt.sgd);
  const auto order = epoch_order(train.size(), state.seed, state.epoch);

  EpochRecord rec;
  rec.epoch = state.epoch;
  rec.per_head.assign(net.heads().size(), 0.0);
  for (const auto& [b0, b1] : batch_ranges(train.size(), static_cast<std::size_t>(opt.sgd.batch_size))) {
    std::vector<Tensor> images;
    std::vector<int> batch_labels;
    for (std::size_t k = b0; k < b1; ++k) {
      const std::size_t i = order[k];
      images.push_back(training_input(train[i], mc, opt, state.seed, state.epoch, i));
      batch_labels.push_back(sample_labels[i]);
    }
    const StepLoss l = net.forward_backward(stack_images(images), batch_labels);
    sgd_step<float>(params, lr, opt.sgd);
    ++state.step;
    ++rec.batches;
    rec.images += images.size();
    rec.joint += l.joint;
    rec.accompanying += l.accompanying;
    for (std::size_t k = 0; k < l.per_head.size(); ++k) rec.per_head[k] += l.per_head[k];
  }
  const auto n = static_cast<double>(rec.images);
  rec.joint /= n;
  rec.accompanying /= n;
  for (double& v : rec.per_head) v /= n;
  state.history.push_back(rec);
  ++state.epoch;
  return rec;
}

WeightArchive save_train_state(const TrainState& state, GraftedNet<float>& net) {
  WeightArchive a;
  a.put_scalar("state.epoch", state.epoch);
  a.put_scalar("state.step", state.step);
  a.put_scalar("state.seed", std::bit_cast<std::int64_t>(state.seed));
  const std::size_t e = state.history.size();
  const std::size_t k = net.heads().size();
  if (e > 0) {
    std::vector<double> joint, acc, per_head;
    std::vector<std::int64_t> epochs, batches, images;
    for (const auto& r : state.history) {
      if (r.per_head.size() != k) throw std::logic_error("history head count does not match the model");
      epochs.push_back(r.epoch);
      batches.push_back(static_cast<std::int64_t>(r.batches));
      images.push_back(static_cast<std::int64_t>(r.images));
      joint.push_back(r.joint);
      acc.push_back(r.accompanying);
      per_head.insert(per_head.end(), r.per_head.begin(), r.per_head.end());
    }
    a.put("history.epoch", Shape{e}, std::span<const std::int64_t>(epochs));
    a.put("history.batches", Shape{e}, std::span<const std::int64_t>(batches));
    a.put("history.images", Shape{e}, std::span<const std::int64_t>(images));
    // Losses are kept as the bit patterns of the doubles.
    const auto jb = bits_of(joint), ab = bits_of(acc), hb = bits_of(per_head);
    a.put("history.joint", Shape{e}, std::span<const std::int64_t>(jb));
    a.put("history.accompanying", Shape{e}, std::span<const std::int64_t>(ab));
    a.put("history.per_head", Shape{e, k}, std::span<const std::int64_t>(hb));
  }
  for (auto* p : net.parameters()) a.put("momentum." + p->name, p->momentum);
  return a;
}

TrainState load_train_state(const WeightArchive& archive, GraftedNet<float>& net) {
  TrainState s;
  s.epoch = static_cast<int>(archive.scalar("state.epoch"));
  s.step = archive.scalar("state.step");
  s.seed = std::bit_cast<std::uint64_t>(archive.scalar("state.seed"));
  if (archive.contains("history.epoch")) {
    const auto& ep = archive.at("history.epoch").i64;
    const auto& ba = archive.at("history.batches").i64;
    const auto& im = archive.at("history.images").i64;
    const auto joint = doubles_of(archive.at("history.joint").i64);
    const auto acc = doubles_of(archive.at("history.accompanying").i64);
    const auto& ph = archive.at("history.per_head");
    const auto per_head = doubles_of(ph.i64);
    const std::size_t e = ep.size();
    if (ba.size() != e || im.size() != e || joint.size() != e || acc.size() != e || ph.shape.size() != 2 ||
        ph.shape[0] != e) {
      throw ArchiveError("inconsistent training history in state archive");
    }
    const std::size_t k = ph.shape[1];
    for (std::size_t i = 0; i < e; ++i) {
      EpochRecord r;
      r.epoch = static_cast<int>(ep[i]);
      r.batches = static_cast<std::size_t>(ba[i]);
      r.images = static_cast<std::size_t>(im[i]);
      r.joint = joint[i];
      r.accompanying = acc[i];
      r.per_head.assign(per_head.begin() + static_cast<std::ptrdiff_t>(i * k),
                        per_head.begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
      s.history.push_back(std::move(r));
    }
  }
  const auto params = net.parameters();
  for (auto* p : params) {
    if (!archive.contains("momentum." + p->name)) throw ArchiveError("state archive lacks momentum." + p->name);
  }
  for (auto* p : params) archive.read_into("momentum." + p->name, p->momentum);
  return s;
}

}  // namespace gnet
