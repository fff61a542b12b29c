// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "gnet/model.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

namespace gnet {

namespace {

constexpr const char* kFinalTap = "fire_conv5c";

std::string last_block_name(const std::vector<StageSpec>& stages) { return block_name(stages.back().blocks.back()); }

std::size_t pooled_extent(std::size_t e) { return ops::conv_output_extent(e, 3, 2, 1, "pool"); }

// Extent after the rootstock: 7×7/2 stem conv, 3/2/1 pool, stride-2 res_conv3a.
std::size_t rootstock_extent(std::size_t e) {
  e = ops::conv_output_extent(e, 7, 2, 3, "stem");
  e = pooled_extent(e);
  return ops::conv_output_extent(e, 3, 2, 1, "res_conv3a");
}

}  // namespace

bool in_scope(std::string_view name, std::string_view scope) {
  if (scope.empty()) return true;
  return name.starts_with(scope) && (name.size() == scope.size() || name[scope.size()] == '.');
}

std::string format_millions(std::size_t count, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*fM", decimals, static_cast<double>(count) / 1e6);
  return buf;
}

// ---------------------------------------------------------------- config

std::size_t GraftedNetConfig::head_count() const { return heads().size(); }

std::size_t GraftedNetConfig::tap_channels(const std::string& tap) const {
  for (const auto& stage : make_scion(trunk_options())) {
    for (const auto& b : stage.blocks) {
      if (block_name(b) == tap) return out_channels(b);
    }
  }
  throw std::invalid_argument("unknown tap point " + tap);
}

std::pair<std::size_t, std::size_t> GraftedNetConfig::tap_extent(const std::string& tap) const {
  std::size_t h = rootstock_extent(input_height);
  std::size_t w = rootstock_extent(input_width);
  for (const auto& stage : make_scion(trunk_options())) {
    for (const auto& b : stage.blocks) {
      if (std::get<FireSpec>(b).pool_after) {
        h = pooled_extent(h);
        w = pooled_extent(w);
      }
      if (block_name(b) == tap) return {h, w};
    }
  }
  throw std::invalid_argument("unknown tap point " + tap);
}

void GraftedNetConfig::validate() const {
  if (input_height == 0 || input_width == 0) throw std::invalid_argument("input size must be positive");
  if (width_divisor == 0) throw std::invalid_argument("width_divisor must be positive");
  if (reduced_dim == 0) throw std::invalid_argument("reduced_dim must be positive");
  if (reduction_groups < 1) throw std::invalid_argument("reduction_groups must be >= 1");
  if (with_classifiers && num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
  if (with_accompanying && !with_classifiers) {
    throw std::invalid_argument("the accompanying branch is a training component and needs classifiers");
  }
  make_rootstock(trunk_options());  // channel divisibility
  const auto specs = heads();
  if (specs.empty()) throw std::invalid_argument("configuration has no feature heads");
  std::set<std::string> seen;
  for (const auto& tap : level_taps) {
    if (!seen.insert(tap).second) throw std::invalid_argument("level tap " + tap + " listed twice");
  }
  const auto g = static_cast<std::size_t>(reduction_groups);
  if (reduced_dim % g != 0) {
    throw std::invalid_argument("reduction_groups " + std::to_string(g) + " does not divide reduced_dim " +
                                std::to_string(reduced_dim));
  }
  for (const auto& h : specs) {
    const std::size_t c = tap_channels(h.tap);
    if (c % g != 0) {
      throw std::invalid_argument("reduction_groups " + std::to_string(g) + " does not divide the " +
                                  std::to_string(c) + " channels of " + h.tap);
    }
  }
  const std::size_t height = tap_extent(kFinalTap).first;
  for (std::size_t p : part_scheme) {
    if (p == 0 || p > height) {
      throw std::invalid_argument("part count " + std::to_string(p) + " does not fit the " + std::to_string(height) +
                                  "-row final map");
    }
    if (!allow_uneven_parts && height % p != 0) {
      throw std::invalid_argument("final map height " + std::to_string(height) + " is not divisible by part count " +
                                  std::to_string(p));
    }
  }
}

// ---------------------------------------------------------------- network

template <typename T>
struct GraftedNet<T>::Impl {
  Trunk<T> rootstock;
  Trunk<T> scion;
  std::string rootstock_last;
  std::vector<ReductionHead<T>> reductions;
  std::vector<Linear<T>> classifiers;
  std::optional<Trunk<T>> accompanying;
  std::string accompanying_last;
  std::optional<Linear<T>> acc_classifier;
  std::vector<BasicTensor<T>> pooled;  // per head, train mode

  explicit Impl(const GraftedNetConfig& c)
      : rootstock(make_rootstock(c.trunk_options()), "rootstock", LrGroup::Pretrained),
        scion(make_scion(c.trunk_options()), "scion", LrGroup::Fresh),
        rootstock_last(last_block_name(make_rootstock(c.trunk_options()))) {}

  void release() {
    rootstock.release();
    scion.release();
    if (accompanying) accompanying->release();
    pooled.clear();
  }
};

template <typename T>
GraftedNet<T>::GraftedNet(GraftedNetConfig config) : config_(std::move(config)) {
  config_.validate();
  heads_ = config_.heads();
  impl_ = std::make_unique<Impl>(config_);
  for (const auto& tap : config_.level_taps) impl_->scion.retain(tap);
  impl_->reductions.reserve(heads_.size());
  for (const auto& h : heads_) {
    impl_->reductions.emplace_back("reduction." + h.name, config_.tap_channels(h.tap), config_.reduced_dim,
                                   config_.reduction_groups);
  }
  if (config_.with_classifiers) {
    impl_->classifiers.reserve(heads_.size());
    for (const auto& h : heads_) {
      impl_->classifiers.emplace_back("objective." + h.name, config_.reduced_dim, config_.num_classes, LrGroup::Fresh);
    }
  }
  if (config_.with_accompanying) {
    const auto stages = make_accompanying(config_.trunk_options());
    impl_->accompanying.emplace(stages, "accompanying", LrGroup::Pretrained);
    impl_->accompanying_last = last_block_name(stages);
    impl_->acc_classifier.emplace("objective.acc", out_channels(stages.back().blocks.back()), config_.num_classes,
                                  LrGroup::Fresh);
  }
}

template <typename T>
GraftedNet<T>::~GraftedNet() = default;
template <typename T>
GraftedNet<T>::GraftedNet(GraftedNet&&) noexcept = default;
template <typename T>
GraftedNet<T>& GraftedNet<T>::operator=(GraftedNet&&) noexcept = default;

template <typename T>
ParameterSink<T> GraftedNet<T>::sink() {
  ParameterSink<T> s;
  impl_->rootstock.collect(s);
  impl_->scion.collect(s);
  for (auto& r : impl_->reductions) r.collect(s);
  for (auto& c : impl_->classifiers) c.collect(s);
  if (impl_->accompanying) impl_->accompanying->collect(s);
  if (impl_->acc_classifier) impl_->acc_classifier->collect(s);
  return s;
}

template <typename T>
std::size_t GraftedNet<T>::count_params(std::string_view scope) {
  std::size_t n = 0;
  for (const auto* p : sink().parameters) {
    if (in_scope(p->name, scope)) n += p->value.size();
  }
  return n;
}

template <typename T>
void GraftedNet<T>::init_params(std::uint64_t seed, const WeightArchive* pretrained) {
  ParameterSink<T> s = sink();
  std::mt19937_64 rng(seed);
  initialize_parameters<T>(s.parameters, rng);
  reset_buffers<T>(s.buffers);
  if (!pretrained) return;

  const auto pretrained_scope = [](const std::string& name) {
    return in_scope(name, "rootstock") || in_scope(name, "accompanying");
  };
  std::set<std::string> expected;
  for (const auto* p : s.parameters)
    if (pretrained_scope(p->name)) expected.insert(p->name);
  for (const auto& b : s.buffers)
    if (pretrained_scope(b.name)) expected.insert(b.name);
  for (const auto& name : pretrained->names()) {
    if (!expected.count(name)) throw ArchiveError("pretrained archive has unexpected tensor " + name);
  }
  for (const auto& name : expected) {
    if (!pretrained->contains(name)) throw ArchiveError("pretrained archive lacks tensor " + name);
  }
  // Validate every shape before touching the model so a bad archive leaves
  // no partial load behind.
  for (const auto* p : s.parameters)
    if (pretrained_scope(p->name) && pretrained->at(p->name).shape != p->value.shape())
      throw ArchiveError("pretrained tensor " + p->name + " has shape " +
                         shape_to_string(pretrained->at(p->name).shape) + ", expected " +
                         shape_to_string(p->value.shape()));
  for (const auto& b : s.buffers)
    if (pretrained_scope(b.name) && pretrained->at(b.name).shape != b.tensor->shape())
      throw ArchiveError("pretrained tensor " + b.name + " has the wrong shape");
  for (auto* p : s.parameters)
    if (pretrained_scope(p->name)) pretrained->read_into(p->name, p->value);
  for (auto& b : s.buffers)
    if (pretrained_scope(b.name)) pretrained->read_into(b.name, *b.tensor);
}

template <typename T>
WeightArchive GraftedNet<T>::save_weights() {
  WeightArchive a;
  ParameterSink<T> s = sink();
  for (const auto* p : s.parameters) a.put(p->name, p->value);
  for (const auto& b : s.buffers) a.put(b.name, *b.tensor);
  return a;
}

template <typename T>
void GraftedNet<T>::load_weights(const WeightArchive& archive) {
  ParameterSink<T> s = sink();
  std::set<std::string> expected;
  for (const auto* p : s.parameters) expected.insert(p->name);
  for (const auto& b : s.buffers) expected.insert(b.name);
  for (const auto& name : archive.names()) {
    if (!expected.count(name)) throw ArchiveError("archive tensor " + name + " does not exist in this model");
  }
  for (const auto& name : expected) {
    if (!archive.contains(name)) throw ArchiveError("archive lacks tensor " + name);
  }
  for (const auto* p : s.parameters) {
    const auto& e = archive.at(p->name);
    if (e.dtype != DType::F32 || e.shape != p->value.shape()) {
      throw ArchiveError("archive tensor " + p->name + " has shape " + shape_to_string(e.shape) + ", expected " +
                         shape_to_string(p->value.shape()));
    }
  }
  for (const auto& b : s.buffers) {
    const auto& e = archive.at(b.name);
    if (e.dtype != DType::F32 || e.shape != b.tensor->shape()) {
      throw ArchiveError("archive tensor " + b.name + " has the wrong shape");
    }
  }
  for (auto* p : s.parameters) archive.read_into(p->name, p->value);
  for (auto& b : s.buffers) archive.read_into(b.name, *b.tensor);
}

template <typename T>
TapSet<T> GraftedNet<T>::forward_taps(const BasicTensor<T>& images, Mode mode) {
  require_rank4(images, "forward_taps");
  if (images.dim(1) != 3 || images.dim(2) != config_.input_height || images.dim(3) != config_.input_width) {
    throw DimensionError("forward_taps", "input",
                         "expected N×3×" + std::to_string(config_.input_height) + "×" +
                             std::to_string(config_.input_width) + ", got " + shape_to_string(images.shape()));
  }
  Impl& m = *impl_;
  const BasicTensor<T>& root = m.rootstock.forward(images, mode);
  m.scion.forward(root, mode);
  TapSet<T> taps;
  for (const auto& h : heads_) {
    if (!taps.maps.count(h.tap)) taps.maps.emplace(h.tap, m.scion.output(h.tap));
  }
  if (mode == Mode::Train && m.accompanying) {
    taps.accompanying = ops::global_avg_pool(m.accompanying->forward(root, mode));
  }
  return taps;
}

template <typename T>
std::vector<HeadOutput<T>> GraftedNet<T>::compute_heads(const TapSet<T>& taps, Mode mode) {
  Impl& m = *impl_;
  std::vector<HeadOutput<T>> out;
  out.reserve(heads_.size());
  if (mode == Mode::Train) m.pooled.assign(heads_.size(), {});
  for (std::size_t k = 0; k < heads_.size(); ++k) {
    const HeadSpec& h = heads_[k];
    const auto it = taps.maps.find(h.tap);
    if (it == taps.maps.end()) throw std::invalid_argument("tap set lacks " + h.tap);
    BasicTensor<T> pooled;
    if (h.parts == 0) {
      pooled = ops::global_avg_pool(it->second);
    } else {
      const auto [r0, r1] = stripe_rows(it->second.dim(2), h.parts, h.stripe);
      pooled = ops::avg_pool_region(it->second, r0, r1);
    }
    HeadOutput<T> o;
    o.name = h.name;
    o.reduced = m.reductions[k].forward(pooled, mode);
    if (mode == Mode::Train && !m.classifiers.empty()) o.logits = m.classifiers[k].forward(o.reduced);
    if (mode == Mode::Train) m.pooled[k] = std::move(pooled);
    out.push_back(std::move(o));
  }
  return out;
}

template <typename T>
BasicTensor<T> GraftedNet<T>::accompanying_logits(const TapSet<T>& taps) {
  if (!impl_->acc_classifier) throw std::logic_error("model has no accompanying branch");
  if (taps.accompanying.empty()) throw std::logic_error("accompanying feature is only produced in train mode");
  return impl_->acc_classifier->forward(taps.accompanying);
}

template <typename T>
void GraftedNet<T>::backward(const BasicTensor<T>& images, const TapSet<T>& taps,
                             const std::vector<HeadOutput<T>>& heads, std::span<const BasicTensor<T>> grad_logits,
                             const BasicTensor<T>* grad_acc_logits) {
  Impl& m = *impl_;
  if (m.classifiers.empty()) throw std::logic_error("backward needs the classifier heads");
  if (heads.size() != heads_.size() || grad_logits.size() != heads_.size() || m.pooled.size() != heads_.size()) {
    throw std::logic_error("backward needs one train-mode output and logit gradient per head");
  }
  std::map<std::string, BasicTensor<T>> tap_grads;
  for (const auto& [name, t] : taps.maps) tap_grads.emplace(name, BasicTensor<T>::zeros_like(t));
  for (std::size_t k = 0; k < heads_.size(); ++k) {
    const HeadSpec& h = heads_[k];
    const BasicTensor<T> dreduced = m.classifiers[k].backward(heads[k].reduced, grad_logits[k]);
    const BasicTensor<T> dpooled = m.reductions[k].backward(m.pooled[k], heads[k].reduced, dreduced);
    BasicTensor<T>& dtap = tap_grads.at(h.tap);
    if (h.parts == 0) {
      dtap += ops::global_avg_pool_backward(dpooled, dtap.shape());
    } else {
      const auto [r0, r1] = stripe_rows(dtap.dim(2), h.parts, h.stripe);
      ops::avg_pool_region_backward(dpooled, r0, r1, dtap);
    }
  }
  const BasicTensor<T>& root = m.rootstock.output();
  BasicTensor<T> droot = m.scion.backward(root, tap_grads, true);
  if (m.accompanying) {
    if (grad_acc_logits) {
      const BasicTensor<T> dfeat = m.acc_classifier->backward(taps.accompanying, *grad_acc_logits);
      std::map<std::string, BasicTensor<T>> g;
      g.emplace(m.accompanying_last, ops::global_avg_pool_backward(dfeat, m.accompanying->output().shape()));
      droot += m.accompanying->backward(root, g, true);
    } else {
      m.accompanying->release();
    }
  }
  std::map<std::string, BasicTensor<T>> g;
  g.emplace(m.rootstock_last, std::move(droot));
  m.rootstock.backward(images, g, false);
  m.pooled.clear();
}

template <typename T>
StepLoss GraftedNet<T>::forward_backward(const BasicTensor<T>& images, std::span<const int> labels) {
  if (labels.size() != images.dim(0)) throw std::invalid_argument("one label per image required");
  TapSet<T> taps = forward_taps(images, Mode::Train);
  std::vector<HeadOutput<T>> heads = compute_heads(taps, Mode::Train);
  JointLoss<T> jl = joint_loss<T>(heads, labels);
  StepLoss out;
  out.joint = jl.total;
  out.per_head = jl.per_head;
  std::optional<ops::SoftmaxLoss<T>> al;
  if (impl_->accompanying) {
    al = accompanying_loss(accompanying_logits(taps), labels);
    out.accompanying = al->loss;
  }
  out.total = out.joint + out.accompanying;
  backward(images, taps, heads, jl.grad_logits, al ? &al->grad_logits : nullptr);
  return out;
}

template <typename T>
StepLoss GraftedNet<T>::loss(const BasicTensor<T>& images, std::span<const int> labels) {
  if (labels.size() != images.dim(0)) throw std::invalid_argument("one label per image required");
  TapSet<T> taps = forward_taps(images, Mode::Train);
  std::vector<HeadOutput<T>> heads = compute_heads(taps, Mode::Train);
  JointLoss<T> jl = joint_loss<T>(heads, labels);
  StepLoss out;
  out.joint = jl.total;
  out.per_head = jl.per_head;
  if (impl_->accompanying) out.accompanying = accompanying_loss(accompanying_logits(taps), labels).loss;
  out.total = out.joint + out.accompanying;
  impl_->release();
  return out;
}

template <typename T>
BasicTensor<T> GraftedNet<T>::embed(const BasicTensor<T>& images) {
  TapSet<T> taps = forward_taps(images, Mode::Eval);
  std::vector<HeadOutput<T>> heads = compute_heads(taps, Mode::Eval);
  return concat_feature<T>(heads);
}

template <typename T>
void GraftedNet<T>::strip_for_inference() {
  impl_->classifiers.clear();
  impl_->accompanying.reset();
  impl_->acc_classifier.reset();
  impl_->release();
  config_.with_classifiers = false;
  config_.with_accompanying = false;
}

template class GraftedNet<float>;
template class GraftedNet<double>;

}  // namespace gnet
