// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "gnet/blocks.hpp"

#include <optional>
#include <stdexcept>

namespace gnet {

namespace {

constexpr int kPoolKernel = 3;
constexpr int kPoolStride = 2;
constexpr int kPoolPadding = 1;

std::string letter_name(const std::string& stage, std::size_t index) {
  return stage + static_cast<char>('a' + index);
}

std::size_t scaled(std::size_t channels, std::size_t divisor) {
  if (divisor == 0 || channels % divisor != 0) {
    throw std::invalid_argument("width divisor " + std::to_string(divisor) + " does not divide " +
                                std::to_string(channels) + " channels");
  }
  return channels / divisor;
}

std::vector<BlockSpec> bottleneck_stage(const std::string& stage, std::size_t count, std::size_t in, std::size_t mid,
                                        int first_stride) {
  std::vector<BlockSpec> blocks;
  const std::size_t out = 4 * mid;
  for (std::size_t i = 0; i < count; ++i) {
    BottleneckSpec b;
    b.name = letter_name(stage, i);
    b.in_channels = i == 0 ? in : out;
    b.mid_channels = mid;
    b.out_channels = out;
    b.stride = i == 0 ? first_stride : 1;
    b.has_projection = b.stride != 1 || b.in_channels != b.out_channels;
    blocks.emplace_back(b);
  }
  return blocks;
}

std::vector<BlockSpec> fire_stage(const std::string& stage, std::size_t count, std::size_t in, std::size_t squeeze,
                                  std::size_t expand, bool pool_after_first) {
  std::vector<BlockSpec> blocks;
  for (std::size_t i = 0; i < count; ++i) {
    FireSpec f;
    f.name = letter_name(stage, i);
    f.in_channels = i == 0 ? in : 2 * expand;
    f.squeeze_planes = squeeze;
    f.expand_planes = expand;
    f.skip = f.in_channels == 2 * expand;
    f.pool_after = i == 0 && pool_after_first;
    blocks.emplace_back(f);
  }
  return blocks;
}

// Optional 3/2/1 max-pool after a block's activation.
template <typename T>
class TrailingPool {
 public:
  explicit TrailingPool(bool enabled) : enabled_(enabled) {}

  BasicTensor<T> apply(BasicTensor<T> act, Mode mode) {
    if (!enabled_) return act;
    auto r = ops::maxpool2d(act, kPoolKernel, kPoolStride, kPoolPadding);
    if (mode == Mode::Train) {
      argmax_ = std::move(r.argmax);
      act_ = std::move(act);
    }
    return std::move(r.output);
  }

  // The pre-pool activation (or the block output when there is no pool).
  const BasicTensor<T>& activation(const BasicTensor<T>& y) const { return enabled_ ? act_ : y; }

  BasicTensor<T> backward(const BasicTensor<T>& dy) const {
    if (!enabled_) return dy;
    return ops::maxpool2d_backward(dy, argmax_, act_.shape());
  }

  void release() {
    act_ = {};
    argmax_.clear();
  }

 private:
  bool enabled_;
  BasicTensor<T> act_;
  std::vector<std::uint32_t> argmax_;
};

template <typename T>
void add_inplace(BasicTensor<T>& acc, const BasicTensor<T>& x) {
  acc += x;
}

template <typename T>
class Stem final : public Block<T> {
 public:
  Stem(const StemSpec& s, const std::string& prefix, LrGroup group)
      : name_(s.name),
        conv_(prefix + "." + s.name + ".conv", s.in_channels, s.out_channels, s.kernel,
              ops::ConvGeometry{1, s.stride, static_cast<int>(s.kernel / 2)}, Activation::Relu, group),
        pool_(s.pool_after) {}

  const std::string& name() const override { return name_; }

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override {
    return pool_.apply(conv_.forward(x, mode), mode);
  }

  BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& y, const BasicTensor<T>& dy,
                          bool need_input_grad) override {
    BasicTensor<T> dact = pool_.backward(dy);
    BasicTensor<T> dx = conv_.backward(x, pool_.activation(y), dact, need_input_grad);
    pool_.release();
    return dx;
  }

  void collect(ParameterSink<T>& sink) override { conv_.collect(sink); }

 private:
  std::string name_;
  ConvBn<T> conv_;
  TrailingPool<T> pool_;
};

template <typename T>
class Bottleneck final : public Block<T> {
 public:
  Bottleneck(const BottleneckSpec& s, const std::string& prefix, LrGroup group)
      : name_(s.name),
        conv1_(prefix + "." + s.name + ".conv1", s.in_channels, s.mid_channels, 1, {}, Activation::Relu, group),
        conv2_(prefix + "." + s.name + ".conv2", s.mid_channels, s.mid_channels, 3, ops::ConvGeometry{1, s.stride, 1},
               Activation::Relu, group),
        conv3_(prefix + "." + s.name + ".conv3", s.mid_channels, s.out_channels, 1, {},
               Activation::None, group),
        pool_(s.pool_after) {
    s.validate();
    if (s.has_projection) {
      shortcut_.emplace(prefix + "." + s.name + ".shortcut", s.in_channels, s.out_channels, 1,
                        ops::ConvGeometry{1, s.stride, 0}, Activation::None, group);
    }
  }

  const std::string& name() const override { return name_; }

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override {
    BasicTensor<T> h1 = conv1_.forward(x, mode);
    BasicTensor<T> h2 = conv2_.forward(h1, mode);
    BasicTensor<T> sum = conv3_.forward(h2, mode);
    if (shortcut_) {
      add_inplace(sum, shortcut_->forward(x, mode));
    } else {
      if (sum.shape() != x.shape()) {
        throw DimensionError("bottleneck " + name_, "shortcut",
                             shape_to_string(x.shape()) + " cannot be added to " + shape_to_string(sum.shape()));
      }
      add_inplace(sum, x);
    }
    ops::leaky_relu_inplace(sum, T(0));
    if (mode == Mode::Train) {
      h1_ = std::move(h1);
      h2_ = std::move(h2);
    }
    return pool_.apply(std::move(sum), mode);
  }

  BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& y, const BasicTensor<T>& dy,
                          bool need_input_grad) override {
    const BasicTensor<T> d = ops::relu_backward(pool_.backward(dy), pool_.activation(y));
    BasicTensor<T> dh2 = conv3_.backward(h2_, {}, d);
    BasicTensor<T> dh1 = conv2_.backward(h1_, h2_, dh2);
    BasicTensor<T> dx = conv1_.backward(x, h1_, dh1, need_input_grad);
    if (need_input_grad) {
      if (shortcut_) {
        dx += shortcut_->backward(x, {}, d, true);
      } else {
        dx += d;
      }
    } else if (shortcut_) {
      shortcut_->backward(x, {}, d, false);
    }
    h1_ = {};
    h2_ = {};
    pool_.release();
    return dx;
  }

  void collect(ParameterSink<T>& sink) override {
    conv1_.collect(sink);
    conv2_.collect(sink);
    conv3_.collect(sink);
    if (shortcut_) shortcut_->collect(sink);
  }

 private:
  std::string name_;
  ConvBn<T> conv1_, conv2_, conv3_;
  std::optional<ConvBn<T>> shortcut_;
  TrailingPool<T> pool_;
  BasicTensor<T> h1_, h2_;
};

template <typename T>
class Fire final : public Block<T> {
 public:
  Fire(const FireSpec& s, const std::string& prefix, LrGroup group)
      : name_(s.name),
        expand_(s.expand_planes),
        skip_(s.skip),
        squeeze_(prefix + "." + s.name + ".squeeze", s.in_channels, s.squeeze_planes, 1, {}, Activation::Relu, group),
        expand1x1_(prefix + "." + s.name + ".expand1x1", s.squeeze_planes, s.expand_planes, 1, {}, group),
        expand3x3_(prefix + "." + s.name + ".expand3x3", s.squeeze_planes, s.expand_planes, 3,
                   ops::ConvGeometry{1, 1, 1}, group),
        bn_(prefix + "." + s.name + ".expand_bn", 2 * s.expand_planes, group),
        pool_(s.pool_after) {
    s.validate();
  }

  const std::string& name() const override { return name_; }

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override {
    BasicTensor<T> s = squeeze_.forward(x, mode);
    BasicTensor<T> cat = ops::concat_channels(expand1x1_.forward(s), expand3x3_.forward(s));
    BasicTensor<T> out = bn_.forward(cat, mode);
    if (skip_) {
      if (out.shape() != x.shape()) {
        throw DimensionError("fire " + name_, "skip",
                             shape_to_string(x.shape()) + " cannot be added to " + shape_to_string(out.shape()));
      }
      add_inplace(out, x);
    }
    ops::leaky_relu_inplace(out, T(0));
    if (mode == Mode::Train) {
      s_ = std::move(s);
      cat_ = std::move(cat);
    }
    return pool_.apply(std::move(out), mode);
  }

  BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& y, const BasicTensor<T>& dy,
                          bool need_input_grad) override {
    const BasicTensor<T> d = ops::relu_backward(pool_.backward(dy), pool_.activation(y));
    const BasicTensor<T> dcat = bn_.backward(cat_, d);
    BasicTensor<T> ds = expand1x1_.backward(s_, ops::slice_channels(dcat, 0, expand_));
    ds += expand3x3_.backward(s_, ops::slice_channels(dcat, expand_, 2 * expand_));
    BasicTensor<T> dx = squeeze_.backward(x, s_, ds, need_input_grad);
    if (need_input_grad && skip_) dx += d;
    s_ = {};
    cat_ = {};
    pool_.release();
    return dx;
  }

  void collect(ParameterSink<T>& sink) override {
    squeeze_.collect(sink);
    expand1x1_.collect(sink);
    expand3x3_.collect(sink);
    bn_.collect(sink);
  }

 private:
  std::string name_;
  std::size_t expand_;
  bool skip_;
  ConvBn<T> squeeze_;
  Conv2d<T> expand1x1_;
  Conv2d<T> expand3x3_;
  BatchNorm2d<T> bn_;
  TrailingPool<T> pool_;
  BasicTensor<T> s_, cat_;
};

}  // namespace

// ---------------------------------------------------------------- specs

void BottleneckSpec::validate() const {
  if (in_channels == 0 || mid_channels == 0 || stride < 1) {
    throw std::invalid_argument("bottleneck " + name + ": channels and stride must be positive");
  }
  if (out_channels != 4 * mid_channels) {
    throw std::invalid_argument("bottleneck " + name + ": out_channels must equal 4·mid_channels");
  }
  if (has_projection != (stride != 1 || in_channels != out_channels)) {
    throw std::invalid_argument("bottleneck " + name +
                                ": projection required exactly when stride != 1 or in != out channels");
  }
}

void FireSpec::validate() const {
  if (in_channels == 0 || squeeze_planes == 0 || expand_planes == 0) {
    throw std::invalid_argument("fire " + name + ": channel counts must be positive");
  }
  if (skip != (in_channels == 2 * expand_planes)) {
    throw DimensionError("fire " + name, "skip",
                         skip ? "skip requested but input has " + std::to_string(in_channels) +
                                    " channels and output " + std::to_string(2 * expand_planes)
                              : "equal input/output channels must use the skip connection");
  }
}

void StageSpec::validate() const {
  for (std::size_t i = 1; i < blocks.size(); ++i) {
    if (gnet::out_channels(blocks[i - 1]) != gnet::in_channels(blocks[i])) {
      throw DimensionError("stage " + name, "channels",
                           block_name(blocks[i - 1]) + " emits " + std::to_string(gnet::out_channels(blocks[i - 1])) +
                               " channels but " + block_name(blocks[i]) + " expects " +
                               std::to_string(gnet::in_channels(blocks[i])));
    }
  }
}

std::size_t in_channels(const BlockSpec& spec) {
  return std::visit([](const auto& s) { return s.in_channels; }, spec);
}

std::size_t out_channels(const BlockSpec& spec) {
  struct Visitor {
    std::size_t operator()(const StemSpec& s) const { return s.out_channels; }
    std::size_t operator()(const BottleneckSpec& s) const { return s.out_channels; }
    std::size_t operator()(const FireSpec& s) const { return s.out_channels(); }
  };
  return std::visit(Visitor{}, spec);
}

const std::string& block_name(const BlockSpec& spec) {
  return std::visit([](const auto& s) -> const std::string& { return s.name; }, spec);
}

std::size_t param_count(const StemSpec& s) {
  return s.in_channels * s.out_channels * s.kernel * s.kernel + 2 * s.out_channels;
}

std::size_t param_count(const BottleneckSpec& s) {
  const std::size_t i = s.in_channels, m = s.mid_channels, o = s.out_channels;
  std::size_t n = i * m + 2 * m + 9 * m * m + 2 * m + m * o + 2 * o;
  if (s.has_projection) n += i * o + 2 * o;
  return n;
}

std::size_t param_count(const FireSpec& s) {
  const std::size_t i = s.in_channels, q = s.squeeze_planes, e = s.expand_planes;
  return i * q + 2 * q + q * e + 9 * q * e + 2 * (2 * e);
}

std::size_t param_count(const BlockSpec& spec) {
  return std::visit([](const auto& s) { return param_count(s); }, spec);
}

std::size_t param_count(const std::vector<StageSpec>& stages) {
  std::size_t n = 0;
  for (const auto& stage : stages) {
    for (const auto& b : stage.blocks) n += param_count(b);
  }
  return n;
}

std::vector<StageSpec> make_rootstock(const TrunkOptions& opt) {
  const std::size_t w = opt.width_divisor;
  StemSpec stem;
  stem.name = "res_conv1";
  stem.out_channels = scaled(64, w);
  std::vector<StageSpec> stages;
  stages.push_back({"res_conv1", {stem}});
  stages.push_back({"res_conv2", bottleneck_stage("res_conv2", 3, scaled(64, w), scaled(64, w), 1)});
  stages.push_back({"res_conv3", bottleneck_stage("res_conv3", 4, scaled(256, w), scaled(128, w), 2)});
  for (const auto& s : stages) s.validate();
  return stages;
}

std::vector<StageSpec> make_scion(const TrunkOptions& opt) {
  const std::size_t w = opt.width_divisor;
  std::vector<StageSpec> stages;
  stages.push_back({"fire_conv4", fire_stage("fire_conv4", 6, scaled(512, w), scaled(64, w), scaled(256, w),
                                             opt.scion_pooling)});
  stages.push_back({"fire_conv5", fire_stage("fire_conv5", 3, scaled(512, w), scaled(128, w), scaled(384, w),
                                             opt.scion_pooling)});
  for (const auto& s : stages) s.validate();
  return stages;
}

std::vector<StageSpec> make_accompanying(const TrunkOptions& opt) {
  const std::size_t w = opt.width_divisor;
  std::vector<StageSpec> stages;
  stages.push_back({"res_conv4", bottleneck_stage("res_conv4", 6, scaled(512, w), scaled(256, w), 2)});
  stages.push_back({"res_conv5", bottleneck_stage("res_conv5", 3, scaled(1024, w), scaled(512, w), 2)});
  for (const auto& s : stages) s.validate();
  return stages;
}

// ---------------------------------------------------------------- blocks

template <typename T>
std::unique_ptr<Block<T>> make_block(const BlockSpec& spec, const std::string& prefix, LrGroup group) {
  struct Visitor {
    const std::string& prefix;
    LrGroup group;
    std::unique_ptr<Block<T>> operator()(const StemSpec& s) const { return std::make_unique<Stem<T>>(s, prefix, group); }
    std::unique_ptr<Block<T>> operator()(const BottleneckSpec& s) const {
      return std::make_unique<Bottleneck<T>>(s, prefix, group);
    }
    std::unique_ptr<Block<T>> operator()(const FireSpec& s) const { return std::make_unique<Fire<T>>(s, prefix, group); }
  };
  return std::visit(Visitor{prefix, group}, spec);
}

template <typename T>
Trunk<T>::Trunk(const std::vector<StageSpec>& stages, const std::string& prefix, LrGroup group) {
  for (const auto& stage : stages) {
    stage.validate();
    for (const auto& b : stage.blocks) blocks_.push_back(make_block<T>(b, prefix, group));
  }
  if (blocks_.empty()) throw std::invalid_argument("trunk " + prefix + " has no blocks");
  retained_.assign(blocks_.size(), false);
  retained_.back() = true;
  outputs_.resize(blocks_.size());
}

template <typename T>
std::size_t Trunk<T>::index_of(const std::string& block) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i]->name() == block) return i;
  }
  throw std::out_of_range("no block named " + block);
}

template <typename T>
void Trunk<T>::retain(const std::string& block) {
  retained_[index_of(block)] = true;
}

template <typename T>
const BasicTensor<T>& Trunk<T>::forward(const BasicTensor<T>& x, Mode mode) {
  const BasicTensor<T>* cur = &x;
  BasicTensor<T> scratch;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    BasicTensor<T> y = blocks_[i]->forward(*cur, mode);
    if (mode == Mode::Train || retained_[i]) {
      outputs_[i] = std::move(y);
      cur = &outputs_[i];
    } else {
      outputs_[i] = {};
      scratch = std::move(y);
      cur = &scratch;
    }
  }
  return outputs_.back();
}

template <typename T>
const BasicTensor<T>& Trunk<T>::output(const std::string& block) const {
  const auto& t = outputs_[index_of(block)];
  if (t.empty()) throw std::logic_error("output of " + block + " was not retained");
  return t;
}

template <typename T>
BasicTensor<T> Trunk<T>::backward(const BasicTensor<T>& x, const std::map<std::string, BasicTensor<T>>& grads,
                                  bool need_input_grad) {
  for (const auto& [name, g] : grads) (void)index_of(name);
  BasicTensor<T> d;
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    if (auto it = grads.find(blocks_[i]->name()); it != grads.end()) {
      if (d.empty()) {
        d = it->second;
      } else {
        d += it->second;
      }
    }
    if (d.empty()) d = BasicTensor<T>::zeros(outputs_[i].shape());
    const BasicTensor<T>& input = i == 0 ? x : outputs_[i - 1];
    d = blocks_[i]->backward(input, outputs_[i], d, i > 0 || need_input_grad);
  }
  release();
  return d;
}

template <typename T>
void Trunk<T>::collect(ParameterSink<T>& sink) {
  for (auto& b : blocks_) b->collect(sink);
}

template <typename T>
void Trunk<T>::release() {
  for (auto& o : outputs_) o = {};
}

template std::unique_ptr<Block<float>> make_block(const BlockSpec&, const std::string&, LrGroup);
template std::unique_ptr<Block<double>> make_block(const BlockSpec&, const std::string&, LrGroup);
template class Trunk<float>;
template class Trunk<double>;

}  // namespace gnet
