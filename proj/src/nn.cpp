#include "wdci/nn.hpp"

#include <cmath>

#include "wdci/errors.hpp"

WDCI_NAMESPACE_BEGIN

Var ParamStore::create(const std::string& name, Shape shape, Init init, int fan_in) {
  if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  Tensor t(shape);
  switch (init) {
    case Init::Zeros:
      break;
    case Init::Ones:
      t.fill(1);
      break;
    case Init::FanInUniform: {
      if (fan_in <= 0) throw ArgumentError("fan-in must be positive for '" + name + "'");
      const real bound = static_cast<real>(1.0 / std::sqrt(static_cast<double>(fan_in)));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (real& v : t.values()) v = static_cast<real>(dist(rng_));
      break;
    }
  }
  params_.push_back({name, Var(std::move(t), true)});
  return params_.back().var;
}

const Var* ParamStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p.var;
  return nullptr;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var.value().numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

void ParamStore::set_trainable(bool on) {
  for (auto& p : params_) p.var.set_requires_grad(on);
}

Conv2d::Conv2d(ParamStore& store, const std::string& name, int in_channels, int out_channels,
               int kernel, int groups, bool bias)
    : in_(in_channels), out_(out_channels), kernel_(kernel), groups_(groups) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw ArgumentError("conv '" + name + "': kernel must be odd, got " + std::to_string(kernel));
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    throw ArgumentError("conv '" + name + "': channels not divisible by groups");
  }
  const int fan_in = in_channels / groups * kernel * kernel;
  weight_ = store.create(name + ".weight", {out_channels, in_channels / groups, kernel, kernel},
                         Init::FanInUniform, fan_in);
  if (bias) bias_ = store.create(name + ".bias", {1, out_channels, 1, 1}, Init::Zeros);
}

Var Conv2d::operator()(const Var& x) const {
  return ops::conv2d(x, weight_, bias_, kernel_ / 2, groups_);
}

DepthwiseSeparable::DepthwiseSeparable(ParamStore& store, const std::string& name, int channels,
                                       int kernel)
    : depthwise_(store, name + ".dw", channels, channels, kernel, channels),
      pointwise_(store, name + ".pw", channels, channels, 1) {}

LayerNorm2d::LayerNorm2d(ParamStore& store, const std::string& name, int channels)
    : gamma_(store.create(name + ".gamma", {1, channels, 1, 1}, Init::Ones)),
      beta_(store.create(name + ".beta", {1, channels, 1, 1}, Init::Zeros)) {}

Embed::Embed(ParamStore& store, const std::string& name, int channels)
    : conv_(store, name, 3, channels, 3) {}

Var Embed::operator()(const Var& image) const {
  if (image.shape().c != 3) {
    throw ShapeError("embed expects 3 input channels, got " + std::to_string(image.shape().c));
  }
  return conv_(image);
}

SpaceToDepthDown::SpaceToDepthDown(ParamStore& store, const std::string& name, int in_channels,
                                   int factor, int out_channels)
    : factor_(factor), compress_(store, name + ".compress", in_channels * factor * factor, out_channels, 1) {
  if (factor < 1) throw ArgumentError("space-to-depth factor must be >= 1");
}

Var SpaceToDepthDown::operator()(const Var& x) const {
  return compress_(factor_ == 1 ? x : ops::pixel_unshuffle(x, factor_));
}

Skff::Skff(ParamStore& store, const std::string& name, int channels, int branches)
    : channels_(channels), branches_(branches) {
  if (branches < 2) throw ArgumentError("skff needs at least two branches");
  const int hidden = std::max(channels / kReduction, 4);
  squeeze_ = Conv2d(store, name + ".squeeze", channels, hidden, 1);
  for (int k = 0; k < branches; ++k) {
    expand_.emplace_back(store, name + ".expand" + std::to_string(k), hidden, channels, 1);
  }
}

std::vector<Var> Skff::weights(const std::vector<Var>& branches) const {
  if (static_cast<int>(branches.size()) != branches_) {
    throw ShapeError("skff built for " + std::to_string(branches_) + " branches, got " +
                     std::to_string(branches.size()));
  }
  for (const auto& b : branches) {
    if (b.shape() != branches.front().shape()) {
      throw ShapeError("skff branch shape mismatch: " + branches.front().shape().str() + " vs " +
                       b.shape().str());
    }
  }
  if (branches.front().shape().c != channels_) {
    throw ShapeError("skff built for " + std::to_string(channels_) + " channels, got " +
                     branches.front().shape().str());
  }
  Var u = branches.front();
  for (std::size_t k = 1; k < branches.size(); ++k) u = ops::add(u, branches[k]);
  const Var z = ops::gelu(squeeze_(ops::global_avg_pool(u)));
  std::vector<Var> logits;
  for (const auto& e : expand_) logits.push_back(e(z));
  const Var w = ops::softmax_groups(ops::concat_channels(logits), branches_);
  std::vector<Var> out;
  for (int k = 0; k < branches_; ++k) out.push_back(ops::slice_channels(w, k * channels_, channels_));
  return out;
}

Var Skff::operator()(const std::vector<Var>& branches) const {
  const auto w = weights(branches);
  Var out = ops::mul_channel(branches[0], w[0]);
  for (std::size_t k = 1; k < branches.size(); ++k) {
    out = ops::add(out, ops::mul_channel(branches[k], w[k]));
  }
  return out;
}

Var simple_gate(const Var& x) {
  const int c = x.shape().c;
  if (c % 2 != 0) throw ShapeError("simple_gate needs an even channel count, got " + std::to_string(c));
  return ops::mul(ops::slice_channels(x, 0, c / 2), ops::slice_channels(x, c / 2, c / 2));
}

ChannelAttention::ChannelAttention(ParamStore& store, const std::string& name, int channels)
    : fc_(store, name + ".fc", channels, channels, 1) {}

Var ChannelAttention::weights(const Var& x) const {
  return ops::sigmoid(fc_(ops::global_avg_pool(x)));
}

CrossAttention::CrossAttention(ParamStore& store, const std::string& name, int channels)
    : query_(store, name + ".q", channels, channels, 1),
      key_(store, name + ".k", channels, channels, 1),
      value_(store, name + ".v", channels, channels, 1) {}

Var CrossAttention::attention(const Var& guide, const Var& x) const {
  if (guide.shape() != x.shape()) {
    throw ShapeError("cross attention: guide " + guide.shape().str() + " vs input " + x.shape().str());
  }
  const real scale = static_cast<real>(1.0 / std::sqrt(static_cast<double>(x.shape().plane())));
  return ops::channel_affinity(query_(x), key_(guide), scale);
}

Var CrossAttention::operator()(const Var& guide, const Var& x) const {
  return ops::channel_aggregate(attention(guide, x), value_(guide));
}

WDCI_NAMESPACE_END
