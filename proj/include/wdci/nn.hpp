#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "wdci/ops.hpp"

WDCI_NAMESPACE_BEGIN

enum class Init { Zeros, Ones, FanInUniform };

struct NamedParam {
  std::string name;
  Var var;
};

/// Owns every trainable array of a model in creation order. Parameters are
/// drawn from one seeded stream, so an identical seed and construction
/// sequence reproduce identical parameters.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}

  Var create(const std::string& name, Shape shape, Init init, int fan_in = 0);

  const std::vector<NamedParam>& params() const { return params_; }
  std::vector<NamedParam>& params() { return params_; }
  const Var* find(const std::string& name) const;
  /// Total number of scalar parameters.
  std::size_t scalar_count() const;
  void zero_grad();
  void set_trainable(bool on);

 private:
  std::mt19937_64 rng_;
  std::vector<NamedParam> params_;
};

/// Square-kernel "same" convolution with optional grouping.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, int in_channels, int out_channels, int kernel,
         int groups = 1, bool bias = true);

  Var operator()(const Var& x) const;

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }

 private:
  Var weight_;
  Var bias_;
  int in_ = 0, out_ = 0, kernel_ = 1, groups_ = 1;
};

/// Depthwise 3x3 followed by pointwise 1x1.
class DepthwiseSeparable {
 public:
  DepthwiseSeparable() = default;
  DepthwiseSeparable(ParamStore& store, const std::string& name, int channels, int kernel = 3);
  Var operator()(const Var& x) const { return pointwise_(depthwise_(x)); }

 private:
  Conv2d depthwise_;
  Conv2d pointwise_;
};

class LayerNorm2d {
 public:
  LayerNorm2d() = default;
  LayerNorm2d(ParamStore& store, const std::string& name, int channels);
  Var operator()(const Var& x) const { return ops::layer_norm_channels(x, gamma_, beta_); }

 private:
  Var gamma_, beta_;
};

/// 3x3 embedding of an RGB image into `channels` features.
class Embed {
 public:
  Embed() = default;
  Embed(ParamStore& store, const std::string& name, int channels);
  Var operator()(const Var& image) const;

 private:
  Conv2d conv_;
};

/// PixelUnshuffle by `factor` then a 1x1 channel compression.
class SpaceToDepthDown {
 public:
  SpaceToDepthDown() = default;
  SpaceToDepthDown(ParamStore& store, const std::string& name, int in_channels, int factor,
                   int out_channels);
  Var operator()(const Var& x) const;
  int factor() const { return factor_; }

 private:
  int factor_ = 1;
  Conv2d compress_;
};

/// Selective kernel feature fusion: per-channel softmax-weighted sum of
/// same-shape branches, weights predicted from the pooled branch sum.
class Skff {
 public:
  static constexpr int kReduction = 8;

  Skff() = default;
  Skff(ParamStore& store, const std::string& name, int channels, int branches);

  Var operator()(const std::vector<Var>& branches) const;
  /// The per-branch (N, C, 1, 1) weights for the given inputs.
  std::vector<Var> weights(const std::vector<Var>& branches) const;

 private:
  int channels_ = 0;
  int branches_ = 0;
  Conv2d squeeze_;
  std::vector<Conv2d> expand_;
};

/// Splits channels into halves and multiplies them.
Var simple_gate(const Var& x);

/// x scaled per channel by sigmoid(1x1(pool(x))).
class ChannelAttention {
 public:
  ChannelAttention() = default;
  ChannelAttention(ParamStore& store, const std::string& name, int channels);
  Var operator()(const Var& x) const { return ops::mul_channel(x, weights(x)); }
  Var weights(const Var& x) const;

 private:
  Conv2d fc_;
};

/// Cross-attention with channels as tokens. Queries come from `x`, keys and
/// values from `guide`; logits are scaled by 1 / sqrt(H * W).
class CrossAttention {
 public:
  CrossAttention() = default;
  CrossAttention(ParamStore& store, const std::string& name, int channels);

  Var operator()(const Var& guide, const Var& x) const;
  /// (N, 1, C, C) attention matrix whose rows sum to one.
  Var attention(const Var& guide, const Var& x) const;
  Var value(const Var& guide) const { return value_(guide); }

 private:
  Conv2d query_, key_, value_;
};

WDCI_NAMESPACE_END
