#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wdci/nn.hpp"

WDCI_NAMESPACE_BEGIN

/// Structural configuration. Two networks with equal hash() have
/// interchangeable parameter sets.
struct NetConfig {
  int channels = 16;
  int levels = 3;
  int large_kernel = 7;
  int max_disparity = 0;  // 0 = attend across the full row
  bool use_hf_cim = true;
  bool use_dtem = true;
  bool use_iam = true;
  bool use_downsample_fusion = true;
  bool global_residual = true;

  /// Detail-band width at level (1-based).
  int detail_width(int level) const { return channels << (level - 1); }
  /// Width of the fused low-frequency feature at level (1-based).
  int feature_width(int level) const {
    return level < levels ? channels << level : detail_width(levels);
  }

  std::string canonical() const;
  std::uint64_t hash() const;
  void validate() const;
};

/// Vertical, horizontal and diagonal detail features of one view at one level.
struct HighFreqTriplet {
  Var v;
  Var h;
  Var d;
};

/// Per-row attention stacks, each (N, H, W_query, W_key).
struct ParallaxAttention {
  Var t_l2r;
  Var t_r2l;
};

struct NetOutput {
  Var enhanced_left;
  Var enhanced_right;
  Var lowfreq_left;   // 3-channel output of the low-frequency branch at 1 / 2^levels
  Var lowfreq_right;
  std::vector<ParallaxAttention> attention;  // one per level when interaction is on
};

/// Illumination adjustment: a large-kernel gated residual stage followed by
/// a channel-attention gated residual stage.
class Iam {
 public:
  Iam() = default;
  Iam(ParamStore& store, const std::string& name, int channels, int large_kernel);
  Var operator()(const Var& x) const;

 private:
  Conv2d spatial_in_, spatial_dw_, spatial_out_;
  Conv2d channel_in_, channel_out_;
  ChannelAttention attention_;
};

/// Cross-view interaction on detail bands. Parallax attention is estimated
/// from the fused bands of each view and used to exchange all three bands.
class HfCim {
 public:
  struct Result {
    HighFreqTriplet left;
    HighFreqTriplet right;
    ParallaxAttention attention;
  };

  HfCim() = default;
  HfCim(ParamStore& store, const std::string& name, int channels, int max_disparity);
  Result operator()(const HighFreqTriplet& left, const HighFreqTriplet& right) const;

 private:
  Var project(const HighFreqTriplet& t) const;

  Skff fuse_;
  LayerNorm2d norm_;
  Conv2d linear_;
  int max_disparity_ = 0;
};

/// Detail and texture enhancement: fused-guide cross attention for V and H,
/// then V/H-guided cross attention for D.
class Dtem {
 public:
  struct Trace {
    Var guide;
    Var v_mid, h_mid;
    Var d_from_v, d_from_h;
    Var d_mid;
    HighFreqTriplet out;
  };

  Dtem() = default;
  Dtem(ParamStore& store, const std::string& name, int channels);
  HighFreqTriplet operator()(const HighFreqTriplet& t) const { return trace(t).out; }
  Trace trace(const HighFreqTriplet& t) const;

 private:
  DepthwiseSeparable in_v_, in_h_, in_d_;
  Skff fuse_;
  CrossAttention ca_v_, ca_h_, ca_dv_, ca_dh_;
  DepthwiseSeparable out_v_, out_h_, out_d_;
};

/// Two-view weight-shared enhancement network.
class WdciNet {
 public:
  WdciNet(const NetConfig& cfg, std::uint64_t seed);

  NetOutput forward(const Var& left, const Var& right) const;
  NetOutput forward(const Tensor& left, const Tensor& right) const;

  const NetConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

 private:
  struct Encoded {
    std::vector<HighFreqTriplet> details;  // index level - 1
    Var deepest;
  };
  Encoded encode(const Var& image) const;
  Var decode(const Var& seed, const std::vector<HighFreqTriplet>& details) const;

  NetConfig cfg_;
  ParamStore store_;
  Embed embed_;
  std::vector<SpaceToDepthDown> downsample_;
  std::vector<Conv2d> fuse_;
  Iam iam_;
  Conv2d lowfreq_head_;
  std::vector<HfCim> hf_cim_;
  std::vector<Dtem> dtem_;
  std::vector<Conv2d> up_;  // index level - 2
  Conv2d tail_;
};

WDCI_NAMESPACE_END
