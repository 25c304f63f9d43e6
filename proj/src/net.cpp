#include "wdci/net.hpp"

#include <sstream>

#include "wdci/errors.hpp"

WDCI_NAMESPACE_BEGIN

std::string NetConfig::canonical() const {
  std::ostringstream os;
  os << "channels=" << channels << "\nlevels=" << levels << "\nlarge_kernel=" << large_kernel
     << "\nmax_disparity=" << max_disparity << "\nhf_cim=" << use_hf_cim << "\ndtem=" << use_dtem
     << "\niam=" << use_iam << "\ndownsample_fusion=" << use_downsample_fusion
     << "\nglobal_residual=" << global_residual << "\n";
  return os.str();
}

std::uint64_t NetConfig::hash() const {
  // FNV-1a
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : canonical()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

void NetConfig::validate() const {
  if (channels < 2 || channels % 2 != 0) throw ConfigError("channels must be even and >= 2");
  if (levels < 1) throw ConfigError("levels must be >= 1");
  if (large_kernel < 1 || large_kernel % 2 == 0) throw ConfigError("large_kernel must be odd");
  if (max_disparity < 0) throw ConfigError("max_disparity must be >= 0");
}

Iam::Iam(ParamStore& store, const std::string& name, int channels, int large_kernel)
    : spatial_in_(store, name + ".spatial_in", channels, 2 * channels, 1),
      spatial_dw_(store, name + ".spatial_dw", 2 * channels, 2 * channels, large_kernel, 2 * channels),
      spatial_out_(store, name + ".spatial_out", channels, channels, 1),
      channel_in_(store, name + ".channel_in", channels, 2 * channels, 1),
      channel_out_(store, name + ".channel_out", channels, channels, 1),
      attention_(store, name + ".attention", channels) {}

Var Iam::operator()(const Var& x) const {
  const Var s1 = ops::add(x, spatial_out_(simple_gate(spatial_dw_(spatial_in_(x)))));
  return ops::add(s1, channel_out_(attention_(simple_gate(channel_in_(s1)))));
}

HfCim::HfCim(ParamStore& store, const std::string& name, int channels, int max_disparity)
    : fuse_(store, name + ".fuse", channels, 3),
      norm_(store, name + ".norm", channels),
      linear_(store, name + ".linear", channels, channels, 1),
      max_disparity_(max_disparity) {}

Var HfCim::project(const HighFreqTriplet& t) const {
  return linear_(norm_(fuse_({t.v, t.d, t.h})));
}

HfCim::Result HfCim::operator()(const HighFreqTriplet& left, const HighFreqTriplet& right) const {
  for (const Var* b : {&left.h, &left.d, &right.v, &right.h, &right.d}) {
    if (b->shape() != left.v.shape()) {
      throw ShapeError("hf_cim: band shape " + b->shape().str() + " differs from " +
                       left.v.shape().str());
    }
  }
  const Var q = project(left);
  const Var k = project(right);
  Result r;
  r.attention.t_l2r = ops::row_affinity(k, q, max_disparity_);
  r.attention.t_r2l = ops::row_affinity(q, k, max_disparity_);
  const auto& tl = r.attention.t_l2r;
  const auto& tr = r.attention.t_r2l;
  r.right.v = ops::add(right.v, ops::row_aggregate(tl, left.v));
  r.right.d = ops::add(right.d, ops::row_aggregate(tl, left.d));
  r.right.h = ops::add(right.h, ops::row_aggregate(tl, left.h));
  r.left.v = ops::add(left.v, ops::row_aggregate(tr, right.v));
  r.left.d = ops::add(left.d, ops::row_aggregate(tr, right.d));
  r.left.h = ops::add(left.h, ops::row_aggregate(tr, right.h));
  return r;
}

Dtem::Dtem(ParamStore& store, const std::string& name, int channels)
    : in_v_(store, name + ".in_v", channels),
      in_h_(store, name + ".in_h", channels),
      in_d_(store, name + ".in_d", channels),
      fuse_(store, name + ".fuse", channels, 3),
      ca_v_(store, name + ".ca_v", channels),
      ca_h_(store, name + ".ca_h", channels),
      ca_dv_(store, name + ".ca_dv", channels),
      ca_dh_(store, name + ".ca_dh", channels),
      out_v_(store, name + ".out_v", channels),
      out_h_(store, name + ".out_h", channels),
      out_d_(store, name + ".out_d", channels) {}

Dtem::Trace Dtem::trace(const HighFreqTriplet& t) const {
  Trace r;
  r.guide = fuse_({in_v_(t.v), in_h_(t.h), in_d_(t.d)});
  r.v_mid = ca_v_(r.guide, t.v);
  r.h_mid = ca_h_(r.guide, t.h);
  r.d_from_v = ca_dv_(r.v_mid, t.d);
  r.d_from_h = ca_dh_(r.h_mid, t.d);
  r.d_mid = ops::add(r.d_from_v, r.d_from_h);
  r.out = {out_v_(r.v_mid), out_h_(r.h_mid), out_d_(r.d_mid)};
  return r;
}

WdciNet::WdciNet(const NetConfig& cfg, std::uint64_t seed) : cfg_(cfg), store_(seed) {
  cfg_.validate();
  const int L = cfg_.levels;
  embed_ = Embed(store_, "embed", cfg_.channels);
  for (int i = 1; i <= L; ++i) {
    const std::string lv = "level" + std::to_string(i);
    const int d = cfg_.detail_width(i);
    const int f = cfg_.feature_width(i);
    if (cfg_.use_downsample_fusion) {
      downsample_.emplace_back(store_, lv + ".downsample", 3, 1 << i, d);
      fuse_.emplace_back(store_, lv + ".fuse", 2 * d, f, 3);
    } else {
      fuse_.emplace_back(store_, lv + ".fuse", d, f, 1);
    }
  }
  const int deep = cfg_.feature_width(L);
  if (cfg_.use_iam) iam_ = Iam(store_, "iam", deep, cfg_.large_kernel);
  lowfreq_head_ = Conv2d(store_, "lowfreq_head", deep, 3, 3);
  for (int i = 1; i <= L; ++i) {
    const std::string lv = "level" + std::to_string(i);
    if (cfg_.use_hf_cim) hf_cim_.emplace_back(store_, lv + ".hf_cim", cfg_.detail_width(i), cfg_.max_disparity);
    if (cfg_.use_dtem) dtem_.emplace_back(store_, lv + ".dtem", cfg_.detail_width(i));
  }
  for (int i = 2; i <= L; ++i) {
    up_.emplace_back(store_, "level" + std::to_string(i) + ".up", cfg_.detail_width(i),
                     cfg_.detail_width(i - 1), 1);
  }
  tail_ = Conv2d(store_, "tail", cfg_.channels, 3, 3);
}

WdciNet::Encoded WdciNet::encode(const Var& image) const {
  Encoded e;
  Var cur = embed_(image);
  for (int i = 1; i <= cfg_.levels; ++i) {
    const int d = cfg_.detail_width(i);
    const Var packed = ops::haar_dwt(cur);
    const Var approx = ops::slice_channels(packed, 0, d);
    e.details.push_back({ops::slice_channels(packed, 2 * d, d), ops::slice_channels(packed, d, d),
                         ops::slice_channels(packed, 3 * d, d)});
    if (cfg_.use_downsample_fusion) {
      cur = fuse_[i - 1](ops::concat_channels({approx, downsample_[i - 1](image)}));
    } else {
      cur = fuse_[i - 1](approx);
    }
  }
  e.deepest = cur;
  return e;
}

Var WdciNet::decode(const Var& seed, const std::vector<HighFreqTriplet>& details) const {
  Var rec = seed;
  for (int i = cfg_.levels; i >= 1; --i) {
    const auto& t = details[i - 1];
    rec = ops::haar_idwt(ops::concat_channels({rec, t.h, t.v, t.d}));
    if (i > 1) rec = up_[i - 2](rec);
  }
  return tail_(rec);
}

NetOutput WdciNet::forward(const Var& left, const Var& right) const {
  const Shape& s = left.shape();
  if (right.shape() != s) {
    throw ShapeError("forward: left " + s.str() + " and right " + right.shape().str() + " differ");
  }
  if (s.c != 3) throw ShapeError("forward: expected 3-channel images, got " + s.str());
  const int m = 1 << cfg_.levels;
  if (s.h % m != 0 || s.w % m != 0) {
    throw ShapeError("forward: spatial size " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " must be divisible by " + std::to_string(m) +
                     "; pad the input (reflective padding) before calling");
  }
  if (!left.value().all_finite() || !right.value().all_finite()) {
    throw ValidationError("forward: input contains non-finite values");
  }

  Encoded el = encode(left);
  Encoded er = encode(right);

  NetOutput out;
  const Var lf_l = cfg_.use_iam ? iam_(el.deepest) : el.deepest;
  const Var lf_r = cfg_.use_iam ? iam_(er.deepest) : er.deepest;
  out.lowfreq_left = lowfreq_head_(lf_l);
  out.lowfreq_right = lowfreq_head_(lf_r);

  for (int i = 0; i < cfg_.levels; ++i) {
    if (cfg_.use_hf_cim) {
      auto r = hf_cim_[i](el.details[i], er.details[i]);
      el.details[i] = r.left;
      er.details[i] = r.right;
      out.attention.push_back(r.attention);
    }
    if (cfg_.use_dtem) {
      el.details[i] = dtem_[i](el.details[i]);
      er.details[i] = dtem_[i](er.details[i]);
    }
  }

  Var yl = decode(lf_l, el.details);
  Var yr = decode(lf_r, er.details);
  if (cfg_.global_residual) {
    yl = ops::add(left, yl);
    yr = ops::add(right, yr);
  }
  out.enhanced_left = yl;
  out.enhanced_right = yr;
  return out;
}

NetOutput WdciNet::forward(const Tensor& left, const Tensor& right) const {
  return forward(Var(left), Var(right));
}

WDCI_NAMESPACE_END
