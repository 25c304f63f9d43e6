#include "wdci/losses.hpp"

#include <algorithm>
#include <cmath>

#include "wdci/errors.hpp"

WDCI_NAMESPACE_BEGIN

ConvStackExtractor::ConvStackExtractor(std::uint64_t seed, int layers, int width) {
  if (layers < 1 || width < 1) throw ConfigError("extractor needs at least one layer and channel");
  ParamStore store(seed);
  int in = 3;
  for (int i = 0; i < layers; ++i) {
    const std::string name = "conv" + std::to_string(i);
    Var w = store.create(name + ".weight", {width, in, 3, 3}, Init::FanInUniform, in * 9);
    Var b = store.create(name + ".bias", {1, width, 1, 1}, Init::Zeros);
    w.set_requires_grad(false);
    b.set_requires_grad(false);
    convs_.push_back({w, b});
    in = width;
  }
  description_ = "seeded conv stack (" + std::to_string(layers) + " layers, width " +
                 std::to_string(width) + ")";
}

ConvStackExtractor::ConvStackExtractor(std::vector<NamedParam> layers) {
  for (std::size_t i = 0;; ++i) {
    const std::string name = "conv" + std::to_string(i);
    auto find = [&](const std::string& key) -> const Var* {
      for (const auto& p : layers)
        if (p.name == key) return &p.var;
      return nullptr;
    };
    const Var* w = find(name + ".weight");
    if (!w) break;
    const Var* b = find(name + ".bias");
    Var wf(w->value(), false);
    Var bf = b ? Var(b->value(), false) : Var();
    const int in = convs_.empty() ? 3 : convs_.back().weight.shape().n;
    if (wf.shape().c != in || wf.shape().h != 3 || wf.shape().w != 3) {
      throw ConfigError("extractor layer " + name + " has incompatible shape " + wf.shape().str());
    }
    convs_.push_back({wf, bf});
  }
  if (convs_.empty()) throw ConfigError("extractor weights contain no conv0.weight");
  description_ = "loaded conv stack (" + std::to_string(convs_.size()) + " layers)";
}

Var ConvStackExtractor::features(const Var& x) const {
  Var h = x;
  for (const auto& l : convs_) h = ops::gelu(ops::conv2d(h, l.weight, l.bias, 1));
  return h;
}

Var freq_loss(const Var& pred_l, const Var& pred_r, const Var& gt_l, const Var& gt_r) {
  return ops::add(ops::fft_l1(pred_l, gt_l), ops::fft_l1(pred_r, gt_r));
}

Var spatial_loss(const Var& pred_l, const Var& pred_r, const Var& gt_l, const Var& gt_r,
                 const ops::SsimOptions& opt) {
  const Var one(Tensor::scalar(2));
  // (1 - a) + (1 - b) == 2 - (a + b)
  return ops::sub(one, ops::add(ops::ssim(pred_l, gt_l, opt), ops::ssim(pred_r, gt_r, opt)));
}

Var perceptual_loss(const Var& pred_l, const Var& pred_r, const Var& gt_l, const Var& gt_r,
                    const FeatureExtractor* extractor, real weight, bool per_view) {
  if (!extractor) {
    throw ConfigError("perceptual loss requested but no feature extractor is configured");
  }
  const Var rl = ops::sub(extractor->features(pred_l), extractor->features(gt_l));
  const Var rr = ops::sub(extractor->features(pred_r), extractor->features(gt_r));
  if (per_view) return ops::scale(ops::add(ops::l2_norm(rl), ops::l2_norm(rr)), weight);
  return ops::scale(ops::l2_norm(ops::add(rl, rr)), weight);
}

namespace {

int fitting_window(const Shape& s) {
  int w = std::min({11, s.h, s.w});
  if (w % 2 == 0) --w;
  return std::max(w, 1);
}

}  // namespace

LossResult total_loss(const NetOutput& out, const LossTargets& t, const FeatureExtractor* extractor,
                      const LossConfig& cfg, int levels) {
  const Var gl(t.gt_left), gr(t.gt_right), gll(t.gt_low_left), glr(t.gt_low_right);
  ops::SsimOptions full;
  full.window = cfg.ssim_window;
  ops::SsimOptions low;
  low.window = cfg.ssim_window_low > 0 ? cfg.ssim_window_low : fitting_window(t.gt_low_left.shape());
  low.peak = static_cast<real>(1 << levels);  // Haar approximation range after `levels` levels

  LossResult r;
  Var total;
  auto accumulate = [&](bool on, real& slot, auto&& term) {
    if (!on) return;
    const Var v = term();
    slot = v.item();
    total = total.defined() ? ops::add(total, v) : v;
  };
  accumulate(cfg.use_fre, r.terms.l_fre,
             [&] { return freq_loss(out.enhanced_left, out.enhanced_right, gl, gr); });
  accumulate(cfg.use_spa, r.terms.l_spa,
             [&] { return spatial_loss(out.enhanced_left, out.enhanced_right, gl, gr, full); });
  accumulate(cfg.use_fre_low, r.terms.l_fre_1_8,
             [&] { return freq_loss(out.lowfreq_left, out.lowfreq_right, gll, glr); });
  accumulate(cfg.use_spa_low, r.terms.l_spa_1_8,
             [&] { return spatial_loss(out.lowfreq_left, out.lowfreq_right, gll, glr, low); });
  accumulate(cfg.use_vgg_low, r.terms.l_vgg_1_8, [&] {
    return perceptual_loss(out.lowfreq_left, out.lowfreq_right, gll, glr, extractor,
                           cfg.perceptual_weight, cfg.perceptual_per_view);
  });
  if (!total.defined()) throw ConfigError("all loss terms are disabled");
  r.total = total;
  r.terms.total = total.item();
  return r;
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
  require_same_shape(a, b, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    se += d * d;
  }
  if (se == 0.0) return kPsnrCap;
  const double mse = se / static_cast<double>(a.numel());
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const Tensor& a, const Tensor& b, const ops::SsimOptions& opt) {
  NoGradGuard guard;
  return ops::ssim(Var(a), Var(b), opt).item();
}

Tensor mse_binary_map(const Tensor& a, const Tensor& b, double threshold) {
  require_same_shape(a, b, "mse_binary_map");
  const Shape& s = a.shape();
  Tensor out({s.n, 1, s.h, s.w});
  for (int n = 0; n < s.n; ++n)
    for (std::size_t p = 0; p < s.plane(); ++p) {
      double se = 0.0;
      for (int c = 0; c < s.c; ++c) {
        const double d = static_cast<double>(a.plane(n, c)[p]) - b.plane(n, c)[p];
        se += d * d;
      }
      out.plane(n, 0)[p] = se / s.c > threshold ? real(1) : real(0);
    }
  return out;
}

WDCI_NAMESPACE_END
