#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "wdci/net.hpp"

WDCI_NAMESPACE_BEGIN

/// Frozen feature stack used by the perceptual term.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual Var features(const Var& x) const = 0;
  virtual std::string describe() const = 0;
};

/// 3x3 conv + GELU stack with frozen parameters. The default instance is
/// seeded; a stack with arbitrary depth can be built from stored layers
/// named conv<i>.weight / conv<i>.bias (e.g. converted pretrained weights).
class ConvStackExtractor : public FeatureExtractor {
 public:
  static constexpr int kDefaultLayers = 5;
  static constexpr int kDefaultWidth = 16;

  explicit ConvStackExtractor(std::uint64_t seed, int layers = kDefaultLayers, int width = kDefaultWidth);
  explicit ConvStackExtractor(std::vector<NamedParam> layers);

  Var features(const Var& x) const override;
  std::string describe() const override { return description_; }
  std::size_t layer_count() const { return convs_.size(); }

 private:
  struct Layer {
    Var weight, bias;
  };
  std::vector<Layer> convs_;
  std::string description_;
};

struct LossConfig {
  bool use_fre = true;
  bool use_spa = true;
  bool use_fre_low = true;
  bool use_spa_low = true;
  bool use_vgg_low = true;
  bool perceptual_per_view = false;  // sum of per-view norms instead of the norm of the summed residuals
  real perceptual_weight = real(1e-4);
  int ssim_window = 11;
  int ssim_window_low = 0;  // 0: largest odd window <= 11 that fits the low-frequency map
};

struct LossBreakdown {
  real l_fre = 0;
  real l_spa = 0;
  real l_fre_1_8 = 0;
  real l_spa_1_8 = 0;
  real l_vgg_1_8 = 0;
  real total = 0;
};

struct LossTargets {
  Tensor gt_left;
  Tensor gt_right;
  Tensor gt_low_left;   // deepest Haar approximation of gt_left
  Tensor gt_low_right;
};

struct LossResult {
  Var total;
  LossBreakdown terms;
};

/// Spectral L1 distance summed over both views.
Var freq_loss(const Var& pred_l, const Var& pred_r, const Var& gt_l, const Var& gt_r);

/// (1 - SSIM(left)) + (1 - SSIM(right)).
Var spatial_loss(const Var& pred_l, const Var& pred_r, const Var& gt_l, const Var& gt_r,
                 const ops::SsimOptions& opt = {});

/// weight * || (phi(pl) - phi(gl)) + (phi(pr) - phi(gr)) ||_2, or the per-view
/// variant weight * (||phi(pl) - phi(gl)||_2 + ||phi(pr) - phi(gr)||_2).
Var perceptual_loss(const Var& pred_l, const Var& pred_r, const Var& gt_l, const Var& gt_r,
                    const FeatureExtractor* extractor, real weight = real(1e-4),
                    bool per_view = false);

/// Sum of the five terms (disabled terms contribute and report zero).
LossResult total_loss(const NetOutput& out, const LossTargets& targets,
                      const FeatureExtractor* extractor, const LossConfig& cfg, int levels);

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(peak^2 / MSE), capped at kPsnrCap for identical inputs.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);
/// Mean SSIM of two images (batch and channels averaged).
double ssim(const Tensor& a, const Tensor& b, const ops::SsimOptions& opt = {});
/// Per-pixel channel-mean squared error above threshold -> 1, else 0. (N, 1, H, W).
Tensor mse_binary_map(const Tensor& a, const Tensor& b, double threshold);

WDCI_NAMESPACE_END
