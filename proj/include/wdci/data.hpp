#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wdci/losses.hpp"
#include "wdci/tensor.hpp"

WDCI_NAMESPACE_BEGIN

/// Ground-truth or degraded left/right views, each (1, 3, H, W).
struct StereoPair {
  Tensor left;
  Tensor right;
};

/// Ranges the random degradation sampler draws from.
struct DegradationRanges {
  double gamma_min = 2.0, gamma_max = 2.8;
  double gain_min = 0.18, gain_max = 0.36;
  // Band for the noise-free mean of a degraded pair; dataset builders rescale
  // the sampled gain into it. Kept inside [0.02, 0.15] so that clipped noise
  // cannot push the final mean out.
  double exposure_min = 0.025, exposure_max = 0.14;
  double read_noise_min = 0.002, read_noise_max = 0.01;
  double shot_noise_min = 0.001, shot_noise_max = 0.01;
};

/// Low-light degradation applied identically to both views:
///   low = clip(gain * field * gt^gamma + N(0, read^2 + shot * signal))
///
/// Validation accepts gamma in [1, 3.5] and gain in (0, 1] so that the
/// identity model (gamma 1, gain 1, no noise) is expressible; the sampler
/// uses the narrower DegradationRanges.
struct DegradationParams {
  double gamma = 1.0;
  double gain = 1.0;
  double read_noise_sigma = 0.0;
  double shot_noise_scale = 0.0;
  std::optional<Tensor> illum_field;  // (1, 1, H, W) in [0.2, 1]; absent = uniform
  std::uint64_t seed = 0;

  void validate() const;

  static DegradationParams sample(std::uint64_t seed, bool non_uniform, int height, int width,
                                  const DegradationRanges& ranges = {});
};

/// Smooth random field in [0.2, 1]: an 8x8 random grid, bicubic-interpolated
/// to (height, width) and contracted toward its mean until the largest
/// neighbouring step is below 0.01 per pixel at 128-pixel scale.
Tensor illumination_field(int height, int width, std::uint64_t seed, int grid = 8);
/// Largest absolute difference between 4-neighbours, rescaled to a 128-pixel extent.
double max_field_step(const Tensor& field);

StereoPair degrade(const StereoPair& gt, const DegradationParams& params);

/// Mean of gain * field * gt^gamma over both views, without noise.
double noise_free_mean(const StereoPair& gt, const DegradationParams& params);
/// Rescales params.gain so noise_free_mean lands in [lo, hi]; gain is capped at 1.
void fit_exposure(DegradationParams& params, const StereoPair& gt, double lo, double hi);

/// One training or validation example.
struct StereoSample {
  std::string id;
  Tensor low_left, low_right;
  Tensor gt_left, gt_right;
  Tensor gt_low3_left, gt_low3_right;  // deepest Haar approximation of the ground truths
  bool uniform_illumination = true;

  /// Throws ValidationError when shapes are inconsistent.
  void validate(int levels) const;
  LossTargets targets() const { return {gt_left, gt_right, gt_low3_left, gt_low3_right}; }
};

Tensor lowfreq_target(const Tensor& gt, int levels);
StereoSample make_sample(const std::string& id, const StereoPair& gt, const DegradationParams& params,
                         int levels);

/// Same window for all six tensors. Offsets are multiples of 2^levels so the
/// cropped low-frequency targets remain exact.
StereoSample random_crop(const StereoSample& sample, int size, std::uint64_t seed, int levels = 3);

/// Stacks samples along the batch axis.
StereoSample stack_samples(const std::vector<const StereoSample*>& samples);

/// Procedural rectified stereo scene: textured layers at integer disparities
/// over a smooth background. Both views (1, 3, height, width) in [0, 1].
StereoPair synthesize_scene(int height, int width, std::uint64_t seed, int max_disparity = 0);

struct DatasetOptions {
  std::uint64_t seed = 0;
  double val_fraction = 0.2;      // used when no manifest is given
  double uniform_fraction = 0.6;  // share of pairs degraded with uniform illumination
  int levels = 3;
  std::string cache_dir;          // empty = in-memory only
  DegradationRanges ranges;
};

class Dataset {
 public:
  std::vector<StereoSample> train;
  std::vector<StereoSample> val;

  std::size_t size() const { return train.size() + val.size(); }
  bool empty() const { return size() == 0; }
};

/// Reads root/{id}_L.png + root/{id}_R.png ground-truth pairs. The manifest
/// lists "id split" lines (split is train or val); without one the sorted ids
/// are split by val_fraction.
Dataset build_dataset(const std::string& root_dir, const std::string& manifest_path,
                      const DatasetOptions& options);

/// Dataset of `pairs` procedural scenes, split like build_dataset.
Dataset synthetic_dataset(int pairs, int height, int width, const DatasetOptions& options);

/// Raw float array with a small header (magic, version, dtype tag, shape).
void write_array(const std::string& path, const Tensor& t);
Tensor read_array(const std::string& path);

WDCI_NAMESPACE_END
