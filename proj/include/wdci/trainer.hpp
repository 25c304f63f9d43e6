#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wdci/checkpoint.hpp"
#include "wdci/data.hpp"
#include "wdci/losses.hpp"
#include "wdci/net.hpp"

WDCI_NAMESPACE_BEGIN

struct TrainConfig {
  int epochs = 50;
  int batch_size = 2;
  int crop_size = 64;
  double lr_initial = 2e-4;
  int lr_halve_every = 250;
  std::uint64_t seed = 0;
  double grad_clip = 1.0;  // global-norm threshold; 0 disables clipping
  long max_steps = 0;      // 0 = no cap
  NetConfig net;
  LossConfig loss;
  std::string out_dir;     // empty = keep checkpoints and log in memory only

  /// batch 20, crop 128, 1000 epochs.
  static TrainConfig full_scale();
  void validate() const;
};

/// Ablation variants: no-dtem, no-hf-cim, no-iam, no-downsample-fusion,
/// no-fre, no-spa, no-fre-low, no-spa-low, no-vgg-low.
const std::vector<std::string>& ablation_names();
/// Throws ConfigError for an unknown name.
void apply_ablation(TrainConfig& cfg, const std::string& name);

/// lr_initial * 0.5^floor(epoch / lr_halve_every).
double lr_at(int epoch, const TrainConfig& cfg);

/// Adam with bias correction over every trainable parameter in a store.
class Adam {
 public:
  explicit Adam(ParamStore& store, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(double lr);
  long steps() const { return t_; }

 private:
  ParamStore& store_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(ParamStore& store, double max_norm);

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  long steps = 0;  // cumulative
  LossBreakdown train;  // mean over the epoch's batches
  std::optional<double> val_psnr_l, val_psnr_r, val_ssim_l, val_ssim_r;

  std::string json() const;
};

struct CheckpointSeries {
  std::vector<EpochRecord> log;
  std::vector<double> step_losses;  // total loss of every optimizer step
  std::string best_path, last_path;  // empty when out_dir is empty
  int best_epoch = -1;
  std::shared_ptr<WdciNet> best;   // weights selected by validation PSNR (last when no val split)
  std::shared_ptr<WdciNet> last;
};

/// Frozen extractor the trainer uses for the perceptual term.
std::unique_ptr<FeatureExtractor> default_extractor(std::uint64_t seed);

/// Runs the optimization loop. If `log` is non-null each epoch record is
/// also streamed to it as a JSON line.
CheckpointSeries train(const TrainConfig& cfg, const Dataset& dataset, std::ostream* log = nullptr);

/// One forward/backward/update on the first batch of `samples`; returns its loss.
LossBreakdown train_one_step(const TrainConfig& cfg, WdciNet& net, const std::vector<StereoSample>& samples);

/// Inference on arbitrary sizes: reflect-pads to a multiple of 2^levels and
/// crops back to the input size.
StereoPair enhance(const WdciNet& net, const Tensor& left, const Tensor& right);

struct MetricsRow {
  std::string id;
  double psnr_left = 0, psnr_right = 0;
  double ssim_left = 0, ssim_right = 0;
};

class MetricsTable {
 public:
  void add(const std::string& id, const Tensor& pred_l, const Tensor& pred_r, const Tensor& gt_l,
           const Tensor& gt_r);
  const std::vector<MetricsRow>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  /// Column means in Left, Right order; the mean of an empty table is 0.
  MetricsRow mean() const;
  void write_csv(const std::string& path) const;
  void print(std::ostream& os) const;

 private:
  std::vector<MetricsRow> rows_;
};

/// Scores every sample (train and val) of the dataset.
MetricsTable evaluate(const WdciNet& net, const Dataset& dataset);
/// Loads the checkpoint, checks it against `expected` (hash mismatch is a
/// ConfigError naming both hashes) and evaluates.
MetricsTable evaluate(const std::string& checkpoint_path, const NetConfig& expected, const Dataset& dataset);

WDCI_NAMESPACE_END
