#include "wdci/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "wdci/errors.hpp"

WDCI_NAMESPACE_BEGIN

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::shared_ptr<WdciNet> clone(const WdciNet& net) {
  auto copy = std::make_shared<WdciNet>(net.config(), 0);
  auto& dst = copy->params().params();
  const auto& src = net.params().params();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i].var.mutable_value() = src[i].var.value();
  return copy;
}

void accumulate(LossBreakdown& acc, const LossBreakdown& t) {
  acc.l_fre += t.l_fre;
  acc.l_spa += t.l_spa;
  acc.l_fre_1_8 += t.l_fre_1_8;
  acc.l_spa_1_8 += t.l_spa_1_8;
  acc.l_vgg_1_8 += t.l_vgg_1_8;
  acc.total += t.total;
}

LossBreakdown scaled(LossBreakdown t, double s) {
  t.l_fre = static_cast<real>(t.l_fre * s);
  t.l_spa = static_cast<real>(t.l_spa * s);
  t.l_fre_1_8 = static_cast<real>(t.l_fre_1_8 * s);
  t.l_spa_1_8 = static_cast<real>(t.l_spa_1_8 * s);
  t.l_vgg_1_8 = static_cast<real>(t.l_vgg_1_8 * s);
  t.total = static_cast<real>(t.total * s);
  return t;
}

json breakdown_json(const LossBreakdown& t) {
  return {{"l_fre", t.l_fre},         {"l_spa", t.l_spa},         {"l_fre_1_8", t.l_fre_1_8},
          {"l_spa_1_8", t.l_spa_1_8}, {"l_vgg_1_8", t.l_vgg_1_8}, {"total", t.total}};
}

Tensor clamp01(Tensor t) {
  for (real& v : t.values()) v = std::clamp(v, real(0), real(1));
  return t;
}

struct StepResult {
  LossBreakdown terms;
  bool finite = true;
};

StepResult step_on(const TrainConfig& cfg, WdciNet& net, Adam& adam, const FeatureExtractor* extractor,
                   const StereoSample& batch, double lr) {
  net.params().zero_grad();
  const NetOutput out = net.forward(Var(batch.low_left), Var(batch.low_right));
  const LossResult loss = total_loss(out, batch.targets(), extractor, cfg.loss, cfg.net.levels);
  StepResult r{loss.terms, std::isfinite(static_cast<double>(loss.terms.total))};
  if (!r.finite) return r;
  backward(loss.total);
  if (cfg.grad_clip > 0) clip_grad_norm(net.params(), cfg.grad_clip);
  adam.step(lr);
  return r;
}

}  // namespace

TrainConfig TrainConfig::full_scale() {
  TrainConfig c;
  c.batch_size = 20;
  c.crop_size = 128;
  c.epochs = 1000;
  return c;
}

void TrainConfig::validate() const {
  net.validate();
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (lr_initial <= 0) throw ConfigError("lr_initial must be positive");
  if (lr_halve_every < 1) throw ConfigError("lr_halve_every must be positive");
  if (grad_clip < 0) throw ConfigError("grad_clip must be >= 0");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  const int m = 1 << net.levels;
  if (crop_size < 1 || crop_size % m != 0) {
    throw ConfigError("crop_size " + std::to_string(crop_size) + " must be a positive multiple of " +
                      std::to_string(m));
  }
}

const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names = {"no-dtem", "no-hf-cim",  "no-iam",     "no-downsample-fusion",
                                                 "no-fre",  "no-spa",     "no-fre-low", "no-spa-low",
                                                 "no-vgg-low"};
  return names;
}

void apply_ablation(TrainConfig& cfg, const std::string& name) {
  if (name == "no-dtem") cfg.net.use_dtem = false;
  else if (name == "no-hf-cim") cfg.net.use_hf_cim = false;
  else if (name == "no-iam") cfg.net.use_iam = false;
  else if (name == "no-downsample-fusion") cfg.net.use_downsample_fusion = false;
  else if (name == "no-fre") cfg.loss.use_fre = false;
  else if (name == "no-spa") cfg.loss.use_spa = false;
  else if (name == "no-fre-low") cfg.loss.use_fre_low = false;
  else if (name == "no-spa-low") cfg.loss.use_spa_low = false;
  else if (name == "no-vgg-low") cfg.loss.use_vgg_low = false;
  else {
    std::string known;
    for (const auto& n : ablation_names()) known += " " + n;
    throw ConfigError("unknown ablation '" + name + "'; known:" + known);
  }
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw ArgumentError("lr_at: negative epoch");
  return cfg.lr_initial * std::ldexp(1.0, -(epoch / cfg.lr_halve_every));
}

Adam::Adam(ParamStore& store, double beta1, double beta2, double eps)
    : store_(store), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : store_.params()) {
    m_.emplace_back(p.var.value().numel(), 0.0);
    v_.emplace_back(p.var.value().numel(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto& params = store_.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Var& p = params[i].var;
    if (!p.requires_grad() || p.grad().empty()) continue;
    auto value = p.mutable_value().values();
    const auto grad = p.grad().values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad[k];
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g;
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g * g;
      const double update = lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
      value[k] = static_cast<real>(value[k] - update);
    }
  }
}

double clip_grad_norm(ParamStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& p : store.params()) {
    if (p.var.requires_grad() && !p.var.grad().empty()) sq += sum_squares(p.var.grad());
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-12);
    for (auto& p : store.params()) {
      if (p.var.requires_grad() && !p.var.grad().empty()) p.var.grad_buffer() *= static_cast<real>(s);
    }
  }
  return norm;
}

std::string EpochRecord::json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["lr"] = lr;
  j["steps"] = steps;
  j["l_fre"] = train.l_fre;
  j["l_spa"] = train.l_spa;
  j["l_fre_1_8"] = train.l_fre_1_8;
  j["l_spa_1_8"] = train.l_spa_1_8;
  j["l_vgg_1_8"] = train.l_vgg_1_8;
  j["total"] = train.total;
  auto opt = [](const std::optional<double>& x) { return x ? nlohmann::ordered_json(*x) : nlohmann::ordered_json(); };
  j["val_psnr_l"] = opt(val_psnr_l);
  j["val_psnr_r"] = opt(val_psnr_r);
  j["val_ssim_l"] = opt(val_ssim_l);
  j["val_ssim_r"] = opt(val_ssim_r);
  return j.dump();
}

std::unique_ptr<FeatureExtractor> default_extractor(std::uint64_t seed) {
  return std::make_unique<ConvStackExtractor>(mix(seed, 0x766767));
}

LossBreakdown train_one_step(const TrainConfig& cfg, WdciNet& net, const std::vector<StereoSample>& samples) {
  cfg.validate();
  if (samples.empty()) throw ArgumentError("train_one_step: no samples");
  std::vector<StereoSample> crops;
  const int n = std::min<int>(cfg.batch_size, static_cast<int>(samples.size()));
  for (int i = 0; i < n; ++i) crops.push_back(random_crop(samples[i], cfg.crop_size, mix(cfg.seed, i), cfg.net.levels));
  std::vector<const StereoSample*> ptrs;
  for (const auto& c : crops) ptrs.push_back(&c);
  const auto extractor = cfg.loss.use_vgg_low ? default_extractor(cfg.seed) : nullptr;
  Adam adam(net.params());
  const StepResult r = step_on(cfg, net, adam, extractor.get(), stack_samples(ptrs), lr_at(0, cfg));
  if (!r.finite) throw TrainingAborted("train_one_step: non-finite loss");
  return r.terms;
}

CheckpointSeries train(const TrainConfig& cfg, const Dataset& dataset, std::ostream* log) {
  cfg.validate();
  if (dataset.train.empty()) throw ArgumentError("train: the training split is empty");
  for (const auto& s : dataset.train) {
    if (s.gt_left.h() < cfg.crop_size || s.gt_left.w() < cfg.crop_size) {
      throw ConfigError("crop_size " + std::to_string(cfg.crop_size) + " exceeds training image '" + s.id + "' (" +
                        std::to_string(s.gt_left.h()) + "x" + std::to_string(s.gt_left.w()) + ")");
    }
  }

  std::ofstream log_file;
  CheckpointSeries series;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    log_file.open(fs::path(cfg.out_dir) / "train_log.jsonl", std::ios::trunc);
    if (!log_file) throw IoError("cannot write training log in " + cfg.out_dir);
    series.best_path = (fs::path(cfg.out_dir) / "best.ckpt").string();
    series.last_path = (fs::path(cfg.out_dir) / "last.ckpt").string();
  }

  WdciNet net(cfg.net, cfg.seed);
  Adam adam(net.params());
  const auto extractor = cfg.loss.use_vgg_low ? default_extractor(cfg.seed) : nullptr;
  const int levels = cfg.net.levels;
  double best_psnr = -1.0;
  long steps = 0;
  bool capped = false;

  for (int epoch = 0; epoch < cfg.epochs && !capped; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    std::vector<std::size_t> order(dataset.train.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix(cfg.seed, 0xE0000 + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    LossBreakdown acc;
    int batches = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<StereoSample> crops;
      for (std::size_t k = b; k < std::min(order.size(), b + cfg.batch_size); ++k) {
        crops.push_back(random_crop(dataset.train[order[k]], cfg.crop_size,
                                    mix(cfg.seed, (static_cast<std::uint64_t>(steps) << 16) + k), levels));
      }
      std::vector<const StereoSample*> ptrs;
      for (const auto& c : crops) ptrs.push_back(&c);
      const StepResult r = step_on(cfg, net, adam, extractor.get(), stack_samples(ptrs), lr);
      if (!r.finite) {
        json dump = {{"epoch", epoch}, {"batch_index", batches}, {"step", steps}, {"loss", breakdown_json(r.terms)}};
        for (const auto& c : crops) dump["samples"].push_back(c.id);
        if (!cfg.out_dir.empty()) std::ofstream(fs::path(cfg.out_dir) / "nan_dump.json") << dump.dump(2) << "\n";
        throw TrainingAborted("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batches) + ": " + breakdown_json(r.terms).dump());
      }
      accumulate(acc, r.terms);
      series.step_losses.push_back(r.terms.total);
      ++batches;
      ++steps;
      if (cfg.max_steps > 0 && steps >= cfg.max_steps) {
        capped = true;
        break;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.steps = steps;
    rec.train = scaled(acc, 1.0 / std::max(1, batches));
    if (!dataset.val.empty()) {
      MetricsTable table;
      for (const auto& s : dataset.val) {
        const StereoPair e = enhance(net, s.low_left, s.low_right);
        table.add(s.id, e.left, e.right, s.gt_left, s.gt_right);
      }
      const MetricsRow m = table.mean();
      rec.val_psnr_l = m.psnr_left;
      rec.val_psnr_r = m.psnr_right;
      rec.val_ssim_l = m.ssim_left;
      rec.val_ssim_r = m.ssim_right;
    }
    series.log.push_back(rec);
    const std::string line = rec.json();
    if (log) *log << line << "\n";
    if (log_file) log_file << line << std::endl;

    const CheckpointMeta meta{cfg.net, epoch, cfg.seed, static_cast<std::uint64_t>(steps)};
    const double score = rec.val_psnr_l ? 0.5 * (*rec.val_psnr_l + *rec.val_psnr_r) : 0.0;
    const bool improved = dataset.val.empty() || score > best_psnr;
    if (improved) {
      best_psnr = score;
      series.best_epoch = epoch;
      series.best = clone(net);
      if (!series.best_path.empty()) save_checkpoint(series.best_path, net, meta);
    }
    if (!series.last_path.empty()) save_checkpoint(series.last_path, net, meta);
  }
  series.last = clone(net);
  return series;
}

StereoPair enhance(const WdciNet& net, const Tensor& left, const Tensor& right) {
  require_same_shape(left, right, "enhance");
  if (left.c() != 3) throw ShapeError("enhance: expected 3-channel images, got " + left.shape().str());
  const int m = 1 << net.config().levels;
  const int H = left.h(), W = left.w();
  const int pb = (m - H % m) % m, pr = (m - W % m) % m;
  NoGradGuard guard;
  const NetOutput out = net.forward(pad_reflect(left, pb, pr), pad_reflect(right, pb, pr));
  auto back = [&](const Var& v) { return clamp01(crop(v.value(), 0, 0, H, W)); };
  return {back(out.enhanced_left), back(out.enhanced_right)};
}

void MetricsTable::add(const std::string& id, const Tensor& pred_l, const Tensor& pred_r, const Tensor& gt_l,
                       const Tensor& gt_r) {
  rows_.push_back({id, psnr(pred_l, gt_l), psnr(pred_r, gt_r), ssim(pred_l, gt_l), ssim(pred_r, gt_r)});
}

MetricsRow MetricsTable::mean() const {
  MetricsRow m{"mean"};
  if (rows_.empty()) return m;
  for (const auto& r : rows_) {
    m.psnr_left += r.psnr_left;
    m.psnr_right += r.psnr_right;
    m.ssim_left += r.ssim_left;
    m.ssim_right += r.ssim_right;
  }
  const double n = static_cast<double>(rows_.size());
  m.psnr_left /= n;
  m.psnr_right /= n;
  m.ssim_left /= n;
  m.ssim_right /= n;
  return m;
}

void MetricsTable::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << "id,psnr_left,psnr_right,ssim_left,ssim_right\n" << std::setprecision(10);
  for (const auto& r : rows_) {
    out << r.id << ',' << r.psnr_left << ',' << r.psnr_right << ',' << r.ssim_left << ',' << r.ssim_right << '\n';
  }
}

void MetricsTable::print(std::ostream& os) const {
  const auto line = [&](const MetricsRow& r) {
    os << std::left << std::setw(20) << r.id << std::right << std::fixed << std::setprecision(3) << std::setw(10)
       << r.psnr_left << std::setw(10) << r.psnr_right << std::setw(10) << r.ssim_left << std::setw(10)
       << r.ssim_right << '\n';
  };
  os << std::left << std::setw(20) << "id" << std::right << std::setw(10) << "PSNR-L" << std::setw(10) << "PSNR-R"
     << std::setw(10) << "SSIM-L" << std::setw(10) << "SSIM-R" << '\n';
  for (const auto& r : rows_) line(r);
  line(mean());
  os.unsetf(std::ios::floatfield);
}

MetricsTable evaluate(const WdciNet& net, const Dataset& dataset) {
  MetricsTable table;
  for (const auto* split : {&dataset.train, &dataset.val}) {
    for (const auto& s : *split) {
      const StereoPair e = enhance(net, s.low_left, s.low_right);
      table.add(s.id, e.left, e.right, s.gt_left, s.gt_right);
    }
  }
  return table;
}

MetricsTable evaluate(const std::string& checkpoint_path, const NetConfig& expected, const Dataset& dataset) {
  WdciNet net(expected, 0);
  load_into(checkpoint_path, net);
  return evaluate(net, dataset);
}

WDCI_NAMESPACE_END
