#include "wdci/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "wdci/errors.hpp"
#include "wdci/image_io.hpp"
#include "wdci/wavelet.hpp"

WDCI_NAMESPACE_BEGIN

namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix(a ^ splitmix(b)); }

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag) { return std::mt19937_64(mix(seed, tag)); }

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double cubic(double p0, double p1, double p2, double p3, double t) {
  // Catmull-Rom
  return p1 + 0.5 * t * (p2 - p0 + t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + t * (3.0 * (p1 - p2) + p3 - p0)));
}

void require_range(double v, double lo, double hi, const char* name) {
  if (!(v >= lo && v <= hi)) {
    std::ostringstream os;
    os << "degradation parameter " << name << " = " << v << " outside [" << lo << ", " << hi << "]";
    throw ValidationError(os.str());
  }
}

}  // namespace

void DegradationParams::validate() const {
  require_range(gamma, 1.0, 3.5, "gamma");
  require_range(gain, 1e-6, 1.0, "gain");
  require_range(read_noise_sigma, 0.0, 0.2, "read_noise_sigma");
  require_range(shot_noise_scale, 0.0, 0.2, "shot_noise_scale");
  if (illum_field) {
    for (real v : illum_field->values()) require_range(v, 0.2, 1.0, "illum_field");
  }
}

DegradationParams DegradationParams::sample(std::uint64_t seed, bool non_uniform, int height, int width,
                                            const DegradationRanges& r) {
  auto rng = stream(seed, 0xdead);
  DegradationParams p;
  p.seed = seed;
  p.gamma = uniform(rng, r.gamma_min, r.gamma_max);
  p.gain = uniform(rng, r.gain_min, r.gain_max);
  p.read_noise_sigma = uniform(rng, r.read_noise_min, r.read_noise_max);
  p.shot_noise_scale = uniform(rng, r.shot_noise_min, r.shot_noise_max);
  if (non_uniform) p.illum_field = illumination_field(height, width, mix(seed, 0xf1e1d));
  return p;
}

double max_field_step(const Tensor& f) {
  const int H = f.h(), W = f.w();
  double m = 0.0;
  const real* p = f.plane(0, 0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const real v = p[static_cast<std::size_t>(y) * W + x];
      if (x + 1 < W) m = std::max(m, std::abs(static_cast<double>(p[static_cast<std::size_t>(y) * W + x + 1]) - v));
      if (y + 1 < H) m = std::max(m, std::abs(static_cast<double>(p[static_cast<std::size_t>(y + 1) * W + x]) - v));
    }
  const int extent = std::max(H, W);
  return extent > 1 ? m * (extent - 1) / 127.0 : 0.0;
}

Tensor illumination_field(int height, int width, std::uint64_t seed, int grid) {
  if (height < 1 || width < 1 || grid < 2) throw ArgumentError("illumination_field: bad size");
  auto rng = stream(seed, 0x111);
  std::vector<double> g(static_cast<std::size_t>(grid) * grid);
  for (auto& v : g) v = uniform(rng, 0.2, 1.0);
  auto at = [&](int y, int x) {
    y = std::clamp(y, 0, grid - 1);
    x = std::clamp(x, 0, grid - 1);
    return g[static_cast<std::size_t>(y) * grid + x];
  };
  Tensor f({1, 1, height, width});
  double mean = 0.0;
  for (int y = 0; y < height; ++y) {
    const double gy = height > 1 ? static_cast<double>(y) * (grid - 1) / (height - 1) : 0.0;
    const int iy = std::min(static_cast<int>(gy), grid - 2);
    const double ty = gy - iy;
    for (int x = 0; x < width; ++x) {
      const double gx = width > 1 ? static_cast<double>(x) * (grid - 1) / (width - 1) : 0.0;
      const int ix = std::min(static_cast<int>(gx), grid - 2);
      const double tx = gx - ix;
      double rows[4];
      for (int k = -1; k <= 2; ++k) {
        rows[k + 1] = cubic(at(iy + k, ix - 1), at(iy + k, ix), at(iy + k, ix + 1), at(iy + k, ix + 2), tx);
      }
      const double v = cubic(rows[0], rows[1], rows[2], rows[3], ty);
      f.at(0, 0, y, x) = static_cast<real>(v);
      mean += v;
    }
  }
  mean /= static_cast<double>(f.numel());
  const double limit = 0.0095;
  const double step = max_field_step(f);
  const double k = step > limit ? limit / step : 1.0;
  for (real& v : f.values()) {
    v = static_cast<real>(std::clamp(mean + (v - mean) * k, 0.2, 1.0));
  }
  return f;
}

StereoPair degrade(const StereoPair& gt, const DegradationParams& p) {
  p.validate();
  require_same_shape(gt.left, gt.right, "degrade");
  if (p.illum_field && (p.illum_field->h() != gt.left.h() || p.illum_field->w() != gt.left.w())) {
    throw ShapeError("degrade: illumination field " + p.illum_field->shape().str() +
                     " does not match image " + gt.left.shape().str());
  }
  auto apply = [&](const Tensor& img, std::uint64_t view) {
    for (real v : img.values()) {
      if (!(v >= 0 && v <= 1)) throw ValidationError("degrade: ground truth outside [0, 1]");
    }
    auto rng = stream(p.seed, 0x100 + view);
    std::normal_distribution<double> normal(0.0, 1.0);
    const bool noisy = p.read_noise_sigma > 0 || p.shot_noise_scale > 0;
    Tensor out(img.shape());
    for (int n = 0; n < img.n(); ++n)
      for (int c = 0; c < img.c(); ++c)
        for (std::size_t i = 0; i < img.shape().plane(); ++i) {
          double s = p.gain * std::pow(static_cast<double>(img.plane(n, c)[i]), p.gamma);
          if (p.illum_field) s *= p.illum_field->plane(0, 0)[i];
          if (noisy) {
            const double sd = std::sqrt(p.read_noise_sigma * p.read_noise_sigma + p.shot_noise_scale * s);
            s += sd * normal(rng);
          }
          out.plane(n, c)[i] = static_cast<real>(std::clamp(s, 0.0, 1.0));
        }
    return out;
  };
  return {apply(gt.left, 0), apply(gt.right, 1)};
}

double noise_free_mean(const StereoPair& gt, const DegradationParams& p) {
  double sum = 0;
  std::size_t count = 0;
  for (const Tensor* img : {&gt.left, &gt.right}) {
    for (int n = 0; n < img->n(); ++n)
      for (int c = 0; c < img->c(); ++c)
        for (std::size_t i = 0; i < img->shape().plane(); ++i) {
          double s = p.gain * std::pow(static_cast<double>(img->plane(n, c)[i]), p.gamma);
          if (p.illum_field) s *= p.illum_field->plane(0, 0)[i];
          sum += s;
          ++count;
        }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

void fit_exposure(DegradationParams& p, const StereoPair& gt, double lo, double hi) {
  if (!(lo > 0 && lo <= hi)) throw ArgumentError("fit_exposure: need 0 < lo <= hi");
  const double m = noise_free_mean(gt, p);
  if (m <= 0) return;
  if (m < lo) p.gain = std::min(1.0, p.gain * lo / m);
  else if (m > hi) p.gain *= hi / m;
}

void StereoSample::validate(int levels) const {
  const Shape& s = gt_left.shape();
  for (const Tensor* t : {&low_left, &low_right, &gt_right}) {
    if (t->shape() != s) {
      throw ValidationError("sample '" + id + "': image shapes differ: " + s.str() + " vs " + t->shape().str());
    }
  }
  const int m = 1 << levels;
  const Shape low{s.n, s.c, (s.h + m - 1) / m, (s.w + m - 1) / m};
  if (gt_low3_left.shape() != low || gt_low3_right.shape() != low) {
    throw ValidationError("sample '" + id + "': low-frequency targets " + gt_low3_left.shape().str() +
                          " do not match " + low.str());
  }
}

Tensor lowfreq_target(const Tensor& gt, int levels) { return decompose(gt, levels).deepest_approx(); }

StereoSample make_sample(const std::string& id, const StereoPair& gt, const DegradationParams& params,
                         int levels) {
  const StereoPair low = degrade(gt, params);
  StereoSample s{id, low.left, low.right, gt.left, gt.right,
                 lowfreq_target(gt.left, levels), lowfreq_target(gt.right, levels),
                 !params.illum_field.has_value()};
  s.validate(levels);
  return s;
}

StereoSample random_crop(const StereoSample& sample, int size, std::uint64_t seed, int levels) {
  const int m = 1 << levels;
  const int H = sample.gt_left.h(), W = sample.gt_left.w();
  if (size <= 0 || size % m != 0) {
    throw ArgumentError("crop size " + std::to_string(size) + " must be a positive multiple of " + std::to_string(m));
  }
  if (size > H || size > W) {
    throw ArgumentError("crop size " + std::to_string(size) + " exceeds image " + std::to_string(H) + "x" +
                        std::to_string(W));
  }
  auto rng = stream(seed, 0xc0);
  const int y0 = m * std::uniform_int_distribution<int>(0, (H - size) / m)(rng);
  const int x0 = m * std::uniform_int_distribution<int>(0, (W - size) / m)(rng);
  auto c = [&](const Tensor& t) { return crop(t, y0, x0, size, size); };
  auto cl = [&](const Tensor& t) { return crop(t, y0 / m, x0 / m, size / m, size / m); };
  return {sample.id,   c(sample.low_left),        c(sample.low_right),        c(sample.gt_left),
          c(sample.gt_right), cl(sample.gt_low3_left), cl(sample.gt_low3_right), sample.uniform_illumination};
}

StereoSample stack_samples(const std::vector<const StereoSample*>& samples) {
  if (samples.empty()) throw ArgumentError("stack_samples: no samples");
  auto gather = [&](Tensor StereoSample::*field) {
    std::vector<Tensor> parts;
    for (const auto* s : samples) parts.push_back(s->*field);
    return concat_batch(parts);
  };
  StereoSample b;
  b.id = samples.front()->id;
  b.low_left = gather(&StereoSample::low_left);
  b.low_right = gather(&StereoSample::low_right);
  b.gt_left = gather(&StereoSample::gt_left);
  b.gt_right = gather(&StereoSample::gt_right);
  b.gt_low3_left = gather(&StereoSample::gt_low3_left);
  b.gt_low3_right = gather(&StereoSample::gt_low3_right);
  return b;
}

StereoPair synthesize_scene(int height, int width, std::uint64_t seed, int max_disparity) {
  if (height < 1 || width < 1) throw ArgumentError("synthesize_scene: bad size");
  if (max_disparity <= 0) max_disparity = std::max(1, width / 16);
  auto rng = stream(seed, 0x5ce);
  auto u = [&](double lo, double hi) { return uniform(rng, lo, hi); };

  struct Layer {
    int kind;  // 0 rectangle, 1 ellipse
    double cx, cy, rx, ry;
    double color[3];
    int texture;  // 0 flat, 1 stripes, 2 checker, 3 rings
    double freq, phase, angle, contrast;
    int disparity;
  };
  double bg0[3], bg1[3];
  for (int c = 0; c < 3; ++c) {
    bg0[c] = u(0.15, 0.85);
    bg1[c] = u(0.15, 0.85);
  }
  const double bg_freq = u(0.02, 0.08), bg_angle = u(0.0, 3.14159);
  const int count = std::uniform_int_distribution<int>(4, 8)(rng);
  std::vector<Layer> layers(count);
  for (auto& l : layers) {
    l.kind = std::uniform_int_distribution<int>(0, 1)(rng);
    l.cx = u(0.0, width);
    l.cy = u(0.0, height);
    l.rx = u(0.08, 0.3) * width;
    l.ry = u(0.08, 0.3) * height;
    for (double& c : l.color) c = u(0.05, 0.95);
    l.texture = std::uniform_int_distribution<int>(0, 3)(rng);
    l.freq = u(0.15, 0.6);
    l.phase = u(0.0, 6.283);
    l.angle = u(0.0, 3.14159);
    l.contrast = u(0.1, 0.3);
    l.disparity = std::uniform_int_distribution<int>(1, max_disparity)(rng);
  }
  std::stable_sort(layers.begin(), layers.end(),
                   [](const Layer& a, const Layer& b) { return a.disparity < b.disparity; });

  auto render = [&](int view_shift_sign) {
    Tensor img({1, 3, height, width});
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double t = static_cast<double>(y) / std::max(1, height - 1);
        const double tex = 0.05 * std::sin(bg_freq * (x * std::cos(bg_angle) + y * std::sin(bg_angle)) * 6.283);
        double px[3];
        for (int c = 0; c < 3; ++c) px[c] = bg0[c] * (1 - t) + bg1[c] * t + tex;
        for (const auto& l : layers) {
          // Right view sees each layer shifted left by its disparity.
          const double lx = x + view_shift_sign * l.disparity - l.cx;
          const double ly = y - l.cy;
          const double nx = lx / l.rx, ny = ly / l.ry;
          const bool inside = l.kind == 0 ? (std::abs(nx) <= 1 && std::abs(ny) <= 1) : (nx * nx + ny * ny <= 1);
          if (!inside) continue;
          const double along = lx * std::cos(l.angle) + ly * std::sin(l.angle);
          double m = 0.0;
          switch (l.texture) {
            case 1: m = std::sin(l.freq * along + l.phase); break;
            case 2: m = (static_cast<int>(std::floor(lx * l.freq / 2)) + static_cast<int>(std::floor(ly * l.freq / 2))) % 2 == 0 ? 1 : -1; break;
            case 3: m = std::sin(l.freq * std::sqrt(lx * lx + ly * ly) + l.phase); break;
            default: break;
          }
          for (int c = 0; c < 3; ++c) px[c] = l.color[c] * (1 + l.contrast * m);
        }
        for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = static_cast<real>(std::clamp(px[c], 0.02, 0.98));
      }
    return img;
  };
  return {render(0), render(1)};
}

namespace {

constexpr char kArrayMagic[4] = {'W', 'D', 'C', 'A'};
constexpr std::uint32_t kArrayVersion = 1;
constexpr std::uint32_t kDtypeF32 = 1;

std::vector<std::size_t> split_order(std::size_t n, double val_fraction) {
  (void)val_fraction;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

Tensor cached_target(const DatasetOptions& opt, const std::string& id, const char* view, const Tensor& gt) {
  if (opt.cache_dir.empty()) return lowfreq_target(gt, opt.levels);
  const fs::path path = fs::path(opt.cache_dir) / (id + "_" + view + ".low" + std::to_string(opt.levels) + ".arr");
  const int m = 1 << opt.levels;
  const Shape expected{gt.n(), gt.c(), (gt.h() + m - 1) / m, (gt.w() + m - 1) / m};
  if (fs::exists(path)) {
    Tensor t = read_array(path.string());
    if (t.shape() == expected) return t;
  }
  fs::create_directories(opt.cache_dir);
  Tensor t = lowfreq_target(gt, opt.levels);
  write_array(path.string(), t);
  return t;
}

Dataset assemble(const std::vector<std::string>& ids, const std::vector<StereoPair>& gts,
                 const std::vector<int>& is_val, const DatasetOptions& opt) {
  const std::size_t n = ids.size();
  // A seeded permutation decides which pairs get non-uniform illumination.
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  auto rng = stream(opt.seed, 0xa11);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_uniform = static_cast<std::size_t>(std::llround(opt.uniform_fraction * static_cast<double>(n)));
  std::vector<bool> uniform_illum(n, false);
  for (std::size_t k = 0; k < n_uniform && k < n; ++k) uniform_illum[perm[k]] = true;

  Dataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& gt = gts[i];
    auto params = DegradationParams::sample(mix(opt.seed, i + 1), !uniform_illum[i], gt.left.h(), gt.left.w(),
                                            opt.ranges);
    fit_exposure(params, gt, opt.ranges.exposure_min, opt.ranges.exposure_max);
    const StereoPair low = degrade(gt, params);
    StereoSample s{ids[i], low.left, low.right, gt.left, gt.right,
                   cached_target(opt, ids[i], "L", gt.left), cached_target(opt, ids[i], "R", gt.right),
                   uniform_illum[i]};
    s.validate(opt.levels);
    (is_val[i] ? ds.val : ds.train).push_back(std::move(s));
  }
  return ds;
}

std::vector<int> ratio_split(std::size_t n, double val_fraction) {
  if (val_fraction < 0 || val_fraction > 1) throw ArgumentError("val_fraction must lie in [0, 1]");
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  std::vector<int> v(n, 0);
  const auto order = split_order(n, val_fraction);
  for (std::size_t k = n - n_val; k < n; ++k) v[order[k]] = 1;
  return v;
}

}  // namespace

Dataset build_dataset(const std::string& root_dir, const std::string& manifest_path, const DatasetOptions& opt) {
  if (!fs::is_directory(root_dir)) throw IngestionError("dataset directory not found: " + root_dir);
  std::set<std::string> lefts, rights;
  for (const auto& entry : fs::directory_iterator(root_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    auto ends = [&](const std::string& suf) {
      return name.size() > suf.size() && name.compare(name.size() - suf.size(), suf.size(), suf) == 0;
    };
    if (ends("_L.png")) lefts.insert(name.substr(0, name.size() - 6));
    if (ends("_R.png")) rights.insert(name.substr(0, name.size() - 6));
  }
  std::vector<std::string> offenders;
  for (const auto& id : lefts)
    if (!rights.count(id)) offenders.push_back(id + "_R.png");
  for (const auto& id : rights)
    if (!lefts.count(id)) offenders.push_back(id + "_L.png");

  std::vector<std::string> ids;
  std::vector<int> is_val;
  if (!manifest_path.empty()) {
    std::ifstream in(manifest_path);
    if (!in) throw IngestionError("cannot open manifest: " + manifest_path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::istringstream ls(line);
      std::string id, split;
      if (!(ls >> id)) continue;
      if (!(ls >> split) || (split != "train" && split != "val")) {
        throw IngestionError("manifest line " + std::to_string(lineno) + ": expected '<scene_id> train|val'");
      }
      if (!lefts.count(id) && !rights.count(id)) offenders.push_back(id + "_L.png/_R.png");
      ids.push_back(id);
      is_val.push_back(split == "val");
    }
  } else {
    ids.assign(lefts.begin(), lefts.end());
    ids.erase(std::remove_if(ids.begin(), ids.end(), [&](const std::string& id) { return !rights.count(id); }),
              ids.end());
    is_val = ratio_split(ids.size(), opt.val_fraction);
  }
  if (!offenders.empty()) {
    std::string msg = "missing counterpart views in " + root_dir + ":";
    for (const auto& o : offenders) msg += " " + o;
    throw IngestionError(msg);
  }

  std::vector<StereoPair> gts;
  for (const auto& id : ids) {
    StereoPair p{read_png((fs::path(root_dir) / (id + "_L.png")).string()),
                 read_png((fs::path(root_dir) / (id + "_R.png")).string())};
    if (p.left.shape() != p.right.shape()) {
      throw IngestionError("scene '" + id + "': left " + p.left.shape().str() + " and right " +
                           p.right.shape().str() + " sizes differ");
    }
    gts.push_back(std::move(p));
  }
  return assemble(ids, gts, is_val, opt);
}

Dataset synthetic_dataset(int pairs, int height, int width, const DatasetOptions& opt) {
  if (pairs < 0) throw ArgumentError("synthetic_dataset: negative pair count");
  std::vector<std::string> ids;
  std::vector<StereoPair> gts;
  for (int i = 0; i < pairs; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synth_%04d", i);
    ids.emplace_back(buf);
    gts.push_back(synthesize_scene(height, width, mix(opt.seed, 0x5000 + i)));
  }
  return assemble(ids, gts, ratio_split(ids.size(), opt.val_fraction), opt);
}

void write_array(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write array file " + path);
  out.write(kArrayMagic, 4);
  const std::uint32_t header[2] = {kArrayVersion, kDtypeF32};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  const std::int32_t dims[4] = {t.n(), t.c(), t.h(), t.w()};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  std::vector<float> buf(t.values().begin(), t.values().end());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw IoError("short write on " + path);
}

Tensor read_array(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open array file " + path);
  char magic[4];
  std::uint32_t header[2];
  std::int32_t dims[4];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in || std::memcmp(magic, kArrayMagic, 4) != 0) throw IoError(path + ": not an array file");
  if (header[0] != kArrayVersion || header[1] != kDtypeF32) throw IoError(path + ": unsupported version or dtype");
  const Shape s{dims[0], dims[1], dims[2], dims[3]};
  std::vector<float> buf(s.numel());
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw IoError(path + ": truncated data");
  return Tensor(s, std::vector<real>(buf.begin(), buf.end()));
}

WDCI_NAMESPACE_END
