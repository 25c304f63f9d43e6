#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "wdci/data.hpp"
#include "wdci/errors.hpp"
#include "wdci/image_io.hpp"
#include "wdci/wavelet.hpp"

using namespace wdci;
namespace fs = std::filesystem;

namespace {

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

StereoPair gt_pair(int h, int w, std::uint64_t seed) { return synthesize_scene(h, w, seed); }

double mean(const Tensor& t) {
  double s = 0;
  for (real v : t.values()) s += v;
  return s / double(t.numel());
}

}  // namespace

TEST_CASE("identity degradation returns the ground truth") {
  const StereoPair gt = gt_pair(16, 16, 1);
  const StereoPair low = degrade(gt, DegradationParams{});
  CHECK(bit_equal(low.left, gt.left));
  CHECK(bit_equal(low.right, gt.right));
}

TEST_CASE("linear darkening has closed-form PSNR") {
  const StereoPair gt = gt_pair(16, 16, 2);
  DegradationParams p;
  p.gain = 0.1;
  const StereoPair low = degrade(gt, p);
  double se = 0;
  for (std::size_t i = 0; i < gt.left.numel(); ++i) {
    CHECK(low.left.data()[i] == static_cast<real>(0.1 * gt.left.data()[i]));
    se += std::pow(0.9 * gt.left.data()[i], 2);
  }
  const double expect = 10 * std::log10(1.0 / (se / double(gt.left.numel())));
  CHECK(psnr(low.left, gt.left) == doctest::Approx(expect).epsilon(1e-4));
}

TEST_CASE("degradation is deterministic and scene consistent") {
  const StereoPair gt = gt_pair(32, 32, 3);
  const auto p = DegradationParams::sample(7, true, 32, 32);
  const StereoPair a = degrade(gt, p), b = degrade(gt, p);
  CHECK(bit_equal(a.left, b.left));
  CHECK(bit_equal(a.right, b.right));
  // Same params on both views: identical ground truths differ only by noise.
  const StereoPair same = degrade({gt.left, gt.left}, p);
  CHECK(std::abs(mean(same.left) - mean(same.right)) < 0.01);
  const auto q = DegradationParams::sample(7, true, 32, 32);
  CHECK(q.gamma == p.gamma);
  CHECK(q.gain == p.gain);
  CHECK(bit_equal(*q.illum_field, *p.illum_field));
}

TEST_CASE("sampled parameters stay in range and produce dark images") {
  const DegradationRanges r;
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto p = DegradationParams::sample(s, s % 2 == 0, 32, 32);
    CHECK(p.gamma >= r.gamma_min);
    CHECK(p.gamma <= r.gamma_max);
    CHECK(p.gain >= r.gain_min);
    CHECK(p.gain <= r.gain_max);
    CHECK(p.read_noise_sigma >= r.read_noise_min);
    CHECK(p.read_noise_sigma <= r.read_noise_max);
    CHECK_NOTHROW(p.validate());
    const StereoPair low = degrade(gt_pair(32, 32, s), p);
    CHECK(mean(low.left) < 0.25);
  }
}

TEST_CASE("degraded procedural scenes have low-light mean luminance") {
  DatasetOptions opt;
  opt.val_fraction = 0;
  for (int size : {32, 48, 64}) {
    const Dataset ds = synthetic_dataset(60, size, size, opt);
    for (const auto& s : ds.train) {
      CHECK(mean(s.low_left) >= 0.02);
      CHECK(mean(s.low_left) <= 0.15);
      CHECK(mean(s.low_right) >= 0.02);
      CHECK(mean(s.low_right) <= 0.15);
    }
  }
}

TEST_CASE("fit_exposure moves the noise-free mean into the band") {
  const StereoPair gt = gt_pair(16, 16, 4);
  DegradationParams p;
  p.gamma = 2.0;
  p.gain = 1.0;
  fit_exposure(p, gt, 0.025, 0.14);
  CHECK(noise_free_mean(gt, p) == doctest::Approx(0.14));
  p.gain = 1e-4;
  fit_exposure(p, gt, 0.025, 0.14);
  CHECK(noise_free_mean(gt, p) == doctest::Approx(0.025));
  const double inside = p.gain * 2;
  p.gain = inside;
  fit_exposure(p, gt, 0.025, 0.14);
  CHECK(p.gain == inside);
  CHECK_THROWS_AS(fit_exposure(p, gt, 0.2, 0.1), ArgumentError);
}

TEST_CASE("out-of-range parameters are rejected") {
  const StereoPair gt = gt_pair(8, 8, 1);
  DegradationParams p;
  p.gamma = 5;
  CHECK_THROWS_AS(degrade(gt, p), ValidationError);
  p = DegradationParams{};
  p.gain = 0;
  CHECK_THROWS_AS(degrade(gt, p), ValidationError);
  p = DegradationParams{};
  p.read_noise_sigma = -0.1;
  CHECK_THROWS_AS(degrade(gt, p), ValidationError);
  p = DegradationParams{};
  p.illum_field = Tensor({1, 1, 8, 8}, 1.5f);
  CHECK_THROWS_AS(degrade(gt, p), ValidationError);
}

TEST_CASE("illumination field is smooth and bounded") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    for (int size : {64, 128, 200}) {
      const Tensor f = illumination_field(size, size, s);
      CHECK(max_field_step(f) < 0.01);
      for (real v : f.values()) {
        CHECK(v >= 0.2f);
        CHECK(v <= 1.0f);
      }
    }
  }
}

TEST_CASE("random crop shares one window") {
  const StereoPair gt = gt_pair(64, 48, 4);
  const StereoSample s = make_sample("s", gt, DegradationParams::sample(1, false, 64, 48), 3);
  CHECK(random_crop(s, 48, 1, 3).gt_left.shape() == Shape{1, 3, 48, 48});

  // coordinate grid: value encodes (y, x)
  Tensor grid({1, 3, 64, 48});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 48; ++x) grid.at(0, c, y, x) = static_cast<real>(y * 100 + x);
  StereoSample g{"grid", grid, grid, grid, grid, lowfreq_target(grid, 3), lowfreq_target(grid, 3), true};
  const StereoSample c = random_crop(g, 16, 99, 3);
  const real origin = c.gt_left.at(0, 0, 0, 0);
  for (const Tensor* t : {&c.low_left, &c.low_right, &c.gt_right}) CHECK(t->at(0, 0, 0, 0) == origin);
  const int y0 = static_cast<int>(origin) / 100, x0 = static_cast<int>(origin) % 100;
  CHECK(y0 % 8 == 0);
  CHECK(x0 % 8 == 0);
  CHECK(max_abs_diff(c.gt_low3_left, lowfreq_target(c.gt_left, 3)) < 1e-3);

  const StereoSample full = random_crop(g, 48, 5, 3);
  CHECK(full.gt_left.h() == 48);
  CHECK_THROWS_AS(random_crop(g, 12, 1, 3), ArgumentError);
  CHECK_THROWS_AS(random_crop(g, 72, 1, 3), ArgumentError);
}

TEST_CASE("crop from a 400x400 image is reproducible") {
  const StereoPair gt = gt_pair(400, 400, 5);
  const StereoSample s = make_sample("v", gt, DegradationParams::sample(2, true, 400, 400), 3);
  const StereoSample a = random_crop(s, 128, 42), b = random_crop(s, 128, 42);
  CHECK(bit_equal(a.low_left, b.low_left));
  CHECK(bit_equal(a.gt_low3_right, b.gt_low3_right));
}

TEST_CASE("sample validation") {
  const StereoPair gt = gt_pair(16, 16, 6);
  StereoSample s = make_sample("x", gt, DegradationParams{}, 3);
  CHECK(s.gt_low3_left.shape() == Shape{1, 3, 2, 2});
  s.low_right = Tensor({1, 3, 16, 8});
  CHECK_THROWS_AS(s.validate(3), ValidationError);
}

TEST_CASE("synthetic scenes are deterministic with horizontal parallax") {
  const StereoPair a = synthesize_scene(48, 64, 3), b = synthesize_scene(48, 64, 3);
  CHECK(bit_equal(a.left, b.left));
  CHECK(max_abs_diff(a.left, a.right) > 0);
  for (real v : a.left.values()) {
    CHECK(v >= 0);
    CHECK(v <= 1);
  }
}

TEST_CASE("dataset ingestion") {
  const fs::path dir = testing::temp_dir("dataset");
  SUBCASE("empty directory") {
    CHECK(build_dataset(dir.string(), "", {}).empty());
  }
  SUBCASE("10 pairs split 8/2, cached targets match") {
    for (int i = 0; i < 10; ++i) {
      const StereoPair p = gt_pair(32, 24, 100 + i);
      write_png((dir / ("scene" + std::to_string(i) + "_L.png")).string(), p.left);
      write_png((dir / ("scene" + std::to_string(i) + "_R.png")).string(), p.right);
    }
    DatasetOptions opt;
    opt.cache_dir = (dir / "cache").string();
    const Dataset ds = build_dataset(dir.string(), "", opt);
    CHECK(ds.train.size() == 8);
    CHECK(ds.val.size() == 2);
    int uniform = 0;
    for (const auto& s : ds.train) uniform += s.uniform_illumination;
    for (const auto& s : ds.val) uniform += s.uniform_illumination;
    CHECK(uniform == 6);
    const Dataset again = build_dataset(dir.string(), "", opt);  // served from the cache
    for (std::size_t i = 0; i < ds.train.size(); ++i) {
      const Tensor fresh = decompose(again.train[i].gt_left, 3).deepest_approx();
      CHECK(max_abs_diff(again.train[i].gt_low3_left, fresh) < 1e-6);
      CHECK(bit_equal(again.train[i].low_left, ds.train[i].low_left));
    }
    CHECK(fs::exists(dir / "cache" / "scene0_L.low3.arr"));

    std::ofstream(dir / "manifest.txt") << "scene0 val\nscene1 train  # comment\n";
    const Dataset m = build_dataset(dir.string(), (dir / "manifest.txt").string(), {});
    CHECK(m.train.size() == 1);
    CHECK(m.val.size() == 1);
    CHECK(m.val[0].id == "scene0");
  }
  SUBCASE("missing counterpart views are listed") {
    const StereoPair p = gt_pair(16, 16, 1);
    write_png((dir / "a_L.png").string(), p.left);
    write_png((dir / "b_R.png").string(), p.right);
    try {
      build_dataset(dir.string(), "", {});
      FAIL("expected IngestionError");
    } catch (const IngestionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("a_R.png") != std::string::npos);
      CHECK(msg.find("b_L.png") != std::string::npos);
    }
  }
  SUBCASE("missing directory") {
    CHECK_THROWS_AS(build_dataset((dir / "nope").string(), "", {}), IngestionError);
  }
}

TEST_CASE("synthetic dataset split") {
  DatasetOptions opt;
  const Dataset ds = synthetic_dataset(10, 32, 32, opt);
  CHECK(ds.train.size() == 8);
  CHECK(ds.val.size() == 2);
  for (const auto& s : ds.train) CHECK_NOTHROW(s.validate(3));
}

TEST_CASE("array files round-trip and reject garbage") {
  const fs::path dir = testing::temp_dir("arrays");
  const Tensor t = testing::random_tensor({2, 3, 4, 5}, 1);
  write_array((dir / "t.arr").string(), t);
  CHECK(bit_equal(read_array((dir / "t.arr").string()), t));
  std::ofstream(dir / "bad.arr") << "nonsense";
  CHECK_THROWS_AS(read_array((dir / "bad.arr").string()), IoError);
}

TEST_CASE("png round trip quantises to 8 bits") {
  const fs::path dir = testing::temp_dir("png");
  const Tensor t = testing::random_tensor({1, 3, 7, 9}, 3);
  write_png((dir / "x.png").string(), t);
  const Tensor back = read_png((dir / "x.png").string());
  CHECK(bit_equal(back, quantize_8bit(t)));
  CHECK(max_abs_diff(back, t) <= 0.5 / 255 + 1e-6);
  CHECK_THROWS_AS(read_png((dir / "missing.png").string()), IoError);
}
