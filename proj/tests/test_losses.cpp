#include "doctest.h"
#include "helpers.hpp"
#include "wdci/data.hpp"
#include "wdci/errors.hpp"
#include "wdci/losses.hpp"

using namespace wdci;

namespace {

class IdentityExtractor : public FeatureExtractor {
 public:
  Var features(const Var& x) const override { return x; }
  std::string describe() const override { return "identity"; }
};

Var img(Shape s, std::uint64_t seed) { return Var(testing::random_tensor(s, seed)); }

}  // namespace

TEST_CASE("freq_loss against the naive reference transform") {
  const Tensor one({1, 1, 1, 1}, 1), zero({1, 1, 1, 1}, 0);
  CHECK(freq_loss(Var(one), Var(one), Var(zero), Var(zero)).item() == doctest::Approx(2.0));
  CHECK(testing::dft_l1(one, zero) * 2 == doctest::Approx(2.0));

  for (std::uint64_t s = 0; s < 5; ++s) {
    const Tensor pl = testing::random_tensor({1, 2, 6, 8}, s), pr = testing::random_tensor({1, 2, 6, 8}, s + 10);
    const Tensor gl = testing::random_tensor({1, 2, 6, 8}, s + 20), gr = testing::random_tensor({1, 2, 6, 8}, s + 30);
    const double expect = testing::dft_l1(pl, gl) + testing::dft_l1(pr, gr);
    const double got = freq_loss(Var(pl), Var(pr), Var(gl), Var(gr)).item();
    CHECK(got == doctest::Approx(expect).epsilon(1e-5));
    CHECK(got >= 0);
  }
  const Var a = img({1, 3, 8, 8}, 1);
  CHECK(freq_loss(a, a, a, a).item() == 0);
  CHECK_THROWS_AS(freq_loss(a, a, img({1, 3, 8, 4}, 2), a), ShapeError);
}

TEST_CASE("ssim against the naive windowed reference") {
  for (std::uint64_t s = 0; s < 4; ++s) {
    const Tensor a = testing::random_tensor({1, 2, 16, 14}, s);
    Tensor b = a * 0.8f;
    b += testing::random_tensor({1, 2, 16, 14}, s + 7, 0, 0.2);
    CHECK(ssim(a, b) == doctest::Approx(testing::ssim_naive(a, b)).epsilon(1e-5));
    CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-6);
    CHECK(std::abs(ssim(a, a) - 1.0) < 1e-6);
  }
  CHECK_THROWS_AS(ssim(Tensor({1, 1, 10, 20}), Tensor({1, 1, 10, 20})), ConfigError);
}

TEST_CASE("spatial_loss") {
  const Var a = img({1, 3, 16, 16}, 3), b = img({1, 3, 16, 16}, 4);
  CHECK(std::abs(spatial_loss(a, b, a, b).item()) < 1e-6);
  const double l = spatial_loss(a, b, b, a).item();
  CHECK(l > 0);
  CHECK(l <= 4.0 + 1e-6);  // SSIM lies in [-1, 1] per view
  CHECK_THROWS_AS(spatial_loss(img({1, 1, 8, 8}, 1), img({1, 1, 8, 8}, 1), img({1, 1, 8, 8}, 2),
                               img({1, 1, 8, 8}, 2)),
                  ConfigError);
}

TEST_CASE("perceptual loss follows the printed single-norm form") {
  const ConvStackExtractor phi(3);
  CHECK(phi.layer_count() == 5);
  const Var a = img({1, 3, 8, 8}, 5), b = img({1, 3, 8, 8}, 6);
  CHECK(perceptual_loss(a, b, a, b, &phi).item() == 0);
  // left residual = -(right residual)
  CHECK(perceptual_loss(a, b, b, a, &phi).item() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(perceptual_loss(a, b, b, a, &phi, real(1e-4), true).item() > 0);
  CHECK_THROWS_AS(perceptual_loss(a, b, a, b, nullptr), ConfigError);
}

TEST_CASE("perceptual loss scales with aligned residuals") {
  const IdentityExtractor id;
  const Tensor gl = testing::random_tensor({1, 3, 4, 4}, 1), gr = testing::random_tensor({1, 3, 4, 4}, 2);
  const Tensor d = testing::random_tensor({1, 3, 4, 4}, 3, -0.01, 0.01);
  auto loss = [&](real k) {
    return perceptual_loss(Var(gl + d * k), Var(gr + d * k), Var(gl), Var(gr), &id).item();
  };
  const double expect = 1e-4 * 2.0 * std::sqrt(sum_squares(d));
  CHECK(loss(1) == doctest::Approx(expect).epsilon(1e-4));
  CHECK(loss(10) == doctest::Approx(10 * loss(1)).epsilon(1e-4));
}

TEST_CASE("extractor from stored layers is frozen") {
  std::vector<NamedParam> layers = {{"conv0.weight", Var(testing::random_tensor({4, 3, 3, 3}, 1, -0.3, 0.3), true)},
                                    {"conv0.bias", Var(Tensor({1, 4, 1, 1}), true)},
                                    {"conv1.weight", Var(testing::random_tensor({2, 4, 3, 3}, 2, -0.3, 0.3), true)}};
  const ConvStackExtractor phi(layers);
  CHECK(phi.layer_count() == 2);
  Var p(testing::random_tensor({1, 3, 6, 6}, 3), true);
  backward(perceptual_loss(p, p, img({1, 3, 6, 6}, 4), img({1, 3, 6, 6}, 5), &phi, 1, true));
  CHECK_FALSE(p.grad().empty());
  for (const auto& l : layers) CHECK(l.var.grad().empty());
  CHECK_THROWS_AS(ConvStackExtractor(std::vector<NamedParam>{}), ConfigError);
}

TEST_CASE("total loss") {
  const Shape s{1, 3, 16, 16};
  const Tensor gl = testing::random_tensor(s, 1), gr = testing::random_tensor(s, 2);
  const LossTargets t{gl, gr, lowfreq_target(gl, 1), lowfreq_target(gr, 1)};
  const ConvStackExtractor phi(4);
  const LossConfig cfg;

  SUBCASE("perfect prediction") {
    NetOutput out{Var(gl), Var(gr), Var(t.gt_low_left), Var(t.gt_low_right), {}};
    const LossResult r = total_loss(out, t, &phi, cfg, 1);
    CHECK(std::abs(r.terms.total) < 1e-5);
    for (real v : {r.terms.l_fre, r.terms.l_spa, r.terms.l_fre_1_8, r.terms.l_spa_1_8, r.terms.l_vgg_1_8})
      CHECK(std::abs(v) < 1e-5);
  }
  SUBCASE("zero prediction makes every term positive, total is the exact sum") {
    NetOutput out{Var(Tensor(s)), Var(Tensor(s)), Var(Tensor(t.gt_low_left.shape())),
                  Var(Tensor(t.gt_low_right.shape())), {}};
    const LossResult r = total_loss(out, t, &phi, cfg, 1);
    const LossBreakdown& b = r.terms;
    for (real v : {b.l_fre, b.l_spa, b.l_fre_1_8, b.l_spa_1_8, b.l_vgg_1_8}) CHECK(v > 0);
    CHECK(b.total == b.l_fre + b.l_spa + b.l_fre_1_8 + b.l_spa_1_8 + b.l_vgg_1_8);

    // independent recomputation
    ops::SsimOptions low;
    low.window = 7;
    low.peak = 2;
    const real fre = freq_loss(out.enhanced_left, out.enhanced_right, Var(gl), Var(gr)).item();
    const real spa = spatial_loss(out.enhanced_left, out.enhanced_right, Var(gl), Var(gr)).item();
    const real fre8 = freq_loss(out.lowfreq_left, out.lowfreq_right, Var(t.gt_low_left), Var(t.gt_low_right)).item();
    const real spa8 =
        spatial_loss(out.lowfreq_left, out.lowfreq_right, Var(t.gt_low_left), Var(t.gt_low_right), low).item();
    const real vgg =
        perceptual_loss(out.lowfreq_left, out.lowfreq_right, Var(t.gt_low_left), Var(t.gt_low_right), &phi).item();
    CHECK(b.total == fre + spa + fre8 + spa8 + vgg);
  }
  SUBCASE("disabled terms report zero") {
    LossConfig off = cfg;
    off.use_vgg_low = false;
    off.use_fre = false;
    NetOutput out{Var(Tensor(s)), Var(Tensor(s)), Var(Tensor(t.gt_low_left.shape())),
                  Var(Tensor(t.gt_low_right.shape())), {}};
    const LossResult r = total_loss(out, t, nullptr, off, 1);
    CHECK(r.terms.l_vgg_1_8 == 0);
    CHECK(r.terms.l_fre == 0);
    CHECK(r.terms.total == r.terms.l_spa + r.terms.l_fre_1_8 + r.terms.l_spa_1_8);
  }
}

TEST_CASE("psnr") {
  const Tensor a = testing::random_tensor({1, 3, 8, 8}, 1, 0, 0.8);
  Tensor b = a;
  CHECK(psnr(a, b) == kPsnrCap);
  for (real& v : b.values()) v += 0.1f;
  CHECK(std::abs(psnr(a, b) - 20.0) < 1e-4);
  CHECK(psnr(a, b) == psnr(b, a));
  const Tensor zero({1, 1, 4, 4}, 0), tenth({1, 1, 4, 4}, 0.1f);
  CHECK(std::abs(psnr(zero, tenth) - 20.0) < 1e-5);
  CHECK_THROWS_AS(psnr(a, Tensor({1, 3, 8, 4})), ShapeError);
}

TEST_CASE("binary mse maps") {
  const Tensor a = testing::random_tensor({1, 3, 8, 8}, 1);
  const Tensor held = mse_binary_map(a, a, 0);
  for (real v : held.values()) CHECK(v == 0);
  Tensor b = a;
  b.at(0, 1, 2, 3) += 0.5f;
  b.at(0, 0, 5, 5) += 0.1f;
  const Tensor m0 = mse_binary_map(a, b, 0);
  CHECK(m0.shape() == Shape{1, 1, 8, 8});
  CHECK(m0.at(0, 0, 2, 3) == 1);
  CHECK(m0.at(0, 0, 5, 5) == 1);
  CHECK(m0.at(0, 0, 0, 0) == 0);
  double prev = 1e9;
  for (double thr : {0.0, 0.001, 0.01, 0.1}) {
    double white = 0;
    const Tensor held = mse_binary_map(a, b, thr);
    for (real v : held.values()) white += v;
    CHECK(white <= prev);
    prev = white;
  }
}
