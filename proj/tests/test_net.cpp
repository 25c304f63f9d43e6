#include "doctest.h"
#include "helpers.hpp"
#include "wdci/errors.hpp"
#include "wdci/net.hpp"

using namespace wdci;

namespace {

Tensor image(Shape s, std::uint64_t seed) { return testing::random_tensor(s, seed, 0, 1); }

HighFreqTriplet triplet(Shape s, std::uint64_t seed) {
  return {Var(testing::random_tensor(s, seed, -1, 1)), Var(testing::random_tensor(s, seed + 1, -1, 1)),
          Var(testing::random_tensor(s, seed + 2, -1, 1))};
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

void check_rows_stochastic(const Tensor& t, double tol) {
  const int W = t.w();
  for (int n = 0; n < t.n(); ++n)
    for (int y = 0; y < t.c(); ++y)
      for (int q = 0; q < t.h(); ++q) {
        double s = 0;
        for (int k = 0; k < W; ++k) {
          CHECK(t.at(n, y, q, k) >= 0);
          s += t.at(n, y, q, k);
        }
        CHECK(std::abs(s - 1.0) < tol);
      }
}

}  // namespace

TEST_CASE("forward shape contract") {
  const WdciNet net(NetConfig{}, 1);
  const NetOutput out = net.forward(image({2, 3, 64, 64}, 1), image({2, 3, 64, 64}, 2));
  CHECK(out.enhanced_left.shape() == Shape{2, 3, 64, 64});
  CHECK(out.enhanced_right.shape() == Shape{2, 3, 64, 64});
  CHECK(out.lowfreq_left.shape() == Shape{2, 3, 8, 8});
  CHECK(out.lowfreq_right.shape() == Shape{2, 3, 8, 8});
  REQUIRE(out.attention.size() == 3);
  CHECK(out.attention[0].t_l2r.shape() == Shape{2, 32, 32, 32});
  CHECK(out.enhanced_left.value().all_finite());
}

TEST_CASE("forward input validation") {
  const WdciNet net(NetConfig{}, 1);
  CHECK_THROWS_AS(net.forward(image({1, 3, 16, 16}, 1), image({1, 3, 16, 24}, 2)), ShapeError);
  CHECK_THROWS_AS(net.forward(image({1, 1, 16, 16}, 1), image({1, 1, 16, 16}, 2)), ShapeError);
  try {
    net.forward(image({1, 3, 20, 16}, 1), image({1, 3, 20, 16}, 2));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("pad") != std::string::npos);
  }
  Tensor bad = image({1, 3, 16, 16}, 3);
  bad.at(0, 1, 2, 3) = std::numeric_limits<real>::quiet_NaN();
  CHECK_THROWS_AS(net.forward(bad, image({1, 3, 16, 16}, 4)), ValidationError);
}

TEST_CASE("identical seeds give identical networks and outputs") {
  const WdciNet a(NetConfig{}, 9), b(NetConfig{}, 9);
  const Tensor l = image({1, 3, 16, 16}, 1), r = image({1, 3, 16, 16}, 2);
  CHECK(bit_equal(a.forward(l, r).enhanced_left.value(), b.forward(l, r).enhanced_left.value()));
}

TEST_CASE("swapping views swaps outputs bit for bit") {
  const WdciNet net(NetConfig{}, 3);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Tensor l = image({1, 3, 32, 32}, 10 + s), r = image({1, 3, 32, 32}, 20 + s);
    const NetOutput a = net.forward(l, r), b = net.forward(r, l);
    CHECK(bit_equal(a.enhanced_left.value(), b.enhanced_right.value()));
    CHECK(bit_equal(a.enhanced_right.value(), b.enhanced_left.value()));
  }
}

TEST_CASE("outputs are finite across seeds") {
  for (std::uint64_t s = 0; s < 100; ++s) {
    NetConfig cfg;
    cfg.channels = 4;
    const WdciNet net(cfg, s);
    const NetOutput o = net.forward(image({1, 3, 16, 16}, s), image({1, 3, 16, 16}, s + 1000));
    CHECK(o.enhanced_left.value().all_finite());
    CHECK(o.enhanced_right.value().all_finite());
  }
}

TEST_CASE("hf_cim: zero left operand leaves the right view untouched") {
  ParamStore store(4);
  HfCim cim(store, "cim", 8, 0);
  const Shape s{1, 8, 6, 10};
  const HighFreqTriplet zero{Var(Tensor(s)), Var(Tensor(s)), Var(Tensor(s))};
  const HighFreqTriplet right = triplet(s, 5);
  const auto r = cim(zero, right);
  CHECK(bit_equal(r.right.v.value(), right.v.value()));
  CHECK(bit_equal(r.right.h.value(), right.h.value()));
  CHECK(bit_equal(r.right.d.value(), right.d.value()));
}

TEST_CASE("hf_cim: identical views give identical attention maps") {
  ParamStore store(6);
  HfCim cim(store, "cim", 8, 0);
  const HighFreqTriplet t = triplet({2, 8, 5, 7}, 9);
  const auto r = cim(t, t);
  CHECK(max_abs_diff(r.attention.t_l2r.value(), r.attention.t_r2l.value()) < 1e-6);
}

TEST_CASE("hf_cim: attention rows are stochastic") {
  ParamStore store(7);
  HfCim cim(store, "cim", 8, 0);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto r = cim(triplet({1, 8, 4, 9}, 100 + s), triplet({1, 8, 4, 9}, 200 + s));
    check_rows_stochastic(r.attention.t_l2r.value(), 1e-5);
    check_rows_stochastic(r.attention.t_r2l.value(), 1e-5);
  }
  CHECK_THROWS_AS(cim(triplet({1, 8, 4, 9}, 1), triplet({1, 8, 4, 8}, 2)), ShapeError);
}

TEST_CASE("hf_cim: disparity band restricts attention") {
  ParamStore store(8);
  HfCim cim(store, "cim", 8, 2);
  const auto r = cim(triplet({1, 8, 3, 12}, 1), triplet({1, 8, 3, 12}, 2));
  const Tensor& t = r.attention.t_l2r.value();
  check_rows_stochastic(t, 1e-5);
  for (int y = 0; y < 3; ++y)
    for (int q = 0; q < 12; ++q)
      for (int k = 0; k < 12; ++k)
        if (std::abs(q - k) > 2) CHECK(t.at(0, y, q, k) == 0);
}

TEST_CASE("dtem shapes and the D mid-band sum") {
  ParamStore store(10);
  Dtem dtem(store, "dtem", 8);
  const HighFreqTriplet t = triplet({1, 8, 6, 6}, 3);
  const Dtem::Trace tr = dtem.trace(t);
  CHECK(tr.out.v.shape() == t.v.shape());
  CHECK(tr.out.h.shape() == t.h.shape());
  CHECK(tr.out.d.shape() == t.d.shape());
  CHECK(bit_equal(tr.d_mid.value(), ops::add(tr.d_from_v, tr.d_from_h).value()));
}

TEST_CASE("iam preserves shape and is the identity with zero branches") {
  ParamStore store(11);
  Iam iam(store, "iam", 16, 7);
  const Var x(testing::random_tensor({1, 16, 16, 16}, 4, -1, 1));
  CHECK(iam(x).shape() == x.shape());
  for (auto& p : store.params()) p.var.mutable_value().fill(0);
  CHECK(bit_equal(iam(x).value(), x.value()));
}

TEST_CASE("low-frequency branch has no cross-view flow") {
  for (bool cim : {false, true}) {
    NetConfig cfg;
    cfg.use_hf_cim = cim;
    const WdciNet net(cfg, 2);
    const Tensor l = image({1, 3, 32, 32}, 1);
    const NetOutput a = net.forward(l, image({1, 3, 32, 32}, 2));
    const NetOutput b = net.forward(l, image({1, 3, 32, 32}, 3));
    CHECK(bit_equal(a.lowfreq_left.value(), b.lowfreq_left.value()));
  }
}

TEST_CASE("ablated structures have fewer parameters and still run") {
  const std::size_t full = WdciNet(NetConfig{}, 0).params().scalar_count();
  for (int k = 0; k < 4; ++k) {
    NetConfig cfg;
    if (k == 0) cfg.use_hf_cim = false;
    if (k == 1) cfg.use_dtem = false;
    if (k == 2) cfg.use_iam = false;
    if (k == 3) cfg.use_downsample_fusion = false;
    const WdciNet net(cfg, 0);
    CHECK(net.params().scalar_count() < full);
    CHECK(cfg.hash() != NetConfig{}.hash());
    const NetOutput o = net.forward(image({1, 3, 16, 16}, 1), image({1, 3, 16, 16}, 2));
    CHECK(o.enhanced_left.value().all_finite());
    CHECK(o.attention.size() == (k == 0 ? 0u : 3u));
  }
}

TEST_CASE("config validation") {
  NetConfig c;
  c.channels = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = NetConfig{};
  c.large_kernel = 4;
  CHECK_THROWS_AS(WdciNet(c, 0), ConfigError);
}
