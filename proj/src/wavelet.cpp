#include "wdci/wavelet.hpp"

#include <string>

#include "wdci/errors.hpp"

WDCI_NAMESPACE_BEGIN

namespace {

void require_even(const Shape& s) {
  if (s.h % 2 != 0) throw ShapeError("dwt2: height " + std::to_string(s.h) + " is odd");
  if (s.w % 2 != 0) throw ShapeError("dwt2: width " + std::to_string(s.w) + " is odd");
}

// Core butterfly over one channel plane.
void analysis_plane(const real* in, int H, int W, real* a, real* h, real* v, real* d) {
  const int H2 = H / 2, W2 = W / 2;
  for (int y = 0; y < H2; ++y) {
    const real* r0 = in + static_cast<std::size_t>(2 * y) * W;
    const real* r1 = r0 + W;
    for (int x = 0; x < W2; ++x) {
      const real p = r0[2 * x], q = r0[2 * x + 1], r = r1[2 * x], s = r1[2 * x + 1];
      const std::size_t o = static_cast<std::size_t>(y) * W2 + x;
      a[o] = real(0.5) * ((p + q) + (r + s));
      h[o] = real(0.5) * ((p + q) - (r + s));
      v[o] = real(0.5) * ((p - q) + (r - s));
      d[o] = real(0.5) * ((p - q) - (r - s));
    }
  }
}

void synthesis_plane(const real* a, const real* h, const real* v, const real* d, int H2, int W2,
                     real* out) {
  const int W = 2 * W2;
  for (int y = 0; y < H2; ++y) {
    real* r0 = out + static_cast<std::size_t>(2 * y) * W;
    real* r1 = r0 + W;
    for (int x = 0; x < W2; ++x) {
      const std::size_t o = static_cast<std::size_t>(y) * W2 + x;
      const real A = a[o], Hh = h[o], V = v[o], D = d[o];
      r0[2 * x] = real(0.5) * ((A + Hh) + (V + D));
      r0[2 * x + 1] = real(0.5) * ((A + Hh) - (V + D));
      r1[2 * x] = real(0.5) * ((A - Hh) + (V - D));
      r1[2 * x + 1] = real(0.5) * ((A - Hh) - (V - D));
    }
  }
}

}  // namespace

const Tensor& WaveletPyramid::deepest_approx() const {
  if (levels.empty()) throw StructureError("wavelet pyramid has no levels");
  return levels.back().cA;
}

WaveletBands dwt2(const Tensor& x) {
  const Shape& s = x.shape();
  require_even(s);
  const Shape hs{s.n, s.c, s.h / 2, s.w / 2};
  WaveletBands b{Tensor(hs), Tensor(hs), Tensor(hs), Tensor(hs)};
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      analysis_plane(x.plane(n, c), s.h, s.w, b.cA.plane(n, c), b.cH.plane(n, c),
                     b.cV.plane(n, c), b.cD.plane(n, c));
    }
  return b;
}

Tensor idwt2(const WaveletBands& b) {
  const Shape& s = b.cA.shape();
  if (b.cH.shape() != s || b.cV.shape() != s || b.cD.shape() != s) {
    throw ShapeError("idwt2: band shapes differ: cA " + s.str() + ", cH " + b.cH.shape().str() +
                     ", cV " + b.cV.shape().str() + ", cD " + b.cD.shape().str());
  }
  Tensor out({s.n, s.c, 2 * s.h, 2 * s.w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      synthesis_plane(b.cA.plane(n, c), b.cH.plane(n, c), b.cV.plane(n, c), b.cD.plane(n, c), s.h,
                      s.w, out.plane(n, c));
    }
  return out;
}

WaveletPyramid decompose(const Tensor& x, int levels) {
  if (levels < 1) throw ArgumentError("decompose: levels must be >= 1, got " + std::to_string(levels));
  const int m = 1 << levels;
  WaveletPyramid p;
  p.pad_bottom = (m - x.h() % m) % m;
  p.pad_right = (m - x.w() % m) % m;
  Tensor cur = pad_reflect(x, p.pad_bottom, p.pad_right);
  for (int l = 0; l < levels; ++l) {
    p.levels.push_back(dwt2(cur));
    cur = p.levels.back().cA;
  }
  return p;
}

Tensor reconstruct(const WaveletPyramid& p) {
  if (p.levels.empty()) throw StructureError("reconstruct: pyramid has no levels");
  Tensor cur = p.levels.back().cA;
  for (int l = p.depth() - 1; l >= 0; --l) {
    const auto& lv = p.levels[l];
    if (lv.cH.empty() || lv.cV.empty() || lv.cD.empty()) {
      throw StructureError("reconstruct: level " + std::to_string(l + 1) + " is missing detail bands");
    }
    if (cur.shape() != lv.cH.shape()) {
      throw StructureError("reconstruct: level " + std::to_string(l + 1) + " expects approximation " +
                           lv.cH.shape().str() + ", got " + cur.shape().str());
    }
    cur = idwt2({cur, lv.cH, lv.cV, lv.cD});
  }
  if (p.pad_bottom == 0 && p.pad_right == 0) return cur;
  return crop(cur, 0, 0, cur.h() - p.pad_bottom, cur.w() - p.pad_right);
}

std::pair<Tensor, Tensor> low_frequency_exchange(const Tensor& low, const Tensor& normal, int levels) {
  require_same_shape(low, normal, "low_frequency_exchange");
  WaveletPyramid pl = decompose(low, levels);
  WaveletPyramid pn = decompose(normal, levels);
  std::swap(pl.levels.back().cA, pn.levels.back().cA);
  // pl now carries normal's approximation with low's details.
  return {reconstruct(pl), reconstruct(pn)};
}

Tensor haar_analysis(const Tensor& x) {
  const Shape& s = x.shape();
  require_even(s);
  const int C = s.c;
  Tensor out({s.n, 4 * C, s.h / 2, s.w / 2});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < C; ++c) {
      analysis_plane(x.plane(n, c), s.h, s.w, out.plane(n, c), out.plane(n, C + c),
                     out.plane(n, 2 * C + c), out.plane(n, 3 * C + c));
    }
  return out;
}

Tensor haar_synthesis(const Tensor& packed) {
  const Shape& s = packed.shape();
  if (s.c % 4 != 0) {
    throw ShapeError("haar_synthesis: packed channel count " + std::to_string(s.c) +
                     " is not a multiple of 4");
  }
  const int C = s.c / 4;
  Tensor out({s.n, C, 2 * s.h, 2 * s.w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < C; ++c) {
      synthesis_plane(packed.plane(n, c), packed.plane(n, C + c), packed.plane(n, 2 * C + c),
                      packed.plane(n, 3 * C + c), s.h, s.w, out.plane(n, c));
    }
  return out;
}

WDCI_NAMESPACE_END
