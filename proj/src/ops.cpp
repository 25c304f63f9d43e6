#include "wdci/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "wdci/errors.hpp"
#include "wdci/wavelet.hpp"

WDCI_NAMESPACE_BEGIN

namespace ops {

namespace {

Tensor& grad_of(Node& self, std::size_t i) { return self.parents[i]->grad_buffer(); }
bool wants(Node& self, std::size_t i) { return self.parents[i]->requires_grad; }

void require_same(const Var& a, const Var& b, const char* what) {
  require_same_shape(a.value(), b.value(), what);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out = a.value() + b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (wants(self, 0)) grad_of(self, 0) += self.grad;
    if (wants(self, 1)) grad_of(self, 1) += self.grad;
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  Tensor out = a.value() - b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (wants(self, 0)) grad_of(self, 0) += self.grad;
    if (wants(self, 1)) grad_of(self, 1) -= self.grad;
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out(a.shape());
  const real* pa = a.value().data();
  const real* pb = b.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = pa[i] * pb[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const Tensor& va = self.parents[0]->value;
    const Tensor& vb = self.parents[1]->value;
    const real* g = self.grad.data();
    if (wants(self, 0)) {
      real* d = grad_of(self, 0).data();
      for (std::size_t i = 0; i < va.numel(); ++i) d[i] += g[i] * vb.data()[i];
    }
    if (wants(self, 1)) {
      real* d = grad_of(self, 1).data();
      for (std::size_t i = 0; i < va.numel(); ++i) d[i] += g[i] * va.data()[i];
    }
  });
}

Var scale(const Var& a, real s) {
  return make_result(a.value() * s, {a}, [s](Node& self) {
    Tensor& d = grad_of(self, 0);
    for (std::size_t i = 0; i < d.numel(); ++i) d.data()[i] += s * self.grad.data()[i];
  });
}

Var sum(const Var& a) {
  double acc = 0.0;
  for (real v : a.value().values()) acc += v;
  return make_result(Tensor::scalar(static_cast<real>(acc)), {a}, [](Node& self) {
    const real g = self.grad.data()[0];
    for (real& d : grad_of(self, 0).values()) d += g;
  });
}

Var mean(const Var& a) {
  const auto count = static_cast<real>(a.value().numel());
  return scale(sum(a), real(1) / count);
}

Var dot(const Var& a, const Tensor& weights) {
  require_same_shape(a.value(), weights, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.numel(); ++i) {
    acc += static_cast<double>(a.value().data()[i]) * weights.data()[i];
  }
  return make_result(Tensor::scalar(static_cast<real>(acc)), {a}, [weights](Node& self) {
    const real g = self.grad.data()[0];
    Tensor& d = grad_of(self, 0);
    for (std::size_t i = 0; i < d.numel(); ++i) d.data()[i] += g * weights.data()[i];
  });
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

struct ConvGeom {
  int N, Cin, H, W, Cout, k, pad, groups, cin_g, cout_g, Ho, Wo;
};

ConvGeom conv_geometry(const Shape& x, const Shape& w, int pad, int groups) {
  if (groups < 1 || x.c % groups != 0 || w.n % groups != 0) {
    throw ShapeError("conv2d: channels " + std::to_string(x.c) + " -> " + std::to_string(w.n) +
                     " not divisible by groups " + std::to_string(groups));
  }
  if (w.c * groups != x.c) {
    throw ShapeError("conv2d: weight " + w.str() + " expects " + std::to_string(w.c * groups) +
                     " input channels, got " + std::to_string(x.c));
  }
  if (w.h != w.w) throw ShapeError("conv2d: only square kernels, got " + w.str());
  ConvGeom g{x.n, x.c, x.h, x.w, w.n, w.h, pad, groups, w.c, w.n / groups, 0, 0};
  g.Ho = x.h + 2 * pad - w.h + 1;
  g.Wo = x.w + 2 * pad - w.w + 1;
  if (g.Ho <= 0 || g.Wo <= 0) throw ShapeError("conv2d: kernel larger than padded input " + x.str());
  return g;
}

// Visits every (output row, input row, column range) triple of one kernel tap.
template <typename F>
void for_each_tap_row(const ConvGeom& g, int ky, int kx, F&& f) {
  const int ox0 = std::max(0, g.pad - kx);
  const int ox1 = std::min(g.Wo, g.W + g.pad - kx);
  if (ox0 >= ox1) return;
  const int oy0 = std::max(0, g.pad - ky);
  const int oy1 = std::min(g.Ho, g.H + g.pad - ky);
  for (int oy = oy0; oy < oy1; ++oy) {
    const int iy = oy + ky - g.pad;
    f(oy * g.Wo, iy * g.W + kx - g.pad, ox0, ox1);
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int padding, int groups) {
  const ConvGeom g = conv_geometry(x.shape(), weight.shape(), padding, groups);
  if (bias.defined() && (bias.shape() != Shape{1, g.Cout, 1, 1})) {
    throw ShapeError("conv2d: bias shape " + bias.shape().str());
  }
  const bool pointwise = g.k == 1 && g.pad == 0;
  const std::size_t in_plane = static_cast<std::size_t>(g.H) * g.W;
  const std::size_t out_plane = static_cast<std::size_t>(g.Ho) * g.Wo;
  const Tensor& X = x.value();
  const real* Wt = weight.value().data();
  Tensor out({g.N, g.Cout, g.Ho, g.Wo});

  for (int n = 0; n < g.N; ++n) {
    for (int oc = 0; oc < g.Cout; ++oc) {
      real* o = out.plane(n, oc);
      std::fill(o, o + out_plane, bias.defined() ? bias.value().data()[oc] : real(0));
      const int grp = oc / g.cout_g;
      for (int icg = 0; icg < g.cin_g; ++icg) {
        const real* in = X.plane(n, grp * g.cin_g + icg);
        const real* wk = Wt + (static_cast<std::size_t>(oc) * g.cin_g + icg) * g.k * g.k;
        if (pointwise) {
          const real wv = wk[0];
          for (std::size_t p = 0; p < in_plane; ++p) o[p] += wv * in[p];
          continue;
        }
        for (int ky = 0; ky < g.k; ++ky) {
          for (int kx = 0; kx < g.k; ++kx) {
            const real wv = wk[ky * g.k + kx];
            for_each_tap_row(g, ky, kx, [&](int orow, int irow, int ox0, int ox1) {
              real* op = o + orow;
              const real* ip = in + irow;
              for (int ox = ox0; ox < ox1; ++ox) op[ox] += wv * ip[ox];
            });
          }
        }
      }
    }
  }

  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(out), inputs, [g, pointwise, in_plane, out_plane](Node& self) {
    const Tensor& X = self.parents[0]->value;
    const real* Wt = self.parents[1]->value.data();
    const bool need_x = wants(self, 0);
    const bool need_w = wants(self, 1);
    real* dX = need_x ? grad_of(self, 0).data() : nullptr;
    real* dW = need_w ? grad_of(self, 1).data() : nullptr;
    if (self.parents.size() > 2 && wants(self, 2)) {
      real* dB = grad_of(self, 2).data();
      for (int n = 0; n < g.N; ++n)
        for (int oc = 0; oc < g.Cout; ++oc) {
          const real* dy = self.grad.plane(n, oc);
          double acc = 0.0;
          for (std::size_t p = 0; p < out_plane; ++p) acc += dy[p];
          dB[oc] += static_cast<real>(acc);
        }
    }
    for (int n = 0; n < g.N; ++n) {
      for (int oc = 0; oc < g.Cout; ++oc) {
        const real* dy = self.grad.plane(n, oc);
        const int grp = oc / g.cout_g;
        for (int icg = 0; icg < g.cin_g; ++icg) {
          const int ic = grp * g.cin_g + icg;
          const real* in = X.plane(n, ic);
          real* dx = need_x ? dX + (static_cast<std::size_t>(n) * g.Cin + ic) * in_plane : nullptr;
          const std::size_t wbase = (static_cast<std::size_t>(oc) * g.cin_g + icg) * g.k * g.k;
          if (pointwise) {
            const real wv = Wt[wbase];
            real acc = 0;
            for (std::size_t p = 0; p < in_plane; ++p) {
              if (dx) dx[p] += wv * dy[p];
              acc += dy[p] * in[p];
            }
            if (dW) dW[wbase] += acc;
            continue;
          }
          for (int ky = 0; ky < g.k; ++ky) {
            for (int kx = 0; kx < g.k; ++kx) {
              const real wv = Wt[wbase + ky * g.k + kx];
              real acc = 0;
              for_each_tap_row(g, ky, kx, [&](int orow, int irow, int ox0, int ox1) {
                const real* dyp = dy + orow;
                const real* ip = in + irow;
                if (dx) {
                  real* dxp = dx + irow;
                  for (int ox = ox0; ox < ox1; ++ox) dxp[ox] += wv * dyp[ox];
                }
                for (int ox = ox0; ox < ox1; ++ox) acc += dyp[ox] * ip[ox];
              });
              if (dW) dW[wbase + ky * g.k + kx] += acc;
            }
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Channel plumbing

Var mul_channel(const Var& x, const Var& w) {
  const Shape& s = x.shape();
  if (w.shape() != Shape{s.n, s.c, 1, 1}) {
    throw ShapeError("mul_channel: weights " + w.shape().str() + " for input " + s.str());
  }
  Tensor out(s);
  const std::size_t P = s.plane();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const real wv = w.value().at(n, c, 0, 0);
      const real* in = x.value().plane(n, c);
      real* o = out.plane(n, c);
      for (std::size_t p = 0; p < P; ++p) o[p] = in[p] * wv;
    }
  return make_result(std::move(out), {x, w}, [s, P](Node& self) {
    const Tensor& X = self.parents[0]->value;
    const Tensor& Wv = self.parents[1]->value;
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const real* g = self.grad.plane(n, c);
        if (wants(self, 0)) {
          real* d = grad_of(self, 0).plane(n, c);
          const real wv = Wv.at(n, c, 0, 0);
          for (std::size_t p = 0; p < P; ++p) d[p] += g[p] * wv;
        }
        if (wants(self, 1)) {
          const real* in = X.plane(n, c);
          double acc = 0.0;
          for (std::size_t p = 0; p < P; ++p) acc += static_cast<double>(g[p]) * in[p];
          grad_of(self, 1).at(n, c, 0, 0) += static_cast<real>(acc);
        }
      }
  });
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels of zero inputs");
  Shape s = xs.front().shape();
  s.c = 0;
  std::vector<int> offsets;
  for (const auto& x : xs) {
    const Shape& t = x.shape();
    if (t.n != s.n || t.h != s.h || t.w != s.w) {
      throw ShapeError("concat_channels: " + xs.front().shape().str() + " vs " + t.str());
    }
    offsets.push_back(s.c);
    s.c += t.c;
  }
  Tensor out(s);
  const std::size_t P = s.plane();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Tensor& v = xs[i].value();
    for (int n = 0; n < s.n; ++n)
      std::copy(v.plane(n, 0), v.plane(n, 0) + v.c() * P, out.plane(n, offsets[i]));
  }
  return make_result(std::move(out), xs, [offsets, s, P](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      if (!wants(self, i)) continue;
      Tensor& d = grad_of(self, i);
      for (int n = 0; n < s.n; ++n) {
        const real* g = self.grad.plane(n, offsets[i]);
        real* dp = d.plane(n, 0);
        for (std::size_t p = 0; p < d.c() * P; ++p) dp[p] += g[p];
      }
    }
  });
}

Var slice_channels(const Var& x, int begin, int count) {
  const Shape& s = x.shape();
  if (begin < 0 || count <= 0 || begin + count > s.c) {
    throw ShapeError("slice_channels [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") of " + s.str());
  }
  Tensor out({s.n, count, s.h, s.w});
  const std::size_t P = s.plane();
  for (int n = 0; n < s.n; ++n) {
    const real* src = x.value().plane(n, begin);
    std::copy(src, src + count * P, out.plane(n, 0));
  }
  return make_result(std::move(out), {x}, [begin, count, s, P](Node& self) {
    Tensor& d = grad_of(self, 0);
    for (int n = 0; n < s.n; ++n) {
      const real* g = self.grad.plane(n, 0);
      real* dp = d.plane(n, begin);
      for (std::size_t p = 0; p < count * P; ++p) dp[p] += g[p];
    }
  });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

Var gelu(const Var& x) {
  const real inv_sqrt2 = static_cast<real>(1.0 / std::numbers::sqrt2);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const real v = x.value().data()[i];
    out.data()[i] = real(0.5) * v * (real(1) + std::erf(v * inv_sqrt2));
  }
  return make_result(std::move(out), {x}, [inv_sqrt2](Node& self) {
    const real inv_sqrt_2pi = static_cast<real>(1.0 / std::sqrt(2.0 * std::numbers::pi));
    const Tensor& X = self.parents[0]->value;
    real* d = grad_of(self, 0).data();
    for (std::size_t i = 0; i < X.numel(); ++i) {
      const real v = X.data()[i];
      const real cdf = real(0.5) * (real(1) + std::erf(v * inv_sqrt2));
      const real pdf = inv_sqrt_2pi * std::exp(real(-0.5) * v * v);
      d[i] += self.grad.data()[i] * (cdf + v * pdf);
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out.data()[i] = real(1) / (real(1) + std::exp(-x.value().data()[i]));
  }
  Tensor y = out;
  return make_result(std::move(out), {x}, [y = std::move(y)](Node& self) {
    real* d = grad_of(self, 0).data();
    for (std::size_t i = 0; i < y.numel(); ++i) {
      const real s = y.data()[i];
      d[i] += self.grad.data()[i] * s * (real(1) - s);
    }
  });
}

// ---------------------------------------------------------------------------
// Pooling, normalisation, softmax

Var global_avg_pool(const Var& x) {
  const Shape& s = x.shape();
  const std::size_t P = s.plane();
  Tensor out({s.n, s.c, 1, 1});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const real* in = x.value().plane(n, c);
      double acc = 0.0;
      for (std::size_t p = 0; p < P; ++p) acc += in[p];
      out.at(n, c, 0, 0) = static_cast<real>(acc / static_cast<double>(P));
    }
  return make_result(std::move(out), {x}, [s, P](Node& self) {
    Tensor& d = grad_of(self, 0);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const real g = self.grad.at(n, c, 0, 0) / static_cast<real>(P);
        real* dp = d.plane(n, c);
        for (std::size_t p = 0; p < P; ++p) dp[p] += g;
      }
  });
}

Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta, real eps) {
  const Shape& s = x.shape();
  if (gamma.shape() != Shape{1, s.c, 1, 1} || beta.shape() != Shape{1, s.c, 1, 1}) {
    throw ShapeError("layer_norm_channels: affine params must be (1, C, 1, 1) for " + s.str());
  }
  const std::size_t P = s.plane();
  Tensor out(s);
  Tensor xhat(s);
  Tensor inv_std({s.n, 1, s.h, s.w});
  const real* gm = gamma.value().data();
  const real* bt = beta.value().data();
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < P; ++p) {
      double mu = 0.0;
      for (int c = 0; c < s.c; ++c) mu += x.value().plane(n, c)[p];
      mu /= s.c;
      double var = 0.0;
      for (int c = 0; c < s.c; ++c) {
        const double dv = x.value().plane(n, c)[p] - mu;
        var += dv * dv;
      }
      var /= s.c;
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std.plane(n, 0)[p] = static_cast<real>(is);
      for (int c = 0; c < s.c; ++c) {
        const real xh = static_cast<real>((x.value().plane(n, c)[p] - mu) * is);
        xhat.plane(n, c)[p] = xh;
        out.plane(n, c)[p] = gm[c] * xh + bt[c];
      }
    }
  }
  return make_result(std::move(out), {x, gamma, beta},
                     [s, P, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
    const real* gm = self.parents[1]->value.data();
    const bool need_x = wants(self, 0);
    real* dg = wants(self, 1) ? grad_of(self, 1).data() : nullptr;
    real* db = wants(self, 2) ? grad_of(self, 2).data() : nullptr;
    std::vector<double> dxh(s.c);
    for (int n = 0; n < s.n; ++n) {
      for (std::size_t p = 0; p < P; ++p) {
        double m1 = 0.0, m2 = 0.0;
        for (int c = 0; c < s.c; ++c) {
          const real g = self.grad.plane(n, c)[p];
          const real xh = xhat.plane(n, c)[p];
          if (dg) dg[c] += g * xh;
          if (db) db[c] += g;
          dxh[c] = static_cast<double>(g) * gm[c];
          m1 += dxh[c];
          m2 += dxh[c] * xh;
        }
        if (!need_x) continue;
        m1 /= s.c;
        m2 /= s.c;
        const double is = inv_std.plane(n, 0)[p];
        Tensor& dX = grad_of(self, 0);
        for (int c = 0; c < s.c; ++c) {
          dX.plane(n, c)[p] += static_cast<real>(is * (dxh[c] - m1 - xhat.plane(n, c)[p] * m2));
        }
      }
    }
  });
}

Var softmax_groups(const Var& x, int groups) {
  const Shape& s = x.shape();
  if (groups < 1 || s.c % groups != 0) {
    throw ShapeError("softmax_groups: " + std::to_string(s.c) + " channels into " +
                     std::to_string(groups) + " groups");
  }
  const int C = s.c / groups;
  const std::size_t P = s.plane();
  Tensor out(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) {
        real mx = -std::numeric_limits<real>::infinity();
        for (int k = 0; k < groups; ++k) mx = std::max(mx, x.value().plane(n, k * C + c)[p]);
        double z = 0.0;
        for (int k = 0; k < groups; ++k) {
          const real e = std::exp(x.value().plane(n, k * C + c)[p] - mx);
          out.plane(n, k * C + c)[p] = e;
          z += e;
        }
        for (int k = 0; k < groups; ++k) {
          out.plane(n, k * C + c)[p] = static_cast<real>(out.plane(n, k * C + c)[p] / z);
        }
      }
  Tensor y = out;
  return make_result(std::move(out), {x}, [s, C, P, groups, y = std::move(y)](Node& self) {
    Tensor& d = grad_of(self, 0);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < C; ++c)
        for (std::size_t p = 0; p < P; ++p) {
          double dotp = 0.0;
          for (int k = 0; k < groups; ++k) {
            dotp += static_cast<double>(y.plane(n, k * C + c)[p]) * self.grad.plane(n, k * C + c)[p];
          }
          for (int k = 0; k < groups; ++k) {
            const real yk = y.plane(n, k * C + c)[p];
            d.plane(n, k * C + c)[p] +=
                static_cast<real>(yk * (self.grad.plane(n, k * C + c)[p] - dotp));
          }
        }
  });
}

// ---------------------------------------------------------------------------
// Resampling

Var pixel_unshuffle(const Var& x, int factor) {
  const Shape& s = x.shape();
  if (factor < 1) throw ArgumentError("pixel_unshuffle factor must be >= 1");
  if (s.h % factor != 0 || s.w % factor != 0) {
    throw ShapeError("pixel_unshuffle: spatial size " + std::to_string(s.h) + "x" +
                     std::to_string(s.w) + " not divisible by " + std::to_string(factor));
  }
  const int f2 = factor * factor;
  const Shape os{s.n, s.c * f2, s.h / factor, s.w / factor};
  // Index map from output to input element; backward scatters along it.
  std::vector<std::size_t> src(os.numel());
  Tensor out(os);
  std::size_t o = 0;
  for (int n = 0; n < os.n; ++n)
    for (int oc = 0; oc < os.c; ++oc) {
      const int c = oc / f2;
      const int dy = (oc % f2) / factor;
      const int dx = oc % factor;
      for (int y = 0; y < os.h; ++y)
        for (int xx = 0; xx < os.w; ++xx, ++o) {
          src[o] = x.value().index(n, c, y * factor + dy, xx * factor + dx);
          out.data()[o] = x.value().data()[src[o]];
        }
    }
  return make_result(std::move(out), {x}, [src = std::move(src)](Node& self) {
    real* d = grad_of(self, 0).data();
    for (std::size_t i = 0; i < src.size(); ++i) d[src[i]] += self.grad.data()[i];
  });
}

Var haar_dwt(const Var& x) {
  Tensor out = haar_analysis(x.value());
  return make_result(std::move(out), {x}, [](Node& self) {
    // Orthonormal: the adjoint is the inverse.
    grad_of(self, 0) += haar_synthesis(self.grad);
  });
}

Var haar_idwt(const Var& packed) {
  Tensor out = haar_synthesis(packed.value());
  return make_result(std::move(out), {packed}, [](Node& self) {
    grad_of(self, 0) += haar_analysis(self.grad);
  });
}

// ---------------------------------------------------------------------------
// Attention

namespace {

// Softmax of each row of an (rows x cols) block in place; masked entries are 0.
void softmax_rows(real* m, int rows, int cols, int max_disparity) {
  for (int i = 0; i < rows; ++i) {
    real* r = m + static_cast<std::size_t>(i) * cols;
    const int j0 = max_disparity > 0 ? std::max(0, i - max_disparity) : 0;
    const int j1 = max_disparity > 0 ? std::min(cols, i + max_disparity + 1) : cols;
    real mx = -std::numeric_limits<real>::infinity();
    for (int j = j0; j < j1; ++j) mx = std::max(mx, r[j]);
    double z = 0.0;
    for (int j = 0; j < cols; ++j) {
      if (j < j0 || j >= j1) {
        r[j] = 0;
        continue;
      }
      r[j] = std::exp(r[j] - mx);
      z += r[j];
    }
    for (int j = j0; j < j1; ++j) r[j] = static_cast<real>(r[j] / z);
  }
}

// dS = T * (dT - rowsum(T * dT)), in place into dT.
void softmax_rows_backward(const real* t, real* dt, int rows, int cols) {
  for (int i = 0; i < rows; ++i) {
    const real* tr = t + static_cast<std::size_t>(i) * cols;
    real* dr = dt + static_cast<std::size_t>(i) * cols;
    double dotp = 0.0;
    for (int j = 0; j < cols; ++j) dotp += static_cast<double>(tr[j]) * dr[j];
    for (int j = 0; j < cols; ++j) dr[j] = static_cast<real>(tr[j] * (dr[j] - dotp));
  }
}

}  // namespace

Var row_affinity(const Var& a, const Var& b, int max_disparity) {
  require_same(a, b, "row_affinity");
  const Shape s = a.shape();
  const int W = s.w;
  Tensor out({s.n, s.h, W, W});
  for (int n = 0; n < s.n; ++n)
    for (int h = 0; h < s.h; ++h) {
      real* m = out.plane(n, h);
      for (int c = 0; c < s.c; ++c) {
        const real* ar = a.value().plane(n, c) + static_cast<std::size_t>(h) * W;
        const real* br = b.value().plane(n, c) + static_cast<std::size_t>(h) * W;
        for (int i = 0; i < W; ++i) {
          real* mr = m + static_cast<std::size_t>(i) * W;
          const real av = ar[i];
          for (int j = 0; j < W; ++j) mr[j] += av * br[j];
        }
      }
      softmax_rows(m, W, W, max_disparity);
    }
  Tensor t = out;
  return make_result(std::move(out), {a, b}, [s, W, t = std::move(t)](Node& self) {
    Tensor ds = self.grad;
    for (int n = 0; n < s.n; ++n)
      for (int h = 0; h < s.h; ++h) softmax_rows_backward(t.plane(n, h), ds.plane(n, h), W, W);
    const Tensor& A = self.parents[0]->value;
    const Tensor& B = self.parents[1]->value;
    for (int n = 0; n < s.n; ++n)
      for (int h = 0; h < s.h; ++h) {
        const real* m = ds.plane(n, h);
        for (int c = 0; c < s.c; ++c) {
          const std::size_t off = static_cast<std::size_t>(h) * W;
          const real* ar = A.plane(n, c) + off;
          const real* br = B.plane(n, c) + off;
          real* dar = wants(self, 0) ? grad_of(self, 0).plane(n, c) + off : nullptr;
          real* dbr = wants(self, 1) ? grad_of(self, 1).plane(n, c) + off : nullptr;
          for (int i = 0; i < W; ++i) {
            const real* mr = m + static_cast<std::size_t>(i) * W;
            if (dar) {
              real acc = 0;
              for (int j = 0; j < W; ++j) acc += mr[j] * br[j];
              dar[i] += acc;
            }
            if (dbr) {
              const real av = ar[i];
              for (int j = 0; j < W; ++j) dbr[j] += mr[j] * av;
            }
          }
        }
      }
  });
}

Var row_aggregate(const Var& t, const Var& x) {
  const Shape s = x.shape();
  if (t.shape() != Shape{s.n, s.h, s.w, s.w}) {
    throw ShapeError("row_aggregate: attention " + t.shape().str() + " for features " + s.str());
  }
  const int W = s.w;
  Tensor out(s);
  for (int n = 0; n < s.n; ++n)
    for (int h = 0; h < s.h; ++h) {
      const real* m = t.value().plane(n, h);
      for (int c = 0; c < s.c; ++c) {
        const std::size_t off = static_cast<std::size_t>(h) * W;
        const real* xr = x.value().plane(n, c) + off;
        real* orow = out.plane(n, c) + off;
        for (int i = 0; i < W; ++i) {
          const real* mr = m + static_cast<std::size_t>(i) * W;
          real acc = 0;
          for (int j = 0; j < W; ++j) acc += mr[j] * xr[j];
          orow[i] = acc;
        }
      }
    }
  return make_result(std::move(out), {t, x}, [s, W](Node& self) {
    const Tensor& T = self.parents[0]->value;
    const Tensor& X = self.parents[1]->value;
    for (int n = 0; n < s.n; ++n)
      for (int h = 0; h < s.h; ++h) {
        const real* m = T.plane(n, h);
        real* dm = wants(self, 0) ? grad_of(self, 0).plane(n, h) : nullptr;
        for (int c = 0; c < s.c; ++c) {
          const std::size_t off = static_cast<std::size_t>(h) * W;
          const real* xr = X.plane(n, c) + off;
          const real* gr = self.grad.plane(n, c) + off;
          real* dxr = wants(self, 1) ? grad_of(self, 1).plane(n, c) + off : nullptr;
          for (int i = 0; i < W; ++i) {
            const real gi = gr[i];
            const std::size_t row = static_cast<std::size_t>(i) * W;
            if (dm) {
              for (int j = 0; j < W; ++j) dm[row + j] += gi * xr[j];
            }
            if (dxr) {
              for (int j = 0; j < W; ++j) dxr[j] += m[row + j] * gi;
            }
          }
        }
      }
  });
}

Var channel_affinity(const Var& q, const Var& k, real scale_factor) {
  require_same(q, k, "channel_affinity");
  const Shape s = q.shape();
  const int C = s.c;
  const std::size_t P = s.plane();
  Tensor out({s.n, 1, C, C});
  for (int n = 0; n < s.n; ++n) {
    real* m = out.plane(n, 0);
    for (int i = 0; i < C; ++i) {
      const real* qi = q.value().plane(n, i);
      for (int j = 0; j < C; ++j) {
        const real* kj = k.value().plane(n, j);
        real acc = 0;
        for (std::size_t p = 0; p < P; ++p) acc += qi[p] * kj[p];
        m[static_cast<std::size_t>(i) * C + j] = acc * scale_factor;
      }
    }
    softmax_rows(m, C, C, 0);
  }
  Tensor a = out;
  return make_result(std::move(out), {q, k}, [s, C, P, scale_factor, a = std::move(a)](Node& self) {
    Tensor ds = self.grad;
    for (int n = 0; n < s.n; ++n) softmax_rows_backward(a.plane(n, 0), ds.plane(n, 0), C, C);
    const Tensor& Q = self.parents[0]->value;
    const Tensor& K = self.parents[1]->value;
    for (int n = 0; n < s.n; ++n) {
      const real* m = ds.plane(n, 0);
      for (int i = 0; i < C; ++i)
        for (int j = 0; j < C; ++j) {
          const real g = m[static_cast<std::size_t>(i) * C + j] * scale_factor;
          if (wants(self, 0)) {
            real* dq = grad_of(self, 0).plane(n, i);
            const real* kj = K.plane(n, j);
            for (std::size_t p = 0; p < P; ++p) dq[p] += g * kj[p];
          }
          if (wants(self, 1)) {
            real* dk = grad_of(self, 1).plane(n, j);
            const real* qi = Q.plane(n, i);
            for (std::size_t p = 0; p < P; ++p) dk[p] += g * qi[p];
          }
        }
    }
  });
}

Var channel_aggregate(const Var& a, const Var& v) {
  const Shape s = v.shape();
  const int C = s.c;
  if (a.shape() != Shape{s.n, 1, C, C}) {
    throw ShapeError("channel_aggregate: attention " + a.shape().str() + " for values " + s.str());
  }
  const std::size_t P = s.plane();
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    const real* m = a.value().plane(n, 0);
    for (int i = 0; i < C; ++i) {
      real* o = out.plane(n, i);
      for (int j = 0; j < C; ++j) {
        const real w = m[static_cast<std::size_t>(i) * C + j];
        const real* vj = v.value().plane(n, j);
        for (std::size_t p = 0; p < P; ++p) o[p] += w * vj[p];
      }
    }
  }
  return make_result(std::move(out), {a, v}, [s, C, P](Node& self) {
    const Tensor& A = self.parents[0]->value;
    const Tensor& V = self.parents[1]->value;
    for (int n = 0; n < s.n; ++n) {
      const real* m = A.plane(n, 0);
      real* dm = wants(self, 0) ? grad_of(self, 0).plane(n, 0) : nullptr;
      for (int i = 0; i < C; ++i) {
        const real* g = self.grad.plane(n, i);
        for (int j = 0; j < C; ++j) {
          const real* vj = V.plane(n, j);
          if (dm) {
            real acc = 0;
            for (std::size_t p = 0; p < P; ++p) acc += g[p] * vj[p];
            dm[static_cast<std::size_t>(i) * C + j] += acc;
          }
          if (wants(self, 1)) {
            const real w = m[static_cast<std::size_t>(i) * C + j];
            real* dv = grad_of(self, 1).plane(n, j);
            for (std::size_t p = 0; p < P; ++p) dv[p] += w * g[p];
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Loss kernels

Var l2_norm(const Var& x) {
  const double norm = std::sqrt(sum_squares(x.value()));
  return make_result(Tensor::scalar(static_cast<real>(norm)), {x}, [norm](Node& self) {
    if (norm == 0.0) return;
    const double g = self.grad.data()[0] / norm;
    const Tensor& X = self.parents[0]->value;
    real* d = grad_of(self, 0).data();
    for (std::size_t i = 0; i < X.numel(); ++i) d[i] += static_cast<real>(g * X.data()[i]);
  });
}

namespace {

struct Twiddles {
  std::vector<double> cos_t, sin_t;
  explicit Twiddles(int n) : cos_t(n), sin_t(n) {
    for (int i = 0; i < n; ++i) {
      const double ang = 2.0 * std::numbers::pi * i / n;
      cos_t[i] = std::cos(ang);
      sin_t[i] = std::sin(ang);
    }
  }
};

// Separable 2D DFT of a real H x W plane. sign = -1 forward, +1 conjugate.
void dft2(const double* re_in, const double* im_in, double* re_out, double* im_out, int H, int W,
          int sign, const Twiddles& th, const Twiddles& tw) {
  std::vector<double> tr(static_cast<std::size_t>(H) * W), ti(static_cast<std::size_t>(H) * W);
  for (int y = 0; y < H; ++y)
    for (int k = 0; k < W; ++k) {
      double ar = 0.0, ai = 0.0;
      for (int x = 0; x < W; ++x) {
        const int idx = static_cast<int>((static_cast<long long>(k) * x) % W);
        const double c = tw.cos_t[idx], s = sign * tw.sin_t[idx];
        const double vr = re_in[y * W + x];
        const double vi = im_in ? im_in[y * W + x] : 0.0;
        ar += vr * c - vi * s;
        ai += vr * s + vi * c;
      }
      tr[y * W + k] = ar;
      ti[y * W + k] = ai;
    }
  for (int k = 0; k < H; ++k)
    for (int x = 0; x < W; ++x) {
      double ar = 0.0, ai = 0.0;
      for (int y = 0; y < H; ++y) {
        const int idx = static_cast<int>((static_cast<long long>(k) * y) % H);
        const double c = th.cos_t[idx], s = sign * th.sin_t[idx];
        ar += tr[y * W + x] * c - ti[y * W + x] * s;
        ai += tr[y * W + x] * s + ti[y * W + x] * c;
      }
      re_out[k * W + x] = ar;
      im_out[k * W + x] = ai;
    }
}

double sgn(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

}  // namespace

Var fft_l1(const Var& a, const Var& b) {
  require_same(a, b, "fft_l1");
  const Shape s = a.shape();
  const int H = s.h, W = s.w;
  const std::size_t P = s.plane();
  const Twiddles th(H), tw(W);
  // Spectrum signs are all the backward pass needs.
  Tensor sign_re(s), sign_im(s);
  std::vector<double> d(P), fr(P), fi(P);
  double acc = 0.0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      for (std::size_t p = 0; p < P; ++p) {
        d[p] = static_cast<double>(a.value().plane(n, c)[p]) - b.value().plane(n, c)[p];
      }
      dft2(d.data(), nullptr, fr.data(), fi.data(), H, W, -1, th, tw);
      for (std::size_t p = 0; p < P; ++p) {
        acc += std::abs(fr[p]) + std::abs(fi[p]);
        sign_re.plane(n, c)[p] = static_cast<real>(sgn(fr[p]));
        sign_im.plane(n, c)[p] = static_cast<real>(sgn(fi[p]));
      }
    }
  const double count = static_cast<double>(s.numel());
  return make_result(Tensor::scalar(static_cast<real>(acc / count)), {a, b},
                     [s, P, count, sign_re = std::move(sign_re),
                      sign_im = std::move(sign_im)](Node& self) {
    const Twiddles th(s.h), tw(s.w);
    const double g = self.grad.data()[0] / count;
    std::vector<double> gr(P), gi(P), outr(P), outi(P);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        for (std::size_t p = 0; p < P; ++p) {
          gr[p] = sign_re.plane(n, c)[p];
          gi[p] = sign_im.plane(n, c)[p];
        }
        // d/dx_n sum_k |Re F_k| + |Im F_k| = Re(sum_k (s_k + i t_k) e^{+i theta_kn})
        dft2(gr.data(), gi.data(), outr.data(), outi.data(), s.h, s.w, +1, th, tw);
        if (wants(self, 0)) {
          real* da = grad_of(self, 0).plane(n, c);
          for (std::size_t p = 0; p < P; ++p) da[p] += static_cast<real>(g * outr[p]);
        }
        if (wants(self, 1)) {
          real* db = grad_of(self, 1).plane(n, c);
          for (std::size_t p = 0; p < P; ++p) db[p] -= static_cast<real>(g * outr[p]);
        }
      }
  });
}

namespace {

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(size);
  double z = 0.0;
  for (int i = 0; i < size; ++i) {
    const double x = i - (size - 1) / 2.0;
    g[i] = std::exp(-x * x / (2.0 * sigma * sigma));
    z += g[i];
  }
  for (auto& v : g) v /= z;
  return g;
}

// Valid separable filtering H x W -> Ho x Wo.
void filter_valid(const double* in, double* out, int H, int W, const std::vector<double>& g,
                  std::vector<double>& tmp) {
  const int k = static_cast<int>(g.size());
  const int Ho = H - k + 1, Wo = W - k + 1;
  tmp.assign(static_cast<std::size_t>(H) * Wo, 0.0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < Wo; ++x) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += g[t] * in[y * W + x + t];
      tmp[y * Wo + x] = acc;
    }
  for (int y = 0; y < Ho; ++y)
    for (int x = 0; x < Wo; ++x) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += g[t] * tmp[(y + t) * Wo + x];
      out[y * Wo + x] = acc;
    }
}

// Adjoint of filter_valid: Ho x Wo -> H x W, accumulated into out.
void filter_valid_adjoint(const double* in, double* out, int H, int W,
                          const std::vector<double>& g, std::vector<double>& tmp) {
  const int k = static_cast<int>(g.size());
  const int Ho = H - k + 1, Wo = W - k + 1;
  tmp.assign(static_cast<std::size_t>(H) * Wo, 0.0);
  for (int y = 0; y < Ho; ++y)
    for (int x = 0; x < Wo; ++x)
      for (int t = 0; t < k; ++t) tmp[(y + t) * Wo + x] += g[t] * in[y * Wo + x];
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < Wo; ++x)
      for (int t = 0; t < k; ++t) out[y * W + x + t] += g[t] * tmp[y * Wo + x];
}

}  // namespace

Var ssim(const Var& a, const Var& b, const SsimOptions& opt) {
  require_same(a, b, "ssim");
  const Shape s = a.shape();
  if (opt.window < 1 || opt.window % 2 == 0) {
    throw ConfigError("ssim: window size must be odd and positive, got " + std::to_string(opt.window));
  }
  if (s.h < opt.window || s.w < opt.window) {
    throw ConfigError("ssim: image " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                      " smaller than the " + std::to_string(opt.window) + "x" +
                      std::to_string(opt.window) + " window");
  }
  const auto g = gaussian_window(opt.window, opt.sigma);
  const double c1 = (0.01 * opt.peak) * (0.01 * opt.peak);
  const double c2 = (0.03 * opt.peak) * (0.03 * opt.peak);
  const int H = s.h, W = s.w;
  const int Ho = H - opt.window + 1, Wo = W - opt.window + 1;
  const std::size_t P = s.plane();
  const std::size_t Po = static_cast<std::size_t>(Ho) * Wo;
  const double count = static_cast<double>(s.n) * s.c * Po;

  // Per-position partial derivatives of SSIM w.r.t. local statistics,
  // kept for the backward pass: [dmu_x, dmu_y, dExx, dEyy, dExy].
  auto partials = std::make_shared<std::vector<double>>(5 * Po * s.n * s.c);
  std::vector<double> x(P), y(P), xx(P), yy(P), xy(P), tmp;
  std::vector<double> mx(Po), my(Po), exx(Po), eyy(Po), exy(Po);
  double total = 0.0;
  std::size_t plane_idx = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c, ++plane_idx) {
      for (std::size_t p = 0; p < P; ++p) {
        x[p] = a.value().plane(n, c)[p];
        y[p] = b.value().plane(n, c)[p];
        xx[p] = x[p] * x[p];
        yy[p] = y[p] * y[p];
        xy[p] = x[p] * y[p];
      }
      filter_valid(x.data(), mx.data(), H, W, g, tmp);
      filter_valid(y.data(), my.data(), H, W, g, tmp);
      filter_valid(xx.data(), exx.data(), H, W, g, tmp);
      filter_valid(yy.data(), eyy.data(), H, W, g, tmp);
      filter_valid(xy.data(), exy.data(), H, W, g, tmp);
      double* part = partials->data() + 5 * Po * plane_idx;
      for (std::size_t p = 0; p < Po; ++p) {
        const double ux = mx[p], uy = my[p];
        const double a1 = 2 * ux * uy + c1;
        const double a2 = 2 * (exy[p] - ux * uy) + c2;
        const double b1 = ux * ux + uy * uy + c1;
        const double b2 = (exx[p] - ux * ux) + (eyy[p] - uy * uy) + c2;
        const double den = b1 * b2;
        const double sv = a1 * a2 / den;
        total += sv;
        part[p] = (2 * uy * a2 - 2 * uy * a1) / den - sv * (2 * ux / b1 - 2 * ux / b2);
        part[Po + p] = (2 * ux * a2 - 2 * ux * a1) / den - sv * (2 * uy / b1 - 2 * uy / b2);
        part[2 * Po + p] = -sv / b2;
        part[3 * Po + p] = -sv / b2;
        part[4 * Po + p] = 2 * a1 / den;
      }
    }

  return make_result(Tensor::scalar(static_cast<real>(total / count)), {a, b},
                     [s, g, H, W, P, Po, count, partials](Node& self) {
    const double up = self.grad.data()[0] / count;
    std::vector<double> gx(P), gy(P), gxx(P), gyy(P), gxy(P), tmp, buf(Po);
    std::size_t plane_idx = 0;
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c, ++plane_idx) {
        const double* part = partials->data() + 5 * Po * plane_idx;
        std::vector<double>* dst[5] = {&gx, &gy, &gxx, &gyy, &gxy};
        for (int t = 0; t < 5; ++t) {
          std::fill(dst[t]->begin(), dst[t]->end(), 0.0);
          for (std::size_t p = 0; p < Po; ++p) buf[p] = up * part[t * Po + p];
          filter_valid_adjoint(buf.data(), dst[t]->data(), H, W, g, tmp);
        }
        const real* xa = self.parents[0]->value.plane(n, c);
        const real* yb = self.parents[1]->value.plane(n, c);
        if (wants(self, 0)) {
          real* d = grad_of(self, 0).plane(n, c);
          for (std::size_t p = 0; p < P; ++p) {
            d[p] += static_cast<real>(gx[p] + 2 * xa[p] * gxx[p] + yb[p] * gxy[p]);
          }
        }
        if (wants(self, 1)) {
          real* d = grad_of(self, 1).plane(n, c);
          for (std::size_t p = 0; p < P; ++p) {
            d[p] += static_cast<real>(gy[p] + 2 * yb[p] * gyy[p] + xa[p] * gxy[p]);
          }
        }
      }
  });
}

}  // namespace ops

WDCI_NAMESPACE_END
