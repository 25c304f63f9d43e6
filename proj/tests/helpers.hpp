#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "wdci/tensor.hpp"

namespace testing {

inline wdci::Tensor random_tensor(wdci::Shape s, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  wdci::Tensor t(s);
  for (auto& v : t.values()) v = static_cast<wdci::real>(u(rng));
  return t;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("wdci_test_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Reference scalar Haar on one 2x2 block, written independently of the
/// library: returns {cA, cH, cV, cD}.
struct HaarBlock {
  double a, h, v, d;
};
inline HaarBlock haar_block(double a, double b, double c, double d) {
  return {(a + b + c + d) / 2, (a + b - c - d) / 2, (a - b + c - d) / 2, (a - b - c + d) / 2};
}

/// Naive unnormalised 2D DFT L1 distance: mean over elements of |Re| + |Im|.
inline double dft_l1(const wdci::Tensor& a, const wdci::Tensor& b) {
  const int H = a.h(), W = a.w();
  double total = 0;
  for (int n = 0; n < a.n(); ++n)
    for (int c = 0; c < a.c(); ++c)
      for (int u = 0; u < H; ++u)
        for (int v = 0; v < W; ++v) {
          double re = 0, im = 0;
          for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
              const double d = double(a.at(n, c, y, x)) - b.at(n, c, y, x);
              const double ang = -2 * M_PI * (double(u) * y / H + double(v) * x / W);
              re += d * std::cos(ang);
              im += d * std::sin(ang);
            }
          total += std::abs(re) + std::abs(im);
        }
  return total / double(a.numel());
}

/// Naive mean SSIM with an 11x11 Gaussian (sigma 1.5) in valid mode.
inline double ssim_naive(const wdci::Tensor& a, const wdci::Tensor& b, int win = 11, double sigma = 1.5,
                         double peak = 1.0) {
  std::vector<double> g(win * win);
  double gs = 0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      const double di = i - win / 2, dj = j - win / 2;
      g[i * win + j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
      gs += g[i * win + j];
    }
  for (auto& v : g) v /= gs;
  const double c1 = std::pow(0.01 * peak, 2), c2 = std::pow(0.03 * peak, 2);
  double total = 0;
  long count = 0;
  for (int n = 0; n < a.n(); ++n)
    for (int c = 0; c < a.c(); ++c)
      for (int y = 0; y + win <= a.h(); ++y)
        for (int x = 0; x + win <= a.w(); ++x) {
          double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
          for (int i = 0; i < win; ++i)
            for (int j = 0; j < win; ++j) {
              const double w = g[i * win + j], va = a.at(n, c, y + i, x + j), vb = b.at(n, c, y + i, x + j);
              ma += w * va;
              mb += w * vb;
              saa += w * va * va;
              sbb += w * vb * vb;
              sab += w * va * vb;
            }
          const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
          total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
          ++count;
        }
  return total / double(count);
}

}  // namespace testing
