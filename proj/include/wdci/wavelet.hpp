#pragma once

#include <utility>
#include <vector>

#include "wdci/tensor.hpp"

WDCI_NAMESPACE_BEGIN

/// One level of an orthonormal 2D Haar decomposition.
///
/// For a 2x2 block [[a, b], [c, d]]:
///   cA = (a + b + c + d) / 2
///   cH = (a + b - c - d) / 2   horizontal edges (vertical high-pass)
///   cV = (a - b + c - d) / 2   vertical edges (horizontal high-pass)
///   cD = (a - b - c + d) / 2
struct WaveletBands {
  Tensor cA;
  Tensor cH;
  Tensor cV;
  Tensor cD;
};

/// Multi-level decomposition. levels[i] holds the bands of level i + 1; only
/// the deepest cA is needed for reconstruction, shallower cA are kept for
/// inspection. Reflective padding applied before decomposition is recorded.
struct WaveletPyramid {
  std::vector<WaveletBands> levels;
  int pad_bottom = 0;
  int pad_right = 0;

  int depth() const { return static_cast<int>(levels.size()); }
  const Tensor& deepest_approx() const;
};

WaveletBands dwt2(const Tensor& x);
Tensor idwt2(const WaveletBands& bands);

WaveletPyramid decompose(const Tensor& x, int levels);
Tensor reconstruct(const WaveletPyramid& pyramid);

/// Swaps the deepest approximation between two images decomposed to the
/// same depth. Returns (normal approximation + low details,
///                      low approximation + normal details).
std::pair<Tensor, Tensor> low_frequency_exchange(const Tensor& low, const Tensor& normal, int levels);

/// Packed transforms used by the differentiable ops: (N, C, H, W) <->
/// (N, 4C, H/2, W/2) with channel blocks [cA | cH | cV | cD].
Tensor haar_analysis(const Tensor& x);
Tensor haar_synthesis(const Tensor& packed);

WDCI_NAMESPACE_END
