#pragma once

#include <vector>

#include "wdci/autograd.hpp"

WDCI_NAMESPACE_BEGIN

/// Differentiable tensor operations. All take and return rank-4 variables.
namespace ops {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, real s);
/// Scalar sum of all elements.
Var sum(const Var& a);
Var mean(const Var& a);
/// Scalar sum(a * weights) with constant weights; handy as a probe objective.
Var dot(const Var& a, const Tensor& weights);

/// Stride-1 cross-correlation. `weight` is (Cout, Cin / groups, k, k);
/// `bias` is (1, Cout, 1, 1) or undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int padding, int groups = 1);

/// x * w broadcast per channel, w of shape (N, C, 1, 1).
Var mul_channel(const Var& x, const Var& w);
Var concat_channels(const std::vector<Var>& xs);
Var slice_channels(const Var& x, int begin, int count);

Var gelu(const Var& x);
Var sigmoid(const Var& x);

/// (N, C, H, W) -> (N, C, 1, 1).
Var global_avg_pool(const Var& x);
/// Per-pixel normalisation across channels with affine (1, C, 1, 1) gamma/beta.
Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta, real eps = 1e-5);
/// x is (N, G*C, H, W); softmax across the G channel groups at every (c, h, w).
Var softmax_groups(const Var& x, int groups);

/// Space-to-depth: each factor x factor block becomes factor^2 channels,
/// channel index c * factor^2 + dy * factor + dx.
Var pixel_unshuffle(const Var& x, int factor);

/// Orthonormal Haar analysis, packed as [cA | cH | cV | cD] channel blocks.
Var haar_dwt(const Var& x);
/// Inverse of haar_dwt.
Var haar_idwt(const Var& packed);

/// Per-row attention between two (N, C, H, W) maps:
/// out(n, h, i, j) = softmax_j(sum_c a(n, c, h, i) * b(n, c, h, j)), shape (N, H, W, W).
/// max_disparity > 0 restricts attention to |i - j| <= max_disparity.
Var row_affinity(const Var& a, const Var& b, int max_disparity = 0);
/// out(n, c, h, i) = sum_j t(n, h, i, j) * x(n, c, h, j).
Var row_aggregate(const Var& t, const Var& x);

/// Channel-token attention: softmax_j(scale * <q_i, k_j>) over flattened
/// spatial positions, shape (N, 1, C, C).
Var channel_affinity(const Var& q, const Var& k, real scale);
/// out(n, i, p) = sum_j a(n, 0, i, j) * v(n, j, p).
Var channel_aggregate(const Var& a, const Var& v);

/// Euclidean norm of all elements; zero gradient at the origin.
Var l2_norm(const Var& x);

/// Mean over elements of |Re| + |Im| of the unnormalised 2D DFT of (a - b),
/// taken per (n, c) plane.
Var fft_l1(const Var& a, const Var& b);

struct SsimOptions {
  int window = 11;
  real sigma = 1.5;
  real peak = 1.0;
};
/// Mean SSIM over all valid window positions, channels and batch items.
Var ssim(const Var& a, const Var& b, const SsimOptions& opt = {});

}  // namespace ops

WDCI_NAMESPACE_END
