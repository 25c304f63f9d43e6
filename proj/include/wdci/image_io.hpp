#pragma once

#include <string>

#include "wdci/tensor.hpp"

WDCI_NAMESPACE_BEGIN

/// 8-bit PNG -> (1, 3, H, W) in [0, 1]. Gray is replicated, alpha dropped.
Tensor read_png(const std::string& path);

/// (1, C, H, W) with C in {1, 3}; values are clamped to [0, 1] and rounded
/// to the nearest of 256 levels.
void write_png(const std::string& path, const Tensor& image);

/// Round-trips values through the 8-bit quantisation used by write_png.
Tensor quantize_8bit(const Tensor& image);

WDCI_NAMESPACE_END
