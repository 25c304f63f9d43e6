#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "wdci/data.hpp"

WDCI_NAMESPACE_BEGIN

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the wdci tool: train, enhance, evaluate, lfswap, ablate.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct LowNormalPair {
  std::string id;
  Tensor low;
  Tensor normal;
};

struct LfswapRow {
  std::string pair_id;
  int levels = 0;
  double psnr_s_normal = 0;  // PSNR(s_normal, normal)
  double psnr_s_low = 0;     // PSNR(s_low, normal)
  double psnr_low = 0;       // PSNR(low, normal)
};

/// Procedural low/normal pairs: gain in [0.1, 0.3], uniform illumination,
/// mild noise.
std::vector<LowNormalPair> synthetic_lowlight_pairs(int count, int size, std::uint64_t seed);
/// Reads dir/{id}_low.png + dir/{id}_normal.png.
std::vector<LowNormalPair> read_lowlight_pairs(const std::string& dir);
LfswapRow lfswap_pair(const LowNormalPair& pair, int levels);

WDCI_NAMESPACE_END
