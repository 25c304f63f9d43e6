#pragma once

// Finite-difference gradient oracle. Compiled in double precision; the
// interface uses only standard types so float translation units can call it.

#include <string>
#include <vector>

namespace gradsuite {

struct CaseResult {
  std::string name;
  double rel_error = 0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double tolerance = 0;
  bool pass() const { return rel_error < tolerance; }
};

inline constexpr double kStep = 1e-3;

/// Every differentiable block on 1x4x8x8 inputs; the SSIM term also on
/// 1x1x16x16 with the default 11x11 window. Tolerance 1e-3.
std::vector<CaseResult> primitive_checks();

/// Total loss of the full network on a 32x32 stereo pair, gradient with
/// respect to 16 sampled parameter entries. Tolerance 1e-2.
CaseResult end_to_end_check();

}  // namespace gradsuite
