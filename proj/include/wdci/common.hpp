#pragma once

#include <cstddef>
#include <cstdint>

// The library is compiled twice: in float for production use and in double
// for finite-difference gradient checks. The inline namespace keeps both
// builds link-compatible inside one binary.
#ifdef WDCI_REAL_DOUBLE
#define WDCI_ABI_NAMESPACE f64
#else
#define WDCI_ABI_NAMESPACE f32
#endif

#define WDCI_NAMESPACE_BEGIN \
  namespace wdci {           \
  inline namespace WDCI_ABI_NAMESPACE {
#define WDCI_NAMESPACE_END \
  }                        \
  }

WDCI_NAMESPACE_BEGIN

#ifdef WDCI_REAL_DOUBLE
using real = double;
#else
using real = float;
#endif

WDCI_NAMESPACE_END
