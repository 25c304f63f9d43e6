#pragma once

#include <stdexcept>
#include <string>

#include "wdci/common.hpp"

WDCI_NAMESPACE_BEGIN

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or dimensions are incompatible with an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An argument is outside its permitted domain (level counts, crop sizes).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a precondition (non-finite values, parameter ranges).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Configuration is missing, malformed or inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A wavelet pyramid is structurally incomplete.
class StructureError : public Error {
 public:
  using Error::Error;
};

/// Dataset directory contents are inconsistent.
class IngestionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Training hit a non-finite loss; message carries the diagnostic.
class TrainingAborted : public Error {
 public:
  using Error::Error;
};

WDCI_NAMESPACE_END
