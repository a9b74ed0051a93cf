#pragma once

#include <stdexcept>
#include <string>

namespace changen {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A dataset or manifest references something that cannot be read.
class IngestionError : public Error {
 public:
  using Error::Error;
};

/// Inputs violate a documented invariant (sizes, label ranges, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Tensor or array shapes do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint is unreadable, of the wrong version, or built for another config.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Training diverged (non-finite loss).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace changen
