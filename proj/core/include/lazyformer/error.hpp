#pragma once

#include <stdexcept>
#include <string>

namespace lazyformer {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API precondition (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity appeared where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid model, attention or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Sequence longer than the model supports.
class LengthError : public Error {
 public:
  using Error::Error;
};

/// Attention cache does not match the consuming layer.
class CacheError : public Error {
 public:
  using Error::Error;
};

/// Token id outside the vocabulary.
class VocabError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input; `position()` is the 0-based offset of the problem.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " (at position " + std::to_string(position) + ")"),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Benchmark plan rejected before any timed run.
class PlanError : public Error {
 public:
  using Error::Error;
};

}  // namespace lazyformer
