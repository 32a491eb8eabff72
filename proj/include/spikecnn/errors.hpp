#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spikecnn {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values (thresholds out of order, zero time steps, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data rejected before processing (non-finite samples, bad annotations).
class InputError : public Error {
 public:
  using Error::Error;
};

// Tensor or layer shapes that do not chain.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated file. Carries the byte offset where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  [[nodiscard]] std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Well-formed file using a feature or version this code does not read.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch)
      : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}

  [[nodiscard]] int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace spikecnn
