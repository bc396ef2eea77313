#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace orientmp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents are incompatible with the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// A caller-supplied argument violates an operation precondition.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A model, run, or layer configuration is inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset container. Carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(std::uint64_t offset, const std::string& what)
      : Error("format error at byte " + std::to_string(offset) + ": " + what), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace orientmp
