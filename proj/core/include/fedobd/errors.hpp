#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedobd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Two models, blocks or deltas disagree on ids, tensor names or shapes.
class IncompatibleStructure : public Error {
 public:
  using Error::Error;
};

class MalformedMessage : public Error {
 public:
  MalformedMessage(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class UnsupportedVersion : public Error {
 public:
  explicit UnsupportedVersion(unsigned version)
      : Error("unsupported protocol version " + std::to_string(version)), version_(version) {}

  unsigned version() const noexcept { return version_; }

 private:
  unsigned version_;
};

/// A round was requested from a model log that never stored it or already evicted it.
class MissingState : public Error {
 public:
  using Error::Error;
};

}  // namespace fedobd
