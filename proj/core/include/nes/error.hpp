#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nes {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. `line()` is 1-based, 0 when not line oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what);

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

/// Input decoded fine but holds no tokens.
class EmptyCorpusError : public Error {
 public:
  using Error::Error;
};

/// Bytes that are not valid UTF-8.
class EncodingError : public Error {
 public:
  EncodingError(const std::string& source, std::size_t byte_offset);

  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

/// Invalid combination of configuration values. The message names the field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A persisted artifact written by an incompatible format version.
class VersionError : public Error {
 public:
  using Error::Error;
};

/// Training data holds only one class; callers keep ranking with the prior model.
class SingleClassError : public Error {
 public:
  using Error::Error;
};

/// Caller-supplied value out of contract (wrong length, bad range).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Operation is not valid in the current session state.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Every sentence of the pool has been labeled.
class SessionComplete : public Error {
 public:
  SessionComplete() : Error("session complete: no unlabeled sentences remain") {}
};

}  // namespace nes
