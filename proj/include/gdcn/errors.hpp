#pragma once

#include <stdexcept>
#include <string>

namespace gdcn {

enum class ErrorCode {
  config = 1,
  shape = 2,
  numerical = 3,
  io = 4,
  format = 5,
  invalid_argument = 6,
};

/// Base class of every exception thrown by the library. The code is what the
/// C API reports; the message is what `gdcn_last_error` returns.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorCode::shape, what) {}
};

class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(ErrorCode::config, key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorCode::numerical, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::io, what) {}
};

/// Malformed input file; carries the file and 1-based line (0 when the error
/// is not tied to a line).
class FormatError : public Error {
 public:
  FormatError(std::string file, std::size_t line, const std::string& what)
      : Error(ErrorCode::format,
              file + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what),
        file_(std::move(file)),
        line_(line) {}
  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorCode::invalid_argument, what) {}
};

}  // namespace gdcn
