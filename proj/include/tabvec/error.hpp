#pragma once

#include <stdexcept>
#include <string>

namespace tabvec {

/// Base for every error raised by the library. The CLI maps the concrete
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent run configuration (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unusable input data (exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A file could not be parsed. Carries the offending path and, where
/// meaningful, the 1-based line or 0-based record index.
class ParseError : public DataError {
 public:
  ParseError(std::string path, long location, const std::string& what)
      : DataError(path + (location >= 0 ? ":" + std::to_string(location) : "") +
                  ": " + what),
        path_(std::move(path)),
        location_(location) {}

  const std::string& path() const { return path_; }
  long location() const { return location_; }

 private:
  std::string path_;
  long location_;
};

/// A precomputed table-vector record is missing (exit code 4).
class MissingVectorsError : public Error {
 public:
  using Error::Error;
};

}  // namespace tabvec
