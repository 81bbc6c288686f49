#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kdsel {

// Root of every error thrown by the library. Callers that only care about
// "something went wrong in kdsel" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NumericFault : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

class BatchTooSmall : public Error {
 public:
  using Error::Error;
};

class InternalError : public Error {
 public:
  using Error::Error;
};

class DetectorSkip : public Error {
 public:
  DetectorSkip(std::string detector, const std::string& reason)
      : Error(detector + " skipped: " + reason), detector_(std::move(detector)) {}
  const std::string& detector() const noexcept { return detector_; }

 private:
  std::string detector_;
};

}  // namespace kdsel
