#ifndef OCTLC_ERROR_HPP_
#define OCTLC_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace octlc {

// Base for all errors raised by the library. The category string is stable
// and used by the CLI to pick an exit code.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("io", message) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message)
      : Error("validation", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message)
      : Error("config", message) {}
};

// Raised when training hits a non-finite loss or another numeric failure.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message)
      : Error("numeric", message) {}
};

}  // namespace octlc

#endif  // OCTLC_ERROR_HPP_
