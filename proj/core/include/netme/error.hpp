#pragma once

#include <stdexcept>
#include <string>

namespace netme {

enum class ErrorKind { validation, numerical };

// Base for every error the library throws. The kind maps onto the CLI exit
// code contract (validation -> 2, numerical -> 3).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

}  // namespace netme
