#pragma once

#include <stdexcept>
#include <string>

namespace dopbc {

// Every library failure derives from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidSizeError : public Error { using Error::Error; };
class ConnectivityError : public Error { using Error::Error; };
class CompatibilityError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class IndexError : public Error { using Error::Error; };
class DimensionalityError : public Error { using Error::Error; };
class InfeasibilityError : public Error { using Error::Error; };
class CapabilityError : public Error { using Error::Error; };
class InsufficientDataError : public Error { using Error::Error; };

// Configuration problems carry the dotted path of the offending field.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace dopbc
