#pragma once

#include <stdexcept>
#include <string>

namespace dynaprune {

// All library failures derive from Error so callers can catch one type at the
// CLI boundary and still branch on the kind when they care.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed, truncated or corrupted file; structural mismatch against a header.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Well-formed container holding values that violate a data invariant
// (non-finite entries, rows that are not probability distributions).
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

}  // namespace dynaprune
