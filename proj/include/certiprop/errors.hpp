#pragma once

#include <stdexcept>
#include <string>

namespace certiprop {

// Malformed input: bad files, flags, or dimension mismatches.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

class ParseError : public ValidationError {
public:
  using ValidationError::ValidationError;
};

// A certified computation could not be completed (overflow, singular frame, ...).
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class SingularMatrixError : public NumericError {
public:
  using NumericError::NumericError;
};

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw DimensionError("dimension mismatch: " + what);
}

}  // namespace certiprop
