#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace hmx {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mismatched vector/matrix extents.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, divergence, failed decompositions.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss. checkpoint() holds the serialized
// model from the last finite step (the same bytes save() would write).
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, std::string checkpoint)
      : NumericError(what), checkpoint_(std::move(checkpoint)) {}
  const std::string& checkpoint() const noexcept { return checkpoint_; }

 private:
  std::string checkpoint_;
};

// Malformed files; the message names the field path or byte offset.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace hmx
