#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rdistill {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// A class had no examples (or zero teacher mass) where a per-class
/// normalizer was required.
class MissingClassError : public Error {
 public:
  explicit MissingClassError(std::size_t class_index, const std::string& what)
      : Error(what), class_index_(class_index) {}

  /// Zero-based class index.
  std::size_t class_index() const noexcept { return class_index_; }

 private:
  std::size_t class_index_;
};

/// NaN/inf encountered during optimization or a divergence guard tripped.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rdistill
