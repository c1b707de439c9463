#pragma once

#include <stdexcept>
#include <string>

namespace abp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed or non-finite input data (CSV cells, weight files).
class DataError : public Error {
public:
  using Error::Error;
};

/// Incompatible matrix/vector shapes.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// Parameter outside its admissible range.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Training loss became non-finite.
class DivergenceError : public Error {
public:
  DivergenceError(int epoch, const std::string& what)
      : Error(what), epoch_(epoch) {}

  int epoch() const noexcept { return epoch_; }

private:
  int epoch_;
};

}  // namespace abp
