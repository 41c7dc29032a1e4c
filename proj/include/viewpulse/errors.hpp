#pragma once

#include <stdexcept>
#include <string>

namespace viewpulse {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file: bad magic, bad version, payload shorter than
/// the header promises. The message carries the byte offset where known.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Missing episodes, modalities, or label files.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN/Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Correlation requested on a constant or zero series.
class UndefinedCorrelationError : public Error {
 public:
  using Error::Error;
};

/// Standardization requested on a constant series.
class DegenerateSeriesError : public Error {
 public:
  using Error::Error;
};

}  // namespace viewpulse
