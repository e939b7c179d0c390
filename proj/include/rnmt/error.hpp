#ifndef RNMT_ERROR_HPP
#define RNMT_ERROR_HPP

#include <stdexcept>
#include <string>

namespace rnmt {

// Error classes map onto the CLI exit-code contract:
//   UsageError -> 1, DataError -> 2, NumericError -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UsageError : Error {
  using Error::Error;
};

// Malformed or inconsistent input data (files, dimensions, vocabularies).
struct DataError : Error {
  using Error::Error;
};

// Non-finite losses, divergence.
struct NumericError : Error {
  using Error::Error;
};

// Model file problems (bad magic, version, truncation). A kind of data error.
struct ModelIoError : DataError {
  using DataError::DataError;
};

}  // namespace rnmt

#endif
