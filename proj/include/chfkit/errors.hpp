#pragma once

#include <stdexcept>
#include <string>

namespace chfkit {

/// Base class for all chfkit errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad files, schema violations, invalid shapes or configs.
/// The CLI maps this to exit code 2.
struct DataError : Error {
  using Error::Error;
};

/// Numerical failure: divergence, non-finite intermediates, solver caps.
/// The CLI maps this to exit code 3.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace chfkit
