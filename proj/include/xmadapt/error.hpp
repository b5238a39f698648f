#pragma once

#include <stdexcept>
#include <string>

namespace xmadapt {

// Error taxonomy. Every failure the library can produce is one of these; the
// CLI maps each type to a fixed process exit code, so keep the set closed.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape mismatch between tensors (always names both shapes in the message).
struct DimensionError : Error {
  using Error::Error;
};

// An API was used outside its contract (non-scalar backward root, missing
// gradient at an optimizer step, probability outside [0,1], ...).
struct ContractError : Error {
  using Error::Error;
};

// Invalid or inconsistent run configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Dataset problems: missing files, manifest/tensor disagreement, bad masks.
struct DataError : Error {
  using Error::Error;
};

// Malformed binary file (bad magic, version, truncation, shape mismatch).
struct FormatError : Error {
  using Error::Error;
};

// Filesystem-level failure (cannot open/read/write a path).
struct IoError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required (NaN loss, bad gradcheck).
struct NumericError : Error {
  using Error::Error;
};

// Synthetic data generation could not satisfy its constraints.
struct GenerationError : Error {
  using Error::Error;
};

}  // namespace xmadapt
