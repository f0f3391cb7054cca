#pragma once

#include <stdexcept>
#include <string>

namespace panokit {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or size disagreement between operands.
struct DimensionError : Error {
  using Error::Error;
};

// Invalid configuration value or unknown option.
struct ConfigError : Error {
  using Error::Error;
};

// File missing, unreadable, or malformed beyond repair.
struct IoError : Error {
  using Error::Error;
};

// Corner annotation violates the layout contract.
struct InvalidAnnotationError : Error {
  using Error::Error;
};

// Too few corner peaks to form a closed floor plan.
struct DegenerateLayoutError : Error {
  using Error::Error;
};

// Latitude too close to the horizon for a plane projection.
struct HorizonDegenerateError : Error {
  using Error::Error;
};

// Metric has no defined value (e.g. zero-area union).
struct UndefinedMetricError : Error {
  using Error::Error;
};

// Inverse transform of a spectrum that is not conjugate-symmetric.
struct SymmetryViolationError : Error {
  using Error::Error;
};

}  // namespace panokit
