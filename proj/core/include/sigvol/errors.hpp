#pragma once

#include <stdexcept>
#include <string>

namespace sigvol {

/// Precondition violated by the caller (bad word, mismatched alphabet, off-grid maturity, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A numerical routine failed to produce a usable result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Regression or root solving failed during a calibration.
class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sigvol
