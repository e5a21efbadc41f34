#pragma once

#include <stdexcept>
#include <string>

namespace posereg {

// Invalid arguments use std::invalid_argument; the types below cover the
// domain-specific failure modes callers may want to catch separately.

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a geometric quantity cannot be formed (zero-norm quaternion,
/// camera inside an object, collapsed average).
class DegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, int epoch, int batch)
      : std::runtime_error(what), epoch_(epoch), batch_(batch) {}
  int epoch() const { return epoch_; }
  int batch() const { return batch_; }

 private:
  int epoch_;
  int batch_;
};

}  // namespace posereg
