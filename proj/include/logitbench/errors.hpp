#pragma once

#include <stdexcept>
#include <string>

namespace logitbench {

// Every failure the library raises derives from Error. The CLI maps the
// category onto its exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not line up (matmul, forward, bias add).
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid parameters: bad dims, tau <= 0, unknown config keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent data: labels out of range, ragged files, empty classes.
class DataError : public Error {
 public:
  using Error::Error;
};

// A caller broke a precondition of the API itself (backward on a non-scalar,
// lr_at past the last epoch).
class ContractError : public Error {
 public:
  using Error::Error;
};

// A computation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

class DivergedError : public Error {
 public:
  DivergedError(std::size_t epoch, std::size_t step, const std::string& what)
      : Error("training diverged at epoch " + std::to_string(epoch) + ", step " +
              std::to_string(step) + ": " + what),
        epoch_(epoch),
        step_(step) {}

  std::size_t epoch() const { return epoch_; }
  std::size_t step() const { return step_; }

 private:
  std::size_t epoch_;
  std::size_t step_;
};

}  // namespace logitbench
