#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cvae {

// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: malformed files, invalid configuration, inconsistent shapes.
// The CLI maps these to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

// Numerical breakdown during a computation. The CLI maps these to exit code 3.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public InputError {
 public:
  using InputError::InputError;
};

class NonFiniteInput : public InputError {
 public:
  using InputError::InputError;
};

// backward() called without a matching forward() on the current parameters.
class StaleCache : public Error {
 public:
  using Error::Error;
};

class InvalidSeed : public InputError {
 public:
  using InputError::InputError;
};

class SeedExhausted : public InputError {
 public:
  using InputError::InputError;
};

class DegenerateOrbit : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class EmptySample : public InputError {
 public:
  using InputError::InputError;
};

class NonFiniteLoss : public NumericalError {
 public:
  NonFiniteLoss(std::size_t epoch, const std::string& what)
      : NumericalError(what), epoch_(epoch) {}

  // Zero-based index of the epoch that diverged.
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

class MissingTrainScores : public InputError {
 public:
  using InputError::InputError;
};

class InvalidPercentile : public InputError {
 public:
  using InputError::InputError;
};

class EmptyTestSet : public InputError {
 public:
  using InputError::InputError;
};

class UnknownColumn : public InputError {
 public:
  using InputError::InputError;
};

class EmptyTraining : public InputError {
 public:
  using InputError::InputError;
};

class MissingClass : public InputError {
 public:
  using InputError::InputError;
};

// Parse failure in a text input; carries the 1-based line number.
class ParseError : public InputError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

class TooFewRuns : public InputError {
 public:
  using InputError::InputError;
};

// Both samples of a t-test have zero spread, so t is undefined.
class ZeroVariance : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace cvae
