#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pdot {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid argument or configuration value.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Dimension or shape mismatch between inputs.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Config file could not be parsed.
class ParseError : public Error {
 public:
  using Error::Error;
};

// File could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// Operation not defined for these inputs (wrong mode or dimension).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// Iterative solver produced non-finite values or exceeded the divergence
// threshold; `step` is the iteration at which it was detected.
class DivergedError : public Error {
 public:
  DivergedError(const std::string& msg, std::int64_t step)
      : Error(msg), step(step) {}
  std::int64_t step;
};

// Root finding or factorization failure inside a numeric kernel.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Linear program has no feasible point; the message carries the certificate.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// Linear program objective is unbounded.
class UnboundedError : public Error {
 public:
  using Error::Error;
};

}  // namespace pdot
