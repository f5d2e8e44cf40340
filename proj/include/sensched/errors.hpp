#pragma once

#include <stdexcept>
#include <string>

namespace sensched {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fixed-point iteration failed to converge or produced non-finite values.
class NonConvergence : public Error {
 public:
  using Error::Error;
};

/// An argument lies outside its documented domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Vector/matrix dimensions do not match the declared layer shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A schedule violates the one-sensor-per-channel assignment constraint.
class InvalidAction : public Error {
 public:
  using Error::Error;
};

/// The enumerable state space exceeds the solver's capacity bound.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// A policy table does not cover the full truncated state space.
class IncompletePolicy : public Error {
 public:
  using Error::Error;
};

/// A training loss evaluated to NaN/Inf; the run must abort.
class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

/// A gradient contains NaN/Inf; the run must abort.
class NonFiniteGradient : public Error {
 public:
  using Error::Error;
};

/// Random system generation kept drawing unusable instances.
class GenerationFailure : public Error {
 public:
  using Error::Error;
};

/// An experiment configuration failed validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace sensched
