#pragma once

#include <stdexcept>
#include <string>

namespace hbrw {

// Base for every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition violations (bad parameters, malformed inputs).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Green function at lambda = 0 requested where it is infinite.
class DivergentIntegral : public Error {
 public:
  using Error::Error;
};

class QuadratureBudgetExceeded : public Error {
 public:
  using Error::Error;
};

class BracketNotFound : public Error {
 public:
  using Error::Error;
};

class StepSizeUnderflow : public Error {
 public:
  using Error::Error;
};

// Absorbing box lost more mass than the configured budget.
class BoxTooSmall : public Error {
 public:
  using Error::Error;
};

class GridTooCoarse : public Error {
 public:
  using Error::Error;
};

// Fit preconditions: nonpositive data, short window, singular design.
class FitError : public Error {
 public:
  using Error::Error;
};

}  // namespace hbrw
