#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rsae {

// Base for every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or invalid input data (bad cells, nonpositive se, rank-deficient design).
class DataError : public Error {
 public:
  using Error::Error;
};

// Prior hyperparameters that fail the posterior-propriety conditions.
class PriorError : public Error {
 public:
  using Error::Error;
};

// A Gibbs sweep produced a non-finite state or a sampler could not draw.
class SamplerError : public Error {
 public:
  explicit SamplerError(const std::string& what, std::size_t iteration = 0)
      : Error(what), iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

// Iterative estimator ran out of its iteration budget.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace rsae
