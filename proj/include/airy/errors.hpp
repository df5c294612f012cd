#pragma once
// Error types shared by all modules.

#include <stdexcept>
#include <string>
#include <vector>

namespace airy {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Violated precondition on inputs (shape, norms, flags).
struct PreconditionError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

// Integer accumulation left the representable range.
struct OverflowError : Error {
  using Error::Error;
};

// A divisor fell under the admissible floor. The witness names the mode.
struct SmallDivisorError : Error {
  std::vector<int> ell;
  int j = 0;
  int h = 0;
  double divisor = 0.0;
  double bound = 0.0;
  SmallDivisorError(const std::string& what, std::vector<int> l, int jj, int hh, double d, double b)
      : Error(what), ell(std::move(l)), j(jj), h(hh), divisor(d), bound(b) {}
};

// Iteration or series that failed to converge within its budget.
struct ConvergenceError : Error {
  int iterations = 0;
  double last_size = 0.0;
  ConvergenceError(const std::string& what, int it, double last)
      : Error(what), iterations(it), last_size(last) {}
};

struct AliasingError : Error {
  double energy = 0.0;
  AliasingError(const std::string& what, double e) : Error(what), energy(e) {}
};

// A posteriori check of a change of variables exceeded its threshold.
struct ConjugationError : Error {
  double residual = 0.0;
  ConjugationError(const std::string& what, double r) : Error(what), residual(r) {}
};

}  // namespace airy
