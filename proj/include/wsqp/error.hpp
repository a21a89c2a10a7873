#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace wsqp {

/// Raised when an input or a computed result violates a documented invariant.
/// The message always starts with the module name and the invariant.
class InvariantError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an iterative method stops without meeting its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvariantError(what);
}

/// Short scientific notation for diagnostics.
inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

}  // namespace wsqp
