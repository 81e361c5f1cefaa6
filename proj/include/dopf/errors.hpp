#pragma once

#include <stdexcept>
#include <string>

namespace dopf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Feeder document could not be turned into a valid FeederGraph.
class ParseError : public Error {
 public:
  enum class Kind { Syntax, Semantic, Topology };

  ParseError(Kind kind, int line, const std::string& what)
      : Error(format(kind, line, what)), kind_(kind), line_(line) {}

  Kind kind() const noexcept { return kind_; }
  /// 1-based line of the offending record, 0 when the error is not tied to a line.
  int line() const noexcept { return line_; }

 private:
  static std::string format(Kind kind, int line, const std::string& what) {
    std::string prefix;
    switch (kind) {
      case Kind::Syntax: prefix = "syntax error"; break;
      case Kind::Semantic: prefix = "semantic error"; break;
      case Kind::Topology: prefix = "topology error"; break;
    }
    if (line > 0) prefix += " (line " + std::to_string(line) + ")";
    return prefix + ": " + what;
  }

  Kind kind_;
  int line_;
};

/// Forward-backward sweep failed to converge or collapsed.
class SweepError : public Error {
 public:
  enum class Kind { NotConverged, Diverged };

  SweepError(Kind kind, int sweeps, double mismatch, const std::string& what)
      : Error(what), kind_(kind), sweeps_(sweeps), mismatch_(mismatch) {}

  Kind kind() const noexcept { return kind_; }
  int sweeps() const noexcept { return sweeps_; }
  double mismatch() const noexcept { return mismatch_; }

 private:
  Kind kind_;
  int sweeps_;
  double mismatch_;
};

/// Inputs to a model builder are inconsistent (missing angles, bad DG ratings, ...).
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Lossless initializer cannot satisfy the operating limits.
class InfeasibleInitialization : public Error {
 public:
  using Error::Error;
};

/// Taylor expansion requested at a point where it is undefined.
class DegenerateLinearization : public Error {
 public:
  DegenerateLinearization(int branch, const std::string& what) : Error(what), branch_(branch) {}
  int branch() const noexcept { return branch_; }

 private:
  int branch_;
};

/// Two objects that must describe the same index space do not.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A conic subproblem could not be solved to optimality inside a driver.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Scenario or settings override rejected before any model is built.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A file could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dopf
