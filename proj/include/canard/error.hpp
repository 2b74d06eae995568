#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace canard {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The cost term c/(d - x) was evaluated at (or numerically at) its pole.
class PoleError : public Error {
 public:
  PoleError(double x, double d)
      : Error("cost pole: |d - x| below threshold (x=" + std::to_string(x) +
              ", d=" + std::to_string(d) + ")"),
        x_(x),
        d_(d) {}
  double x() const noexcept { return x_; }
  double d() const noexcept { return d_; }

 private:
  double x_;
  double d_;
};

/// A numerical procedure failed (non-convergence, degenerate expansion, ...).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Invalid parameters or configuration. `path` names the offending field.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& what)
      : Error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace canard
