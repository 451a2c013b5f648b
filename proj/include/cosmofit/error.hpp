#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cosmofit {

/// Base for every error raised by the library. The CLI prints `module: what()`.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& what)
      : std::runtime_error(what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

/// Cosmology evaluation left the finite range (overflow for extreme w, wa).
class DomainError : public Error {
 public:
  DomainError(const std::string& what, double z)
      : Error("cosmology", what), z_(z) {}
  double redshift() const noexcept { return z_; }

 private:
  double z_;
};

/// Malformed input file. `line` is 1-based; 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error("dataset", line ? what + " (row " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Cholesky hit a non-positive pivot. `pivot` is 1-based.
class NotPositiveDefinite : public Error {
 public:
  NotPositiveDefinite(const std::string& module, std::size_t pivot)
      : Error(module, "matrix is not positive definite (non-positive pivot " +
                          std::to_string(pivot) + ")"),
        pivot_(pivot) {}
  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

class InvalidArgument : public Error {
 public:
  InvalidArgument(const std::string& module, const std::string& what)
      : Error(module, what) {}
};

}  // namespace cosmofit
