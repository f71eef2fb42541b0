#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace lcmm {

// Base for every data or estimation failure raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
  public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

class DataError : public Error {
  public:
    using Error::Error;
};

// V = Z B Z' + sigma^2 I is not numerically positive definite for some class.
class SingularCovarianceError : public Error {
  public:
    explicit SingularCovarianceError(std::size_t class_index)
        : Error("covariance of class " + std::to_string(class_index + 1) +
                " is numerically singular (residual SD too small)"),
          class_index_(class_index) {}
    std::size_t class_index() const noexcept { return class_index_; }

  private:
    std::size_t class_index_;
};

class EstimationError : public Error {
  public:
    EstimationError(const std::string& what, std::vector<std::string> diagnostics)
        : Error(what), diagnostics_(std::move(diagnostics)) {}
    const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

  private:
    std::vector<std::string> diagnostics_;
};

}  // namespace lcmm
