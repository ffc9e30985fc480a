#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ttvi {

// Shape/extent disagreement between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation (t outside (0,1), ...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Caller broke a documented precondition that is not a shape issue.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed or truncated file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite value encountered during optimization.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::vector<double> loss_trace)
      : std::runtime_error(what), loss_trace_(std::move(loss_trace)) {}

  const std::vector<double>& loss_trace() const noexcept { return loss_trace_; }

 private:
  std::vector<double> loss_trace_;
};

}  // namespace ttvi
