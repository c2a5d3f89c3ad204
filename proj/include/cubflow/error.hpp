#pragma once

#include <stdexcept>
#include <string>

namespace cubflow {

/// Caller supplied arguments that violate a precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation produced non-finite values, a singular system, or similar.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative eigen-solver exhausted its iteration budget.
class ConvergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// A user supplied field failed (threw or returned a non-finite value) at a node.
class FieldEvaluationError : public NumericalError {
 public:
  FieldEvaluationError(std::size_t node, const std::string& what)
      : NumericalError("field evaluation failed at node " + std::to_string(node) + ": " + what),
        node_(node) {}

  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

}  // namespace cubflow
