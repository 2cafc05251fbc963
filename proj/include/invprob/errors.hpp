#pragma once

#include <stdexcept>
#include <string>

namespace invprob {

// Vector/matrix sizes do not agree.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation (log of a
// non-positive value, y outside [0, beta], zero-norm vector, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Kernel or object evaluation produced a non-finite value.
class EvaluationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The discretized problem carries no usable information (e.g. all-zero kernel).
class DegenerateProblemError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Equality constraints cannot be met inside the admissible coefficient box.
class InfeasibleError : public std::runtime_error {
public:
    InfeasibleError(const std::string& what, double best_residual)
        : std::runtime_error(what), best_residual_(best_residual) {}
    double best_residual() const noexcept { return best_residual_; }

private:
    double best_residual_;
};

// Iterates of an iterative solver blew up.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace invprob
