#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ktraffic {

// Invalid parameters or configuration (CLI exit code 2).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation.
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

// Integration or fitting failure (CLI exit code 3).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File system failure (CLI exit code 4).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Steady-state search ran out of time; carries the last state it reached.
class ConvergenceError : public NumericalError {
public:
    ConvergenceError(const std::string& what, double time, double residual, std::vector<double> last)
        : NumericalError(what), time_(time), residual_(residual), last_(std::move(last)) {}

    double time() const noexcept { return time_; }
    double residual() const noexcept { return residual_; }
    const std::vector<double>& last_state() const noexcept { return last_; }

private:
    double time_;
    double residual_;
    std::vector<double> last_;
};

}  // namespace ktraffic
