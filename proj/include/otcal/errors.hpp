#pragma once

#include <stdexcept>
#include <string>

namespace otcal {

// Thrown by solve_banded on a zero pivot.
struct SingularSystemError : std::runtime_error {
    explicit SingularSystemError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a backward step's policy iteration fails to contract.
struct PolicyIterationError : std::runtime_error {
    PolicyIterationError(const std::string& msg, double residual_, int step_index_)
        : std::runtime_error(msg), residual(residual_), step_index(step_index_) {}
    double residual;
    int step_index;
};

// Thrown when an implied volatility cannot be recovered (price outside no-arbitrage bounds).
struct InversionError : std::runtime_error {
    explicit InversionError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace otcal
