#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace reachguard {

/// Invalid caller input: mismatched grids, out-of-bounds controls, bad configs.
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Query point outside a non-periodic grid extent.
class DomainError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// The PDE integrator produced a non-finite value or a non-positive step.
class NumericFailure : public std::runtime_error {
public:
    NumericFailure(const std::string& what, std::size_t step)
        : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// The N-vehicle avoidance contract was not met (e.g. resolution cap exceeded).
class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace reachguard
