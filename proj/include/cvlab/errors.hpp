#ifndef CVLAB_ERRORS_HPP
#define CVLAB_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace cvlab {

// Matrix solve hit an ill-conditioned operand (cond > ~1e12).
class NumericalDegeneracyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Requested coefficient dynamics in the sector gamma/kappa < 4 with
// delta_AE = 0, where the closure has no stable steady state.
class UnstableRegimeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Freezing detuning formula has no real solution for the given decay demands.
class InfeasibleFreezingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class StiffnessFailure : public std::runtime_error {
public:
    StiffnessFailure(double t, const std::string& msg)
        : std::runtime_error(msg), t_fail(t) {}
    double t_fail;
};

// Input exceeds the squeeze/displacement caps of the truncated Fock space.
class TruncationRiskError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class LeakageBreach : public std::runtime_error {
public:
    LeakageBreach(double t, const std::string& msg)
        : std::runtime_error(msg), t_breach(t) {}
    double t_breach;
};

class SchemaError : public std::runtime_error {
public:
    SchemaError(std::vector<std::string> keys, const std::string& msg)
        : std::runtime_error(msg), offending_keys(std::move(keys)) {}
    std::vector<std::string> offending_keys;
};

} // namespace cvlab

#endif
