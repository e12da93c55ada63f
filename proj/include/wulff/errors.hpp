#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace wulff {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid norm, domain, profile or solver configuration.
class ConfigurationError : public Error {
public:
    using Error::Error;
};

/// Argument outside the domain of an operation (x = 0 for a gradient, θ out of range, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// The requested operation is not provided by this norm family (gradient of p = 1, p = ∞).
class CapabilityError : public Error {
public:
    using Error::Error;
};

/// Mesh/field mismatch.
class ConsistencyError : public Error {
public:
    using Error::Error;
};

class MeshingError : public Error {
public:
    using Error::Error;
};

/// Gradient requested at a point where the norm has a corner. Carries the
/// one-sided limits of the gradient (two of them in 2D).
class NonDifferentiableError : public Error {
public:
    NonDifferentiableError(const std::string& what, std::vector<Eigen::VectorXd> limits)
        : Error(what), one_sided_limits_(std::move(limits)) {}

    const std::vector<Eigen::VectorXd>& one_sided_limits() const { return one_sided_limits_; }

private:
    std::vector<Eigen::VectorXd> one_sided_limits_;
};

/// Non-convergence of the energy minimization; carries the sup-norm residual per iteration.
class SolverError : public Error {
public:
    SolverError(const std::string& what, std::vector<double> history)
        : Error(what), residual_history_(std::move(history)) {}

    const std::vector<double>& residual_history() const { return residual_history_; }

private:
    std::vector<double> residual_history_;
};

}  // namespace wulff
