#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cavityspec {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;

inline constexpr cplx I{0.0, 1.0};
inline constexpr double kPi = 3.14159265358979323846;

/// Process exit codes shared by the library errors and the CLI.
enum class ExitCode : int { ok = 0, validation = 2, numerical = 3, audit = 4 };

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    Error(const std::string& what, ExitCode code) : std::runtime_error(what), code_(code) {}
    ExitCode code() const noexcept { return code_; }
    virtual std::string kind() const { return "error"; }

private:
    ExitCode code_;
};

/// Invalid parameters, bases, configuration files or arguments.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(what, ExitCode::validation) {}
    std::string kind() const override { return "validation"; }
};

/// Failure of a numerical method (singular systems, non-diagonalizable generators, ...).
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(what, ExitCode::numerical) {}
    std::string kind() const override { return "numerical"; }
};

/// Kernel of a generator is not one-dimensional.
class DegenerateSteadyStateError : public NumericalError {
public:
    DegenerateSteadyStateError(const std::string& what, double s_min, double s_next)
        : NumericalError(what), smallest(s_min), second(s_next) {}
    std::string kind() const override { return "degenerate-steady-state"; }
    double smallest;
    double second;
};

/// Shifted linear system hits an (almost) undamped eigenvalue.
class SingularityError : public NumericalError {
public:
    SingularityError(const std::string& what, cplx eig) : NumericalError(what), eigenvalue(eig) {}
    std::string kind() const override { return "singularity"; }
    cplx eigenvalue;
};

/// Time-domain oracle could not reach a decayed correlation.
class InconclusiveOracleError : public NumericalError {
public:
    explicit InconclusiveOracleError(const std::string& what) : NumericalError(what) {}
    std::string kind() const override { return "inconclusive-oracle"; }
};

/// Non-fatal diagnostics attached to results.
using Warnings = std::vector<std::string>;

}  // namespace cavityspec
