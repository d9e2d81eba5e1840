#pragma once

#include <cmath>
#include <limits>
#include <sstream>

#include "liouvillian.hpp"
#include "steadystate.hpp"
#include "types.hpp"

namespace cavityspec {

/// Rate equation has no stationary distribution because heating wins.
class HeatingRegimeError : public ValidationError {
public:
    explicit HeatingRegimeError(const std::string& what) : ValidationError(what) {}
    std::string kind() const override { return "heating-regime"; }
};

/// Internal-space quantities shared by the cooling and zeroth-order computations.
struct InternalModel {
    InternalCouplings couplings;
    Superoperator L_I;
    DensityOperator rho_st;
    SystemParams params;  ///< scaled (nu = 1)
};

inline InternalModel internal_model(const SystemParams& p) {
    InternalModel m{internal_couplings(p), build_internal_liouvillian(p), {}, p.scaled()};
    m.rho_st = internal_steady_state(m.L_I);
    return m;
}

struct ForceSpectrum {
    cplx s_L, s_c, s_cL, s_total;
};

namespace detail {

/// Solver for (L_I + i nu) with a singularity check against the eigenvalues of L_I.
inline Eigen::PartialPivLU<Mat> shifted_internal_solver(const Mat& L_I, double nu_arg) {
    const Mat shifted = L_I + I * nu_arg * identity(L_I.rows());
    const Eigen::JacobiSVD<Mat> svd(shifted);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(svd.singularValues().size() - 1);
    if (!(smin > 1e-12 * std::max(1.0, smax))) {
        const Eigen::ComplexEigenSolver<Mat> es(L_I, false);
        cplx worst = es.eigenvalues()(0);
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
            if (std::abs(es.eigenvalues()(i) + I * nu_arg) < std::abs(worst + I * nu_arg)) worst = es.eigenvalues()(i);
        std::ostringstream os;
        os << "singular shifted system at nu = " << nu_arg << ": L_I has eigenvalue " << worst.real() << (worst.imag() < 0 ? "" : "+")
           << worst.imag() << "i";
        throw SingularityError(os.str(), worst);
    }
    return Eigen::PartialPivLU<Mat>(shifted);
}

}  // namespace detail

/// Components of s(nu_arg) = -Tr{V1 (L_I + i nu_arg)^-1 V1 rho_st} split into laser, cavity and cross terms.
inline ForceSpectrum dipole_force_spectrum(const InternalModel& m, double nu_arg) {
    const auto solver = detail::shifted_internal_solver(m.L_I.m, nu_arg);
    const Mat& rho = m.rho_st.matrix;
    auto term = [&](const Mat& vx, const Mat& vy) {
        const Vec v = solver.solve(vectorize(Mat(vy * rho)));
        return -(vx * devectorize(v)).trace();
    };
    const Mat& vl = m.couplings.V_1L;
    const Mat& vc = m.couplings.V_1c;
    ForceSpectrum f;
    f.s_L = term(vl, vl);
    f.s_c = term(vc, vc);
    f.s_cL = term(vc, vl) + term(vl, vc);
    const double pl = m.params.phi_L(), pc = m.params.phi_c();
    f.s_total = pl * pl * f.s_L + pc * pc * f.s_c + pl * pc * f.s_cL;
    return f;
}

inline ForceSpectrum dipole_force_spectrum(const SystemParams& p, double nu_arg) {
    return dipole_force_spectrum(internal_model(p), nu_arg);
}

struct CoolingCoefficients {
    ForceSpectrum at_minus_nu;  ///< s(-nu), enters A_plus
    ForceSpectrum at_plus_nu;   ///< s(+nu), enters A_minus
    double diffusion_D = 0.0;
    double A_plus = 0.0;
    double A_minus = 0.0;
    double n_mean = std::numeric_limits<double>::quiet_NaN();
    bool heating_regime = false;
    double alpha = 0.0;
    double excited_population = 0.0;
};

/// A_(+/-) = 2 Re{s(-/+ nu) + D} with D = alpha (gamma/2) Tr{sigma^dagger sigma rho_st}.
inline CoolingCoefficients cooling_coefficients(const InternalModel& m) {
    CoolingCoefficients c;
    const Mat& s = m.couplings.sigma;
    c.excited_population = (s.adjoint() * s * m.rho_st.matrix).trace().real();
    c.alpha = m.params.alpha;
    c.diffusion_D = m.params.alpha * m.params.gamma / 2.0 * c.excited_population;
    c.at_minus_nu = dipole_force_spectrum(m, -1.0);
    c.at_plus_nu = dipole_force_spectrum(m, 1.0);
    c.A_plus = 2.0 * (c.at_minus_nu.s_total.real() + c.diffusion_D);
    c.A_minus = 2.0 * (c.at_plus_nu.s_total.real() + c.diffusion_D);
    c.heating_regime = !(c.A_minus > c.A_plus);
    if (!c.heating_regime) c.n_mean = c.A_plus / (c.A_minus - c.A_plus);
    return c;
}

inline CoolingCoefficients cooling_coefficients(const SystemParams& p) { return cooling_coefficients(internal_model(p)); }

/// Right-hand side of the phonon rate equation (in units where the eta^2 prefactor is explicit).
/// The ladder is closed at n_max so that probability is conserved.
inline RVec rate_equation_rhs(const RVec& p, double A_plus, double A_minus, double eta) {
    const Eigen::Index n_top = p.size() - 1;
    RVec d = RVec::Zero(p.size());
    for (Eigen::Index n = 0; n <= n_top; ++n) {
        const double nn = static_cast<double>(n);
        double v = 0.0;
        if (n < n_top) v += A_minus * (nn + 1) * p(n + 1) - A_plus * (nn + 1) * p(n);
        v -= A_minus * nn * p(n);
        if (n > 0) v += A_plus * nn * p(n - 1);
        d(n) = eta * eta * v;
    }
    return d;
}

/// Stationary phonon distribution of the rate equation, from its tridiagonal stationarity system.
inline RVec rate_equation_steady(double A_plus, double A_minus, int n_max) {
    if (n_max < 0) throw ValidationError("rate equation: n_max must be >= 0");
    if (!(A_plus >= 0.0)) throw ValidationError("rate equation: A_plus must be >= 0");
    if (!(A_minus > A_plus))
        throw HeatingRegimeError("rate equation: heating regime (A_plus >= A_minus) has no stationary distribution");
    const int n = n_max + 1;
    // Rows of dp/dt = G p = 0 with row 0 replaced by the anchor p(0) = 1 (G has zero column sums, so
    // one row is redundant). The result is tridiagonal and solved by Thomas elimination.
    RVec sub = RVec::Zero(n), diag = RVec::Zero(n), sup = RVec::Zero(n), rhs = RVec::Zero(n);
    diag(0) = 1.0;
    rhs(0) = 1.0;
    for (int k = 1; k < n; ++k) {
        const double kk = k;
        sub(k) = A_plus * kk;
        diag(k) = -A_minus * kk - (k < n - 1 ? A_plus * (kk + 1) : 0.0);
        if (k < n - 1) sup(k) = A_minus * (kk + 1);
    }
    for (int k = 1; k < n; ++k) {
        const double w = sub(k) / diag(k - 1);
        diag(k) -= w * sup(k - 1);
        rhs(k) -= w * rhs(k - 1);
    }
    RVec p(n);
    p(n - 1) = rhs(n - 1) / diag(n - 1);
    for (int k = n - 2; k >= 0; --k) p(k) = (rhs(k) - sup(k) * p(k + 1)) / diag(k);
    return p / p.sum();
}

}  // namespace cavityspec
