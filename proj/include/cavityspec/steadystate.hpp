#pragma once

#include <cmath>
#include <limits>
#include <sstream>

#include "lapack.hpp"
#include "operators.hpp"
#include "types.hpp"

namespace cavityspec {

/// Hermitian, unit-trace, positive-semidefinite state together with its kernel diagnostics.
struct DensityOperator {
    Mat matrix;
    double residual = 0.0;       ///< max |L rho| entry of the returned state
    double smallest_sv = 0.0;    ///< smallest singular value of the generator
    double second_sv = 0.0;      ///< second smallest singular value of the generator
    double threshold = 0.0;      ///< kernel threshold used for the degeneracy decision
    double min_eigenvalue = 0.0;
};

/// Rough spectral norm sqrt(|L|_1 |L|_inf).
inline double norm_estimate(const Mat& L) {
    const double n1 = L.cwiseAbs().colwise().sum().maxCoeff();
    const double ninf = L.cwiseAbs().rowwise().sum().maxCoeff();
    return std::sqrt(n1 * ninf);
}

struct KernelResult {
    Vec vector;
    double smallest = 0.0;
    double second = 0.0;
    double threshold = 0.0;
};

namespace detail {

inline Vec deterministic_start(Eigen::Index n, int salt) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v(i) = cplx(std::sin(0.7 * static_cast<double>(i + 1) + salt), std::cos(1.3 * static_cast<double>(i + 1) - salt));
    return v.normalized();
}

/// Smallest singular value and vector of A by inverse iteration on A^dagger A.
inline std::pair<double, Vec> smallest_singular(const lapack::LU& lu, const Mat& A, int salt, int max_iter = 30) {
    Vec x = deterministic_start(A.cols(), salt);
    double sigma = std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iter; ++it) {
        Vec y = lu.solve(lu.solve_adjoint(x));
        x = y.normalized();
        const double s = (A * x).norm();
        const bool done = std::abs(s - sigma) <= 1e-8 * std::max(s, 1e-300);
        sigma = s;
        if (done && it >= 2) break;
    }
    return {sigma, x};
}

}  // namespace detail

/// One-dimensional kernel of a square matrix with the two smallest singular values.
///
/// Small matrices use a full SVD. Larger ones use LU-driven inverse iteration for the kernel, and the
/// second singular value comes from A + |A| u1 v1^dagger, whose singular values are those of A with
/// the smallest one lifted.
inline KernelResult find_kernel(const Mat& A, Eigen::Index svd_limit = 1024) {
    const auto n = A.rows();
    const double nrm = norm_estimate(A);
    KernelResult r;
    r.threshold = static_cast<double>(n) * static_cast<double>(n) * std::numeric_limits<double>::epsilon() * nrm;
    if (n <= svd_limit) {
        const lapack::SVD s = lapack::svd(A);
        r.vector = s.V.col(n - 1);
        r.smallest = s.values(n - 1);
        r.second = n > 1 ? s.values(n - 2) : std::numeric_limits<double>::infinity();
        return r;
    }
    const lapack::LU lu(A);
    auto [s1, v1] = detail::smallest_singular(lu, A, 1, 6);
    Vec u1 = detail::deterministic_start(n, 2);
    for (int it = 0; it < 4; ++it) u1 = lu.solve_adjoint(u1).normalized();
    const Mat lifted = A + nrm * u1 * v1.adjoint();
    const lapack::LU lu2(lifted);
    auto [s2, v2] = detail::smallest_singular(lu2, lifted, 3);
    r.vector = v1;
    r.smallest = s1;
    r.second = s2;
    return r;
}

/// Normalized, Hermitized kernel element of a Liouvillian.
inline DensityOperator steady_state(const Superoperator& L) {
    const KernelResult k = find_kernel(L.m);
    if (!(k.second > k.threshold)) {
        std::ostringstream os;
        os << "degenerate steady state: kernel dimension > 1 (smallest singular values " << k.smallest << ", "
           << k.second << "; threshold " << k.threshold << ")";
        throw DegenerateSteadyStateError(os.str(), k.smallest, k.second);
    }
    Mat rho = devectorize(k.vector);
    const cplx tr = rho.trace();
    if (std::abs(tr) < 1e-300) throw NumericalError("steady state: kernel vector has zero trace");
    rho /= tr;
    rho = 0.5 * (rho + rho.adjoint()).eval();
    rho /= rho.trace().real();

    DensityOperator out;
    out.residual = (L.m * vectorize(rho)).cwiseAbs().maxCoeff();
    out.smallest_sv = k.smallest;
    out.second_sv = k.second;
    out.threshold = k.threshold;
    Eigen::SelfAdjointEigenSolver<Mat> es(rho);
    out.min_eigenvalue = es.eigenvalues().minCoeff();
    if (out.min_eigenvalue < -1e-8) {
        std::ostringstream os;
        os << "steady state has negative eigenvalue " << out.min_eigenvalue << " (truncation failure?)";
        throw NumericalError(os.str());
    }
    if (out.residual > 1e-10) {
        std::ostringstream os;
        os << "steady state residual " << out.residual << " exceeds 1e-10";
        throw NumericalError(os.str());
    }
    out.matrix = std::move(rho);
    return out;
}

/// Stationary state of the internal Liouvillian.
inline DensityOperator internal_steady_state(const Superoperator& L_I) { return steady_state(L_I); }

/// Stationary state of the joint Liouvillian.
inline DensityOperator joint_steady_state(const Superoperator& L) { return steady_state(L); }

/// Occupations of the truncated thermal state with mean phonon number nbar.
inline RVec thermal_populations(double nbar, int n_max) {
    if (!(nbar >= 0.0)) throw ValidationError("thermal state: nbar must be >= 0");
    if (n_max < 0) throw ValidationError("thermal state: n_max must be >= 0");
    RVec p(n_max + 1);
    const double q = nbar / (1.0 + nbar);
    double w = 1.0;
    for (int n = 0; n <= n_max; ++n) {
        p(n) = w;
        w *= q;
    }
    return p / p.sum();
}

/// mu = (1/(1+nbar)) (nbar/(1+nbar))^(b^dagger b), renormalized after truncation.
inline DensityOperator thermal_motional_state(double nbar, int n_max) {
    DensityOperator d;
    d.matrix = thermal_populations(nbar, n_max).cast<cplx>().asDiagonal();
    d.min_eigenvalue = d.matrix.diagonal().real().minCoeff();
    return d;
}

/// Partial trace over the internal space of an internal (x) motional operator.
inline Mat motional_marginal(const Mat& rho, int internal_dim, int vib_dim) {
    Mat out = Mat::Zero(vib_dim, vib_dim);
    for (int i = 0; i < internal_dim; ++i) out += rho.block(i * vib_dim, i * vib_dim, vib_dim, vib_dim);
    return out;
}

/// Partial trace over the motional space of an internal (x) motional operator.
inline Mat internal_marginal(const Mat& rho, int internal_dim, int vib_dim) {
    Mat out(internal_dim, internal_dim);
    for (int i = 0; i < internal_dim; ++i)
        for (int j = 0; j < internal_dim; ++j) out(i, j) = rho.block(i * vib_dim, j * vib_dim, vib_dim, vib_dim).trace();
    return out;
}

/// Trace distance (1/2)|A - B|_1 of two Hermitian operators.
inline double trace_distance(const Mat& a, const Mat& b) {
    const Mat d = a - b;
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (d + d.adjoint()));
    return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

}  // namespace cavityspec
