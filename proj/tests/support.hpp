#pragma once

#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "cavityspec/operators.hpp"
#include "cavityspec/types.hpp"

namespace cavityspec::testing {

inline Mat random_matrix(std::mt19937& rng, Eigen::Index n) {
    std::normal_distribution<double> d;
    Mat m(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) m(i, j) = cplx(d(rng), d(rng));
    return m;
}

inline Mat random_hermitian(std::mt19937& rng, Eigen::Index n) {
    const Mat m = random_matrix(rng, n);
    return 0.5 * (m + m.adjoint());
}

/// Random density matrix G G^dagger / Tr{G G^dagger}.
inline Mat random_density(std::mt19937& rng, Eigen::Index n) {
    const Mat g = random_matrix(rng, n);
    const Mat r = g * g.adjoint();
    return r / r.trace();
}

inline double max_abs(const Mat& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

/// Independent column-stacking superoperator of rho -> A rho B: (B^T (x) A).
inline Mat sandwich_reference(const Mat& a, const Mat& b) {
    const Eigen::Index n = a.rows();
    Mat s = Mat::Zero(n * n, n * n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) s.block(i * n, j * n, n, n) = b(j, i) * a;
    return s;
}

/// exp(L t) applied to vec(rho).
inline Mat propagate(const Mat& L, const Mat& rho, double t) {
    const Mat P = (L * t).exp();
    const Vec v = P * vectorize(rho);
    return devectorize(v);
}

}  // namespace cavityspec::testing
