#pragma once

#include <complex>
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#include "types.hpp"

namespace cavityspec::lapack {

inline void check_info(lapack_int info, const char* routine) {
    if (info != 0)
        throw NumericalError(std::string(routine) + " failed with info=" + std::to_string(info));
}

/// Singular values (descending) and right singular vectors (columns of V) of a square matrix.
struct SVD {
    RVec values;
    Mat V;
};

inline SVD svd(Mat a) {
    const lapack_int n = static_cast<lapack_int>(a.rows());
    SVD out;
    out.values.resize(n);
    Mat u(n, n), vh(n, n);
    lapack_int info = LAPACKE_zgesdd(LAPACK_COL_MAJOR, 'A', n, n, a.data(), n, out.values.data(),
                                     u.data(), n, vh.data(), n);
    check_info(info, "zgesdd");
    out.V = vh.adjoint();
    return out;
}

inline RVec singular_values(Mat a) {
    const lapack_int n = static_cast<lapack_int>(a.rows());
    RVec s(n);
    lapack_int info =
        LAPACKE_zgesdd(LAPACK_COL_MAJOR, 'N', n, n, a.data(), n, s.data(), nullptr, 1, nullptr, 1);
    check_info(info, "zgesdd");
    return s;
}

/// LU factorization with partial pivoting. Exactly singular pivots are tolerated so the
/// factorization can drive inverse iteration on a generator with a kernel.
class LU {
public:
    LU() = default;
    explicit LU(Mat a) : lu_(std::move(a)), piv_(static_cast<std::size_t>(lu_.rows())) {
        const lapack_int n = static_cast<lapack_int>(lu_.rows());
        lapack_int info = LAPACKE_zgetrf(LAPACK_COL_MAJOR, n, n, lu_.data(), n, piv_.data());
        if (info < 0) check_info(info, "zgetrf");
        const double floor = std::numeric_limits<double>::epsilon() * std::max(1.0, lu_.cwiseAbs().maxCoeff());
        for (Eigen::Index i = 0; i < lu_.rows(); ++i) {
            if (std::abs(lu_(i, i)) < floor) {
                lu_(i, i) = floor;
                ++clamped_;
            }
        }
    }

    Mat solve(const Mat& b, char trans = 'N') const {
        Mat x = b;
        const lapack_int n = static_cast<lapack_int>(lu_.rows());
        lapack_int info = LAPACKE_zgetrs(LAPACK_COL_MAJOR, trans, n, static_cast<lapack_int>(x.cols()),
                                         lu_.data(), n, piv_.data(), x.data(), n);
        check_info(info, "zgetrs");
        return x;
    }
    Mat solve_adjoint(const Mat& b) const { return solve(b, 'C'); }
    int clamped_pivots() const { return clamped_; }
    Eigen::Index size() const { return lu_.rows(); }

private:
    Mat lu_;
    std::vector<lapack_int> piv_;
    int clamped_ = 0;
};

/// Unitary reduction A = Q H Q^dagger to upper Hessenberg form. Q is kept in factored form.
class Hessenberg {
public:
    Hessenberg() = default;
    explicit Hessenberg(Mat a) : h_(std::move(a)), tau_(std::max<Eigen::Index>(h_.rows() - 1, 1)) {
        const lapack_int n = static_cast<lapack_int>(h_.rows());
        lapack_int info = LAPACKE_zgehrd(LAPACK_COL_MAJOR, n, 1, n, h_.data(), n, tau_.data());
        check_info(info, "zgehrd");
        reflectors_ = h_;
        for (Eigen::Index j = 0; j < h_.cols(); ++j)
            for (Eigen::Index i = j + 2; i < h_.rows(); ++i) h_(i, j) = 0.0;
    }

    const Mat& H() const { return h_; }

    /// Returns Q^dagger b for every column of b.
    Mat apply_qh(const Mat& b) const { return apply(b, 'C'); }
    /// Returns Q b for every column of b.
    Mat apply_q(const Mat& b) const { return apply(b, 'N'); }

private:
    Mat apply(const Mat& b, char trans) const {
        Mat x = b;
        const lapack_int n = static_cast<lapack_int>(h_.rows());
        lapack_int info = LAPACKE_zunmhr(LAPACK_COL_MAJOR, 'L', trans, n, static_cast<lapack_int>(x.cols()), 1, n,
                                         reflectors_.data(), n, tau_.data(), x.data(), n);
        check_info(info, "zunmhr");
        return x;
    }

    Mat h_;
    Mat reflectors_;
    Vec tau_;
};

/// Eigenvalues and right eigenvectors of a general complex matrix.
struct Eig {
    Vec values;
    Mat vectors;
};

inline Eig eig(Mat a) {
    const lapack_int n = static_cast<lapack_int>(a.rows());
    Eig out;
    out.values.resize(n);
    out.vectors.resize(n, n);
    lapack_int info = LAPACKE_zgeev(LAPACK_COL_MAJOR, 'N', 'V', n, a.data(), n, out.values.data(), nullptr, 1,
                                    out.vectors.data(), n);
    check_info(info, "zgeev");
    return out;
}

inline Vec eigenvalues(Mat a) {
    const lapack_int n = static_cast<lapack_int>(a.rows());
    Vec w(n);
    lapack_int info =
        LAPACKE_zgeev(LAPACK_COL_MAJOR, 'N', 'N', n, a.data(), n, w.data(), nullptr, 1, nullptr, 1);
    check_info(info, "zgeev");
    return w;
}

}  // namespace cavityspec::lapack
