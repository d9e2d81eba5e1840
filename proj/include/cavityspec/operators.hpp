#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <unsupported/Eigen/KroneckerProduct>

#include "types.hpp"

namespace cavityspec {

enum class Electronic { g, e };

/// One internal basis state |electronic, n_c photons>.
struct InternalLabel {
    Electronic electronic;
    int photons;
    bool operator==(const InternalLabel&) const = default;
    std::string str() const { return std::string(electronic == Electronic::g ? "g" : "e") + "," + std::to_string(photons); }
};

/// Internal (atom x cavity) and motional basis bookkeeping.
///
/// The internal ordering is electronic-major: |g,0>..|g,N>, |e,0>..|e,N>. With single_excitation the
/// internal space is {|g,0>, |g,1>, |e,0>} in that order. Joint operators are internal (x) motional.
struct BasisDescriptor {
    std::vector<InternalLabel> internal_labels;
    int vib_dim = 1;
    bool single_excitation = true;
    int N_c = 1;

    static BasisDescriptor make(int N_c, int n_max, bool single_excitation) {
        if (n_max < 0) throw ValidationError("invalid basis: n_max must be >= 0 (vib_dim >= 1)");
        if (N_c < 0) throw ValidationError("invalid basis: N_c must be >= 0");
        if (single_excitation && N_c < 1)
            throw ValidationError("invalid basis: single_excitation needs a one-photon state (N_c >= 1)");
        BasisDescriptor b;
        b.vib_dim = n_max + 1;
        b.single_excitation = single_excitation;
        b.N_c = single_excitation ? 1 : N_c;
        if (single_excitation) {
            b.internal_labels = {{Electronic::g, 0}, {Electronic::g, 1}, {Electronic::e, 0}};
        } else {
            for (Electronic el : {Electronic::g, Electronic::e})
                for (int n = 0; n <= N_c; ++n) b.internal_labels.push_back({el, n});
        }
        return b;
    }

    int internal_dim() const { return static_cast<int>(internal_labels.size()); }
    int n_max() const { return vib_dim - 1; }
    int dim() const { return internal_dim() * vib_dim; }
    /// Photon cutoff of the parent space in which composite operators are formed before truncation.
    int parent_photons() const { return N_c; }
    int parent_dim() const { return 2 * (N_c + 1); }

    int index_of(Electronic el, int photons) const {
        for (int i = 0; i < internal_dim(); ++i)
            if (internal_labels[static_cast<std::size_t>(i)] == InternalLabel{el, photons}) return i;
        return -1;
    }

    void validate() const {
        if (vib_dim < 1) throw ValidationError("invalid basis: vib_dim must be >= 1");
        for (std::size_t i = 0; i < internal_labels.size(); ++i)
            for (std::size_t j = i + 1; j < internal_labels.size(); ++j)
                if (internal_labels[i] == internal_labels[j])
                    throw ValidationError("invalid basis: duplicate internal label " + internal_labels[i].str());
        if (single_excitation && internal_dim() != 3)
            throw ValidationError("invalid basis: single_excitation requires internal dimension 3");
    }
};

inline Mat identity(Eigen::Index n) { return Mat::Identity(n, n); }

inline Mat kron(const Mat& a, const Mat& b) { return Eigen::kroneckerProduct(a, b).eval(); }

/// Lowering operator sqrt(n)|n-1><n| on a Fock space of the given dimension.
inline Mat fock_lowering(int dim) {
    Mat b = Mat::Zero(dim, dim);
    for (int n = 1; n < dim; ++n) b(n - 1, n) = std::sqrt(static_cast<double>(n));
    return b;
}

/// sigma = |g><e| on the parent (untruncated) internal space of the basis.
inline Mat parent_sigma(const BasisDescriptor& basis) {
    const int nc = basis.parent_photons() + 1;
    Mat s = Mat::Zero(2 * nc, 2 * nc);
    for (int n = 0; n < nc; ++n) s(n, nc + n) = 1.0;
    return s;
}

/// Cavity lowering operator on the parent internal space of the basis.
inline Mat parent_a(const BasisDescriptor& basis) {
    const int nc = basis.parent_photons() + 1;
    return kron(identity(2), fock_lowering(nc));
}

/// Restricts a parent-space internal operator to the internal labels of the basis.
/// Matrix elements leading out of the retained states are dropped.
inline Mat restrict_internal(const BasisDescriptor& basis, const Mat& parent) {
    const int nc = basis.parent_photons() + 1;
    if (parent.rows() != 2 * nc || parent.cols() != 2 * nc)
        throw ValidationError("restrict_internal: operator does not live on the parent internal space");
    const int d = basis.internal_dim();
    std::vector<int> idx(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        const auto& l = basis.internal_labels[static_cast<std::size_t>(i)];
        idx[static_cast<std::size_t>(i)] = (l.electronic == Electronic::g ? 0 : nc) + l.photons;
    }
    Mat out(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) out(i, j) = parent(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    return out;
}

struct LadderOperators {
    Mat sigma;  ///< internal space
    Mat a;      ///< internal space
    Mat b;      ///< motional space
};

/// sigma and a on the internal space of the basis, b on its motional space.
inline LadderOperators ladder_operators(const BasisDescriptor& basis) {
    basis.validate();
    return {restrict_internal(basis, parent_sigma(basis)), restrict_internal(basis, parent_a(basis)),
            fock_lowering(basis.vib_dim)};
}

/// Column-stacking vectorization: vec(X)[j*n + i] = X(i, j).
inline Vec vectorize(const Mat& x) { return Eigen::Map<const Vec>(x.data(), x.size()); }

inline Mat devectorize(const Vec& v) {
    const auto n = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(v.size()))));
    if (n * n != v.size()) throw ValidationError("devectorize: vector length is not a perfect square");
    return Eigen::Map<const Mat>(v.data(), n, n);
}

/// Tr{A^dagger X} from vectorized operands.
inline cplx trace_inner(const Vec& a, const Vec& x) { return a.dot(x); }

enum class EtaOrder { zero, one, two, mixed };

inline std::string to_string(EtaOrder o) {
    switch (o) {
        case EtaOrder::zero: return "0";
        case EtaOrder::one: return "1";
        case EtaOrder::two: return "2";
        default: return "mixed";
    }
}

/// Linear map on operators acting on their column-stacked vectorization.
struct Superoperator {
    Mat m;
    EtaOrder eta_order = EtaOrder::zero;

    Eigen::Index op_dim() const { return static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(m.rows())))); }
    Mat apply(const Mat& x) const {
        if (x.size() != m.cols()) throw ValidationError("superoperator applied to operator of wrong dimension");
        return devectorize(m * vectorize(x));
    }
    Superoperator& operator+=(const Superoperator& o) {
        if (o.m.rows() != m.rows()) throw ValidationError("superoperator dimension mismatch");
        m += o.m;
        eta_order = eta_order == o.eta_order ? eta_order : EtaOrder::mixed;
        return *this;
    }
};

inline Superoperator zero_superop(Eigen::Index op_dim, EtaOrder order = EtaOrder::zero) {
    return {Mat::Zero(op_dim * op_dim, op_dim * op_dim), order};
}

/// S += c * (X -> A X B), i.e. S += c * (B^T (x) A).
inline void add_sandwich(Mat& s, cplx c, const Mat& a, const Mat& b) {
    const Eigen::Index n = a.rows();
    if (a.cols() != n || b.rows() != n || b.cols() != n || s.rows() != n * n)
        throw ValidationError("add_sandwich: dimension mismatch");
    for (Eigen::Index l = 0; l < n; ++l)
        for (Eigen::Index k = 0; k < n; ++k) {
            const cplx f = c * b(l, k);
            if (f == cplx(0.0)) continue;
            s.block(k * n, l * n, n, n) += f * a;
        }
}

inline bool is_hermitian(const Mat& h, double rel_tol) {
    const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
    return (h - h.adjoint()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

/// S += (rho -> -i[H, rho]).
inline void add_hamiltonian(Mat& s, const Mat& h) {
    const Mat id = identity(h.rows());
    add_sandwich(s, -I, h, id);
    add_sandwich(s, I, id, h);
}

/// S += (rho -> (rate/2)(2 C rho C^dagger - C^dagger C rho - rho C^dagger C)).
inline void add_dissipator(Mat& s, const Mat& c, double rate) {
    if (!(rate >= 0.0)) throw ValidationError("lindblad_dissipator: rate must be >= 0");
    if (rate == 0.0) return;
    const Mat id = identity(c.rows());
    const Mat cdc = c.adjoint() * c;
    add_sandwich(s, rate, c, c.adjoint());
    add_sandwich(s, -0.5 * rate, cdc, id);
    add_sandwich(s, -0.5 * rate, id, cdc);
}

/// rho -> -i[H, rho] (hbar = 1).
inline Superoperator hamiltonian_superop(const Mat& h) {
    if (h.rows() != h.cols()) throw ValidationError("hamiltonian_superop: H must be square");
    if (!is_hermitian(h, 1e-12)) throw ValidationError("hamiltonian_superop: H is not Hermitian");
    Superoperator s = zero_superop(h.rows());
    add_hamiltonian(s.m, h);
    return s;
}

/// rho -> (rate/2)(2 C rho C^dagger - C^dagger C rho - rho C^dagger C).
inline Superoperator lindblad_dissipator(const Mat& c, double rate) {
    if (c.rows() != c.cols()) throw ValidationError("lindblad_dissipator: C must be square");
    if (!(rate >= 0.0)) throw ValidationError("lindblad_dissipator: rate must be >= 0");
    Superoperator s = zero_superop(c.rows());
    add_dissipator(s.m, c, rate);
    return s;
}

/// Superoperator of X -> A X B.
inline Superoperator sandwich_superop(const Mat& a, const Mat& b, cplx c = 1.0) {
    Superoperator s = zero_superop(a.rows());
    add_sandwich(s.m, c, a, b);
    return s;
}

}  // namespace cavityspec
