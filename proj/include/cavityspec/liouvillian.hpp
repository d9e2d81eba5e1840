#pragma once

#include <cmath>

#include "operators.hpp"
#include "params.hpp"
#include "types.hpp"

namespace cavityspec {

/// Internal (atom x cavity) operators of the Lamb-Dicke expansion, truncated to the basis.
struct InternalCouplings {
    BasisDescriptor basis;
    Mat sigma, a;
    Mat H_I;
    Mat V_1L, V_1c, V1;
    Mat V_2L, V_2c, V2;
};

/// Builds every internal operator in the parent photon space and truncates afterwards, so composite
/// operators such as a sigma^dagger keep the matrix elements that stay inside the basis.
inline InternalCouplings internal_couplings(const SystemParams& raw) {
    raw.validate();
    const SystemParams p = raw.scaled();
    InternalCouplings c;
    c.basis = p.basis();
    const Mat s = parent_sigma(c.basis);
    const Mat a = parent_a(c.basis);
    const Mat sd = s.adjoint(), ad = a.adjoint();
    const double gt = p.g_tilde();
    const bool node = p.laser_mode == LaserMode::standing_wave_node;

    const Mat jc = a * sd + ad * s;
    Mat H = -p.Delta * (sd * s) - p.delta_c * (ad * a) + gt * jc;
    if (!node) H += p.Omega * (sd + s);

    Mat v1l = node ? Mat(-p.Omega * (sd + s)) : Mat(I * p.Omega * (sd - s));
    Mat v2l = node ? Mat(Mat::Zero(s.rows(), s.cols())) : Mat(-0.5 * p.Omega * (sd + s));
    Mat v1c = -gt * jc;
    const double tp = p.tan_phi();
    Mat v2c = std::abs(tp) < 1e-300 ? Mat(Mat::Zero(s.rows(), s.cols())) : Mat(-(gt / (2.0 * tp * tp)) * jc);

    auto r = [&](const Mat& m) { return restrict_internal(c.basis, m); };
    c.sigma = r(s);
    c.a = r(a);
    c.H_I = r(H);
    c.V_1L = r(v1l);
    c.V_1c = r(v1c);
    c.V_2L = r(v2l);
    c.V_2c = r(v2c);
    c.V1 = p.phi_c() * c.V_1c + p.phi_L() * c.V_1L;
    c.V2 = p.phi_c() * p.phi_c() * c.V_2c + p.phi_L() * p.phi_L() * c.V_2L;
    return c;
}

/// L_I rho = -i[H_I, rho] + kappa D[a] rho + gamma D[sigma] rho on the internal space.
inline Superoperator build_internal_liouvillian(const SystemParams& raw) {
    const InternalCouplings c = internal_couplings(raw);
    const SystemParams p = raw.scaled();
    Superoperator L = zero_superop(c.basis.internal_dim(), EtaOrder::zero);
    add_hamiltonian(L.m, c.H_I);
    add_dissipator(L.m, c.a, p.kappa);
    add_dissipator(L.m, c.sigma, p.gamma);
    return L;
}

/// L_E rho = -i nu [b^dagger b, rho] on the motional space.
inline Superoperator build_motional_liouvillian(const SystemParams& raw) {
    raw.validate();
    const Mat b = fock_lowering(raw.n_max + 1);
    Superoperator L = zero_superop(raw.n_max + 1, EtaOrder::zero);
    add_hamiltonian(L.m, b.adjoint() * b);
    return L;
}

/// Joint-space operators: internal (x) motional.
struct JointOperators {
    BasisDescriptor basis;
    Mat S;  ///< sigma (x) 1
    Mat A;  ///< a (x) 1
    Mat B;  ///< 1 (x) b
    Mat X;  ///< 1 (x) (b + b^dagger)
};

inline JointOperators joint_operators(const BasisDescriptor& basis) {
    const LadderOperators l = ladder_operators(basis);
    const Mat im = identity(basis.vib_dim);
    const Mat ii = identity(basis.internal_dim());
    return {basis, kron(l.sigma, im), kron(l.a, im), kron(ii, l.b), kron(ii, Mat(l.b + l.b.adjoint()))};
}

struct FirstOrder {
    Mat V_1L, V_1c, V1;
    Superoperator L1;
};

/// L1 rho = -i eta [(b + b^dagger) V1, rho] on the joint space.
inline FirstOrder build_first_order(const SystemParams& p) {
    const InternalCouplings c = internal_couplings(p);
    const Mat x = [&] { Mat b = fock_lowering(c.basis.vib_dim); return Mat(b + b.adjoint()); }();
    Superoperator L1 = zero_superop(c.basis.dim(), EtaOrder::one);
    if (p.eta != 0.0) add_hamiltonian(L1.m, p.eta * kron(c.V1, x));
    return {c.V_1L, c.V_1c, c.V1, std::move(L1)};
}

/// Adds the recoil diffusion of spontaneous emission,
/// rho -> eta^2 (gamma alpha / 2) sigma (2 x rho x - x^2 rho - rho x^2) sigma^dagger.
inline void add_recoil_diffusion(Mat& L, const JointOperators& j, double eta, double gamma, double alpha) {
    const double c = eta * eta * gamma * alpha / 2.0;
    if (c == 0.0) return;
    const Mat sx = j.S * j.X;
    const Mat sx2 = j.S * j.X * j.X;
    const Mat sd = j.S.adjoint();
    add_sandwich(L, 2.0 * c, sx, Mat(j.X * sd));
    add_sandwich(L, -c, sx2, sd);
    add_sandwich(L, -c, j.S, Mat(j.X * j.X * sd));
}

struct SecondOrder {
    Mat V_2L, V_2c, V2;
    Superoperator L2;
};

/// L2 rho = -i eta^2 [(b + b^dagger)^2 V2, rho] + L_2s rho on the joint space.
inline SecondOrder build_second_order(const SystemParams& raw) {
    const InternalCouplings c = internal_couplings(raw);
    const SystemParams p = raw.scaled();
    const JointOperators j = joint_operators(c.basis);
    const Mat x = [&] { Mat b = fock_lowering(c.basis.vib_dim); return Mat(b + b.adjoint()); }();
    Superoperator L2 = zero_superop(c.basis.dim(), EtaOrder::two);
    if (p.eta != 0.0) {
        add_hamiltonian(L2.m, p.eta * p.eta * kron(c.V2, Mat(x * x)));
        add_recoil_diffusion(L2.m, j, p.eta, p.gamma, p.alpha);
    }
    return {c.V_2L, c.V_2c, c.V2, std::move(L2)};
}

/// Lifts a superoperator on the internal space to internal (x) motional with the identity on motion.
inline Superoperator lift_internal(const Superoperator& s, int vib_dim) {
    const auto di = s.op_dim();
    const Eigen::Index dm = vib_dim, d = di * dm;
    Superoperator out = zero_superop(d, s.eta_order);
    for (Eigen::Index jj = 0; jj < di; ++jj)
        for (Eigen::Index ii = 0; ii < di; ++ii)
            for (Eigen::Index j = 0; j < di; ++j)
                for (Eigen::Index i = 0; i < di; ++i) {
                    const cplx v = s.m(j * di + i, jj * di + ii);
                    if (v == cplx(0.0)) continue;
                    for (Eigen::Index m = 0; m < dm; ++m)
                        for (Eigen::Index n = 0; n < dm; ++n)
                            out.m((j * dm + m) * d + i * dm + n, (jj * dm + m) * d + ii * dm + n) += v;
                }
    return out;
}

/// Lifts a superoperator on the motional space to internal (x) motional with the identity on the internal space.
inline Superoperator lift_motional(const Superoperator& s, int internal_dim) {
    const auto dm = s.op_dim();
    const Eigen::Index di = internal_dim, d = di * dm;
    Superoperator out = zero_superop(d, s.eta_order);
    for (Eigen::Index mm = 0; mm < dm; ++mm)
        for (Eigen::Index nn = 0; nn < dm; ++nn)
            for (Eigen::Index m = 0; m < dm; ++m)
                for (Eigen::Index n = 0; n < dm; ++n) {
                    const cplx v = s.m(m * dm + n, mm * dm + nn);
                    if (v == cplx(0.0)) continue;
                    for (Eigen::Index j = 0; j < di; ++j)
                        for (Eigen::Index i = 0; i < di; ++i)
                            out.m((j * dm + m) * d + i * dm + n, (j * dm + mm) * d + i * dm + nn) += v;
                }
    return out;
}

/// L = lift(L_I) + L_E + L1 + L2 on internal (x) motional, assembled in place.
inline Superoperator build_joint_liouvillian(const SystemParams& raw, Warnings* warnings = nullptr) {
    const InternalCouplings c = internal_couplings(raw);
    const SystemParams p = raw.scaled();
    if (warnings) {
        for (auto& w : raw.warnings()) warnings->push_back(w);
    }
    const JointOperators j = joint_operators(c.basis);
    const Mat im = identity(c.basis.vib_dim);
    const Mat b = fock_lowering(c.basis.vib_dim);
    const Mat x = b + b.adjoint();
    Mat H = kron(c.H_I, im) + p.nu * kron(identity(c.basis.internal_dim()), Mat(b.adjoint() * b));
    if (p.eta != 0.0) H += p.eta * kron(c.V1, x) + p.eta * p.eta * kron(c.V2, Mat(x * x));
    Superoperator L = zero_superop(c.basis.dim(), EtaOrder::mixed);
    add_hamiltonian(L.m, H);
    add_dissipator(L.m, j.A, p.kappa);
    add_dissipator(L.m, j.S, p.gamma);
    add_recoil_diffusion(L.m, j, p.eta, p.gamma, p.alpha);
    return L;
}

/// Every generator of the expansion on one basis, for inspection and reassembly checks.
struct GeneratorSet {
    BasisDescriptor basis;
    Superoperator L_I, L_E, L1, L2, L_joint;
    Mat V1, V_1L, V_1c, V2, V_2L, V_2c;
};

inline GeneratorSet build_generators(const SystemParams& p) {
    const InternalCouplings c = internal_couplings(p);
    FirstOrder f = build_first_order(p);
    SecondOrder s = build_second_order(p);
    return {c.basis,
            build_internal_liouvillian(p),
            build_motional_liouvillian(p),
            std::move(f.L1),
            std::move(s.L2),
            build_joint_liouvillian(p),
            c.V1, c.V_1L, c.V_1c, c.V2, c.V_2L, c.V_2c};
}

struct DipoleOperators {
    Mat D0, D1, D2;
};

/// D = D0 + D1 + D2 with D1 = -i eta sigma (b + b^dagger) cos(psi), D2 = -(eta^2/2) sigma (b + b^dagger)^2 cos^2(psi).
inline DipoleOperators build_dipole_operators(const SystemParams& p, double psi) {
    p.validate();
    const JointOperators j = joint_operators(p.basis());
    const double cp = std::abs(std::cos(psi)) < 1e-15 ? 0.0 : std::cos(psi);
    return {j.S, Mat(-I * p.eta * cp * (j.S * j.X)), Mat(-0.5 * p.eta * p.eta * cp * cp * (j.S * j.X * j.X))};
}

}  // namespace cavityspec
