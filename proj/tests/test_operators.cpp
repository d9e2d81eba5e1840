#include <gtest/gtest.h>

#include "cavityspec/liouvillian.hpp"
#include "cavityspec/params.hpp"
#include "support.hpp"

using namespace cavityspec;
using namespace cavityspec::testing;

namespace {

Vec basis_ket(Eigen::Index n, Eigen::Index k) {
    Vec v = Vec::Zero(n);
    v(k) = 1.0;
    return v;
}

}  // namespace

TEST(Basis, SingleExcitationLabelsAndDimension) {
    const BasisDescriptor b = BasisDescriptor::make(2, 4, true);
    EXPECT_EQ(b.internal_dim(), 3);
    EXPECT_EQ(b.vib_dim, 5);
    EXPECT_EQ(b.dim(), 15);
    EXPECT_EQ(b.index_of(Electronic::g, 0), 0);
    EXPECT_EQ(b.index_of(Electronic::g, 1), 1);
    EXPECT_EQ(b.index_of(Electronic::e, 0), 2);
    EXPECT_EQ(b.index_of(Electronic::e, 1), -1);
    EXPECT_NO_THROW(b.validate());
}

TEST(Basis, FullPhotonBasis) {
    const BasisDescriptor b = BasisDescriptor::make(2, 3, false);
    EXPECT_EQ(b.internal_dim(), 6);
    EXPECT_EQ(b.dim(), 24);
    EXPECT_EQ(b.index_of(Electronic::e, 2), 5);
}

TEST(Basis, InvalidTruncationsThrow) {
    EXPECT_THROW(BasisDescriptor::make(2, -1, true), ValidationError);
    EXPECT_THROW(BasisDescriptor::make(-1, 3, false), ValidationError);
    EXPECT_THROW(BasisDescriptor::make(0, 3, true), ValidationError);
    BasisDescriptor dup = BasisDescriptor::make(1, 2, false);
    dup.internal_labels[1] = dup.internal_labels[0];
    EXPECT_THROW(dup.validate(), ValidationError);
}

TEST(Ladder, SigmaLowersExcitedToGround) {
    for (bool single : {true, false}) {
        const BasisDescriptor b = BasisDescriptor::make(2, 2, single);
        const LadderOperators l = ladder_operators(b);
        const Vec out = l.sigma * basis_ket(b.internal_dim(), b.index_of(Electronic::e, 0));
        EXPECT_NEAR(std::abs(out(b.index_of(Electronic::g, 0)) - 1.0), 0.0, 1e-15);
        EXPECT_NEAR(out.norm(), 1.0, 1e-15);
    }
}

TEST(Ladder, MotionalLoweringAmplitude) {
    const BasisDescriptor b = BasisDescriptor::make(1, 5, true);
    const Mat bm = ladder_operators(b).b;
    const Vec out = bm * basis_ket(6, 2);
    EXPECT_NEAR(std::abs(out(1) - std::sqrt(2.0)), 0.0, 1e-15);
    EXPECT_NEAR(out.norm(), std::sqrt(2.0), 1e-15);
    EXPECT_NEAR((bm * basis_ket(6, 0)).norm(), 0.0, 0.0);
}

TEST(Ladder, CreationOutOfSingleExcitationSpaceVanishes) {
    const BasisDescriptor b = BasisDescriptor::make(2, 2, true);
    const LadderOperators l = ladder_operators(b);
    const Vec out = l.a.adjoint() * basis_ket(3, b.index_of(Electronic::g, 1));
    EXPECT_EQ(out.norm(), 0.0);
    const Vec up = l.a.adjoint() * basis_ket(3, b.index_of(Electronic::g, 0));
    EXPECT_NEAR(std::abs(up(b.index_of(Electronic::g, 1)) - 1.0), 0.0, 1e-15);
}

TEST(Ladder, FullBasisCommutator) {
    const BasisDescriptor b = BasisDescriptor::make(3, 4, false);
    const LadderOperators l = ladder_operators(b);
    const Mat comm = l.a * l.a.adjoint() - l.a.adjoint() * l.a;
    for (Eigen::Index i = 0; i < comm.rows(); ++i) {
        const bool top = b.internal_labels[static_cast<std::size_t>(i)].photons == 3;
        EXPECT_NEAR(comm(i, i).real(), top ? -3.0 : 1.0, 1e-14);
    }
}

TEST(Vectorization, RoundTripAndIdentityPattern) {
    std::mt19937 rng(7);
    const Mat x = random_matrix(rng, 5);
    EXPECT_EQ(max_abs(devectorize(vectorize(x)) - x), 0.0);
    const Vec id = vectorize(identity(4));
    for (Eigen::Index k = 0; k < 16; ++k) EXPECT_EQ(id(k), cplx(k % 5 == 0 ? 1.0 : 0.0));
    EXPECT_THROW(devectorize(Vec::Zero(7)), ValidationError);
}

TEST(Vectorization, TraceInner) {
    std::mt19937 rng(8);
    const Mat a = random_matrix(rng, 4), x = random_matrix(rng, 4);
    EXPECT_NEAR(std::abs(trace_inner(vectorize(a), vectorize(x)) - (a.adjoint() * x).trace()), 0.0, 1e-12);
}

TEST(Superoperators, SandwichMatchesKroneckerReference) {
    std::mt19937 rng(9);
    const Mat a = random_matrix(rng, 4), b = random_matrix(rng, 4), x = random_matrix(rng, 4);
    const Superoperator s = sandwich_superop(a, b);
    EXPECT_LT(max_abs(s.m - sandwich_reference(a, b)), 1e-13);
    EXPECT_LT(max_abs(s.apply(x) - a * x * b), 1e-12);
}

TEST(Superoperators, ZeroHamiltonianGivesZeroGenerator) {
    EXPECT_EQ(max_abs(hamiltonian_superop(Mat::Zero(4, 4)).m), 0.0);
}

TEST(Superoperators, DiagonalHamiltonianEigenvalues) {
    Mat h = Mat::Zero(3, 3);
    const double e[3] = {0.0, 1.5, -2.25};
    for (int i = 0; i < 3; ++i) h(i, i) = e[i];
    const Superoperator s = hamiltonian_superop(h);
    EXPECT_LT(max_abs(s.m - Mat(s.m.diagonal().asDiagonal())), 1e-15);
    for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(std::abs(s.m(k * 3 + j, k * 3 + j) - (-I * (e[j] - e[k]))), 0.0, 1e-15);
}

TEST(Superoperators, HamiltonianActsAsCommutator) {
    std::mt19937 rng(10);
    const Mat h = random_hermitian(rng, 5), x = random_matrix(rng, 5);
    EXPECT_LT(max_abs(hamiltonian_superop(h).apply(x) - (-I * (h * x - x * h))), 1e-12);
}

TEST(Superoperators, NonHermitianHamiltonianRejected) {
    std::mt19937 rng(11);
    EXPECT_THROW(hamiltonian_superop(random_matrix(rng, 3)), ValidationError);
}

TEST(Superoperators, NegativeRateRejected) {
    EXPECT_THROW(lindblad_dissipator(fock_lowering(3), -0.1), ValidationError);
}

TEST(Superoperators, SpontaneousDecayOfExcitedPopulation) {
    const double gamma = 2.5;
    const BasisDescriptor b = BasisDescriptor::make(1, 0, true);
    const LadderOperators l = ladder_operators(b);
    const Superoperator d = lindblad_dissipator(l.sigma, gamma);
    const int e = b.index_of(Electronic::e, 0);
    Mat rho = Mat::Zero(3, 3);
    rho(e, e) = 1.0;
    for (double t : {0.1, 0.5, 2.0}) {
        const Mat r = propagate(d.m, rho, t);
        EXPECT_NEAR(r(e, e).real(), std::exp(-gamma * t), 1e-12);
        EXPECT_NEAR(r.trace().real(), 1.0, 1e-12);
    }
}

TEST(Superoperators, CavityDecayOfPhotonNumber) {
    const double kappa = 0.7;
    const Mat a = fock_lowering(4);
    const Superoperator d = lindblad_dissipator(a, kappa);
    Mat rho = Mat::Zero(4, 4);
    rho(3, 3) = 1.0;
    for (double t : {0.3, 1.0, 4.0}) {
        const Mat r = propagate(d.m, rho, t);
        EXPECT_NEAR((a.adjoint() * a * r).trace().real(), 3.0 * std::exp(-kappa * t), 1e-11);
    }
}

TEST(Superoperators, DissipatorPreservesTraceAndHermiticity) {
    std::mt19937 rng(12);
    const Superoperator d = lindblad_dissipator(random_matrix(rng, 5), 1.3);
    for (int k = 0; k < 100; ++k) {
        const Mat rho = random_density(rng, 5);
        const Mat out = d.apply(rho);
        EXPECT_LT(std::abs(out.trace()), 1e-12);
        EXPECT_LT(max_abs(out - out.adjoint()), 1e-12);
    }
}

TEST(JointOperators, OrderingIsInternalThenMotional) {
    const BasisDescriptor b = BasisDescriptor::make(1, 3, true);
    const JointOperators j = joint_operators(b);
    const LadderOperators l = ladder_operators(b);
    EXPECT_LT(max_abs(j.S * j.B - kron(l.sigma, l.b)), 1e-15);
    EXPECT_LT(max_abs(j.S * j.B - j.B * j.S), 1e-15);
    EXPECT_LT(max_abs(j.X - j.X.adjoint()), 1e-15);
}

TEST(JointGenerator, PreservesTraceAndHermiticityOnRandomStates) {
    for (const std::string& name : preset_names()) {
        SystemParams p = preset(name).params;
        p.n_max = 4;
        const Superoperator L = build_joint_liouvillian(p);
        std::mt19937 rng(13);
        for (int k = 0; k < 100; ++k) {
            const Mat rho = random_density(rng, p.basis().dim());
            const Mat out = L.apply(rho);
            EXPECT_LT(std::abs(out.trace()), 1e-10) << name;
            EXPECT_LT(max_abs(out - out.adjoint()), 1e-10) << name;
        }
    }
}
