#include <gtest/gtest.h>

#include "cavityspec/cooling.hpp"
#include "cavityspec/params.hpp"
#include "support.hpp"

using namespace cavityspec;
using namespace cavityspec::testing;

namespace {

/// s(nu) = int_0^inf e^(i nu t) Tr{V1 e^(L_I t) V1 rho} dt with the stationary part integrated analytically.
cplx time_domain_force_spectrum(const InternalModel& m, double nu_arg, double dt, double t_max) {
    const Mat& V = m.couplings.V1;
    const Mat& rho = m.rho_st.matrix;
    const cplx c_inf = (V * rho).trace() * (V * rho).trace();
    const Mat P = (m.L_I.m * dt).exp();
    Vec y = vectorize(Mat(V * rho));
    const Vec v = vectorize(Mat(V.adjoint()));
    const auto steps = static_cast<long>(std::ceil(t_max / dt / 2.0)) * 2;
    cplx acc = 0.0;
    for (long i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(i) * dt;
        const double w = (i == 0 || i == steps) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        acc += w * std::exp(I * nu_arg * t) * (v.dot(y) - c_inf);
        y = P * y;
    }
    return acc * dt / 3.0 + I * c_inf / nu_arg;
}

}  // namespace

TEST(ForceSpectrum, VanishesWithoutDrive) {
    SystemParams p = preset("fig4").params;
    p.Omega = 0.0;
    const CoolingCoefficients c = cooling_coefficients(p);
    for (const ForceSpectrum& f : {c.at_minus_nu, c.at_plus_nu}) {
        EXPECT_LT(std::abs(f.s_L), 1e-14);
        EXPECT_LT(std::abs(f.s_c), 1e-14);
        EXPECT_LT(std::abs(f.s_cL), 1e-14);
        EXPECT_LT(std::abs(f.s_total), 1e-14);
    }
    EXPECT_LT(std::abs(c.A_plus), 1e-14);
    EXPECT_LT(std::abs(c.A_minus), 1e-14);
}

TEST(ForceSpectrum, CavityOnlyGradient) {
    const SystemParams p = preset("fig6").params;
    for (double nu : {-1.0, 1.0}) {
        const ForceSpectrum f = dipole_force_spectrum(p, nu);
        EXPECT_LT(std::abs(f.s_total - f.s_c), 1e-15 * std::max(1.0, std::abs(f.s_c)));
    }
}

TEST(ForceSpectrum, MatchesTimeDomainIntegral) {
    SystemParams p = preset("fig6").params;
    p.kappa = 1.0;
    p.phi_L_factor = 0.5;
    const InternalModel m = internal_model(p);
    for (double nu : {-1.0, 1.0}) {
        const cplx s = dipole_force_spectrum(m, nu).s_total;
        const cplx td = time_domain_force_spectrum(m, nu, 2e-4, 80.0);
        EXPECT_LT(std::abs(s - td), 1e-6 * std::abs(s)) << "nu = " << nu;
    }
}

TEST(ForceSpectrum, SingularShiftRaises) {
    Mat h = Mat::Zero(2, 2);
    h(1, 1) = 1.0;
    const Superoperator L = hamiltonian_superop(h);
    try {
        detail::shifted_internal_solver(L.m, 1.0);
        FAIL() << "expected SingularityError";
    } catch (const SingularityError& e) {
        EXPECT_NEAR(std::abs(e.eigenvalue - cplx(0.0, -1.0)), 0.0, 1e-12);
    }
}

TEST(CoolingCoefficients, NoRecoilNoDriveNoDiffusion) {
    SystemParams p = preset("fig5").params;
    p.alpha = 0.0;
    p.Omega = 0.0;
    const CoolingCoefficients c = cooling_coefficients(p);
    EXPECT_EQ(c.diffusion_D, 0.0);
    EXPECT_LT(std::abs(c.A_plus), 1e-14);
    EXPECT_LT(std::abs(c.A_minus), 1e-14);
}

TEST(CoolingCoefficients, PresetsAreInCoolingRegime) {
    for (const std::string& name : preset_names()) {
        const CoolingCoefficients c = cooling_coefficients(preset(name).params);
        SCOPED_TRACE(name);
        EXPECT_FALSE(c.heating_regime);
        EXPECT_GT(c.A_minus, c.A_plus);
        EXPECT_GT(c.A_plus, 0.0);
        EXPECT_LT(c.n_mean, 1.0);
        EXPECT_NEAR(c.n_mean, c.A_plus / (c.A_minus - c.A_plus), 1e-15);
    }
}

TEST(CoolingCoefficients, Fig6IsStronglyCooled) {
    const CoolingCoefficients c = cooling_coefficients(preset("fig6").params);
    EXPECT_LT(c.A_plus / c.A_minus, 1e-2);
}

TEST(CoolingCoefficients, DiffusionFromExcitedPopulation) {
    const SystemParams p = preset("fig4").params;
    const CoolingCoefficients c = cooling_coefficients(p);
    EXPECT_NEAR(c.diffusion_D, p.alpha * p.gamma / 2.0 * c.excited_population, 1e-15);
    EXPECT_NEAR(c.alpha, 0.4, 1e-10);
}

TEST(CoolingCoefficients, FrequencyUnitsScaleOut) {
    SystemParams p = preset("fig5").params;
    const CoolingCoefficients a = cooling_coefficients(p);
    SystemParams q = p;
    const double f = 2.5;
    q.nu *= f; q.Delta *= f; q.delta_c *= f; q.Omega *= f; q.g *= f; q.gamma *= f; q.kappa *= f;
    const CoolingCoefficients b = cooling_coefficients(q);
    EXPECT_NEAR(a.A_minus, b.A_minus, 1e-12 * a.A_minus);
    EXPECT_NEAR(a.n_mean, b.n_mean, 1e-10 * a.n_mean);
}

TEST(RateEquation, GroundStateWithoutHeating) {
    const RVec p = rate_equation_steady(0.0, 2.0, 10);
    EXPECT_NEAR(p(0), 1.0, 1e-15);
    EXPECT_NEAR(p.tail(10).cwiseAbs().sum(), 0.0, 1e-15);
}

TEST(RateEquation, GeometricSolution) {
    const RVec p = rate_equation_steady(1.0, 3.0, 40);
    double mean = 0.0;
    for (Eigen::Index n = 0; n < p.size(); ++n) mean += static_cast<double>(n) * p(n);
    EXPECT_NEAR(mean, 0.5, 1e-12);
    EXPECT_LT(0.5 * (p - thermal_populations(0.5, 40)).cwiseAbs().sum(), 1e-8);
}

TEST(RateEquation, StationaryUnderRightHandSide) {
    for (const std::string& name : preset_names()) {
        const CoolingCoefficients c = cooling_coefficients(preset(name).params);
        const RVec p = rate_equation_steady(c.A_plus, c.A_minus, 40);
        EXPECT_LT(rate_equation_rhs(p, c.A_plus, c.A_minus, 0.05).cwiseAbs().maxCoeff(), 1e-16) << name;
        double mean = 0.0;
        for (Eigen::Index n = 0; n < p.size(); ++n) mean += static_cast<double>(n) * p(n);
        EXPECT_NEAR(mean, c.n_mean, 1e-8 * c.n_mean) << name;
        for (Eigen::Index n = 0; n + 1 < p.size(); ++n)
            if (p(n) > 1e-280) {
                EXPECT_NEAR(p(n + 1) / p(n), c.A_plus / c.A_minus, 1e-10) << name;
            }
    }
}

TEST(RateEquation, ConservesProbability) {
    std::mt19937 rng(61);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    RVec p(12);
    for (Eigen::Index n = 0; n < p.size(); ++n) p(n) = u(rng);
    EXPECT_NEAR(rate_equation_rhs(p, 0.3, 0.9, 0.1).sum(), 0.0, 1e-15);
}

TEST(RateEquation, HeatingRegimeRejected) {
    EXPECT_THROW(rate_equation_steady(2.0, 1.0, 10), HeatingRegimeError);
    EXPECT_THROW(rate_equation_steady(1.0, 1.0, 10), HeatingRegimeError);
    EXPECT_THROW(rate_equation_steady(-1.0, 1.0, 10), ValidationError);
}
