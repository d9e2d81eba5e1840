#include <gtest/gtest.h>

#include "cavityspec/oracle.hpp"
#include "support.hpp"

using namespace cavityspec;
using namespace cavityspec::testing;

namespace {

SystemParams small(const std::string& name, int n_max) {
    SystemParams p = preset(name).params;
    p.n_max = n_max;
    return p;
}

std::vector<cplx> phasor_samples(double omega0, double gamma, double h, std::size_t n) {
    std::vector<cplx> c(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * h;
        c[i] = std::exp(cplx(-gamma, omega0) * t);
    }
    return c;
}

}  // namespace

TEST(Quadrature, SimpsonWeightsIntegrateCubicsExactly) {
    for (std::size_t n : {5u, 6u, 101u}) {
        const double h = 0.1;
        const std::vector<double> w = detail::simpson_weights(n, h);
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += w[i] * 1.0;
        EXPECT_NEAR(acc, h * static_cast<double>(n - 1), 1e-13);
        if (n % 2 == 1) {
            double cube = 0.0;
            for (std::size_t i = 0; i < n; ++i) cube += w[i] * std::pow(static_cast<double>(i) * h, 3);
            EXPECT_NEAR(cube, std::pow(h * static_cast<double>(n - 1), 4) / 4.0, 1e-12);
        }
    }
}

TEST(Quadrature, DampedPhasorGivesLorentzian) {
    const double omega0 = 0.7, gamma = 0.05, h = 0.01;
    const std::size_t n = static_cast<std::size_t>(40.0 / gamma / h) + 1;
    const RVec grid = uniform_grid(-1.0, 2.0, 301);
    const RVec s = half_line_fourier(phasor_samples(omega0, gamma, h, n), h, grid);
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
        const double d = grid(i) - omega0;
        EXPECT_NEAR(s(i), gamma / (gamma * gamma + d * d), 1e-8);
    }
}

TEST(Quadrature, UndampedPhasorLineWidthSetByWindow) {
    const double omega0 = -0.4, h = 0.01, T = 50.0;
    const std::size_t n = static_cast<std::size_t>(T / h) + 1;
    const RVec grid = uniform_grid(-1.0, 0.2, 121);
    const RVec s = half_line_fourier(phasor_samples(omega0, 0.0, h, n), h, grid);
    Eigen::Index peak = 0;
    s.maxCoeff(&peak);
    EXPECT_NEAR(grid(peak), omega0, 1e-12);
    EXPECT_NEAR(s(peak), T, 1e-8);
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
        const double d = omega0 - grid(i);
        if (std::abs(d) > 1e-9) {
            EXPECT_NEAR(s(i), std::sin(d * T) / d, 1e-7);
        }
    }
}

TEST(PropagationConfig, InvalidSettingsRejected) {
    PropagationConfig c;
    c.t_max = 10.0;
    c.t_switch = 20.0;
    EXPECT_THROW(c.validate(), ValidationError);
    c.t_switch = 1.0;
    c.dt = 0.0;
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(PropagationConfig, HorizonsFollowTheSpectrum) {
    const SystemParams p = small("fig6", 2);
    const PropagationConfig c = PropagationConfig::for_params(p);
    EXPECT_GT(c.t_max, c.t_switch);
    EXPECT_LE(c.dt_fast, 0.05 / p.Delta + 1e-15);
    EXPECT_NO_THROW(c.validate());
}

TEST(TimeDomain, UndrivenSystemIsDark) {
    SystemParams p = preset("fig4").params;
    p.Omega = 0.0;
    p.n_max = 0;
    const PropagationConfig c = PropagationConfig::for_params(p);
    const auto s = time_domain_spectra(p, {0.0}, true, uniform_grid(-2.0, 2.0, 41), c);
    ASSERT_EQ(s.size(), 2u);
    for (const Spectrum& x : s) {
        EXPECT_LT(x.inelastic.cwiseAbs().maxCoeff(), 1e-14);
        EXPECT_LT(x.elastic_weight, 1e-28);
        EXPECT_EQ(x.method, "time-domain");
    }
}

TEST(TimeDomain, AgreesWithResolventOnFig6) {
    const SystemParams p = small("fig6", 2);
    const RVec grid = uniform_grid(-3.0, 3.0, 241);
    const auto td = time_domain_spectra(p, {kPi / 2, kPi}, true, grid, PropagationConfig::for_params(p));
    const JointModel model(p);
    SpectrumRequest req;
    req.psi_at = {kPi / 2, kPi};
    req.cav = true;
    req.grid = grid;
    req.method = SpectrumMethod::resolvent;
    const auto fd = emission_spectra(model, req);
    ASSERT_EQ(td.size(), fd.size());
    for (std::size_t k = 0; k < td.size(); ++k) {
        EXPECT_LT(max_relative_difference(td[k].inelastic, fd[k].inelastic), 1e-3) << k;
        EXPECT_NEAR(td[k].elastic_weight / fd[k].elastic_weight, 1.0, 1e-4) << k;
    }
}

TEST(TimeDomain, ShortHorizonIsInconclusive) {
    const SystemParams p = small("fig6", 2);
    PropagationConfig c = PropagationConfig::for_params(p);
    c.t_max = 30.0;
    c.t_switch = std::min(c.t_switch, 10.0);
    EXPECT_THROW(time_domain_spectra(p, {}, true, uniform_grid(-1.0, 1.0, 11), c), InconclusiveOracleError);
}

TEST(Metrics, MaxRelativeDifference) {
    RVec a(3), b(3);
    a << 1.0, 2.0, 3.0;
    b << 1.0, 2.5, 4.0;
    EXPECT_DOUBLE_EQ(max_relative_difference(a, b), 0.25);
}

TEST(WienerKhinchin, BothChannelsNormalized) {
    const JointModel m(small("fig4", 5));
    for (Channel ch : {Channel::at, Channel::cav}) {
        const WienerKhinchinReport r = wiener_khinchin_check(m, ch, 0.0);
        EXPECT_TRUE(r.passed) << to_string(ch) << " " << r.relative_error;
        EXPECT_LT(r.relative_error, 1e-6);
        EXPECT_GT(r.points, 0);
    }
    const WienerKhinchinReport perp = wiener_khinchin_check(m, Channel::at, kPi / 2);
    EXPECT_LT(perp.relative_error, 1e-6);
}

TEST(WienerKhinchin, DarkSystemHasNoWeight) {
    SystemParams p = preset("fig5").params;
    p.Omega = 0.0;
    p.n_max = 0;
    const WienerKhinchinReport r = wiener_khinchin_check(p, Channel::cav);
    EXPECT_EQ(r.expected, 0.0);
    EXPECT_TRUE(r.passed);
}

TEST(Convergence, Fig5PhononNumberIsConverged) {
    const ConvergenceReport r = convergence_certificate(preset("fig5").params, CertifiedQuantity::n_mean);
    EXPECT_LT(r.motional_drift, 1e-3);
    EXPECT_TRUE(r.motional_passed);
    EXPECT_EQ(r.n_max_reference, 20);
}

TEST(Convergence, SmallTruncationOfFig4IsFlagged) {
    const ConvergenceReport r = convergence_certificate(small("fig4", 3), CertifiedQuantity::n_mean);
    EXPECT_FALSE(r.passed);
    EXPECT_FALSE(r.basis_passed);
    EXPECT_GT(r.basis_drift, 1e-3);
}

TEST(Convergence, InternalQuantitiesIgnoreMotionalTruncation) {
    SystemParams p = preset("fig6").params;
    p.eta = 0.0;
    const CoolingCoefficients a = cooling_coefficients(p);
    p.n_max = 20;
    const CoolingCoefficients b = cooling_coefficients(p);
    EXPECT_EQ(a.A_plus, b.A_plus);
    EXPECT_EQ(a.A_minus, b.A_minus);
    EXPECT_EQ(a.n_mean, b.n_mean);
}
