#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include "cooling.hpp"
#include "liouvillian.hpp"
#include "params.hpp"
#include "spectra.hpp"
#include "steadystate.hpp"
#include "types.hpp"

namespace cavityspec {

/// Two-stage exponential stepping: a fine step resolves the fast optical coherences until they have
/// decayed, then a coarse step follows the slow motional and cavity lines to t_max.
struct PropagationConfig {
    double t_max = 0.0;
    double dt = 0.1;           ///< coarse step
    double t_switch = 0.0;     ///< end of the fine stage
    double dt_fast = 1e-3;     ///< fine step
    double decay_tolerance = 1e-5;
    std::string method = "dense-exponential-stepping";

    /// Steps and horizons from the spectrum of L: t_max = 14 / (smallest nonzero decay rate), the fine
    /// stage lasts 40 / (smallest decay rate among lines with |Im lambda| > 6), dt_fast = 0.05 / (fastest rate).
    static PropagationConfig for_params(const SystemParams& p, double dt = 0.1) {
        const Superoperator L = build_joint_liouvillian(p);
        const Eigen::ComplexEigenSolver<Mat> es(L.m, false);
        const Vec& ev = es.eigenvalues();
        const SystemParams s = p.scaled();
        double slow = std::numeric_limits<double>::infinity();
        double fast_slowest = std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < ev.size(); ++k) {
            const double re = std::abs(ev(k).real());
            if (std::abs(ev(k)) < 1e-9) continue;
            slow = std::min(slow, re);
            if (std::abs(ev(k).imag()) > 6.0) fast_slowest = std::min(fast_slowest, re);
        }
        if (!std::isfinite(slow) || slow <= 0.0) throw InconclusiveOracleError("propagation config: undamped Liouvillian");
        const double rate = std::max({s.gamma, s.g_tilde(), std::abs(s.Delta), std::abs(s.delta_c), s.kappa, s.nu, s.Omega});
        PropagationConfig c;
        c.dt = dt;
        c.t_max = 14.0 / slow;
        c.dt_fast = 0.05 / rate;
        c.t_switch = std::isfinite(fast_slowest) ? std::min(40.0 / fast_slowest, c.t_max) : 0.0;
        c.t_switch = dt * std::ceil(c.t_switch / dt);
        return c;
    }

    void validate() const {
        if (!(dt > 0) || !(dt_fast > 0) || !(t_max > 0) || t_switch < 0 || t_switch > t_max)
            throw ValidationError("propagation config: need dt, dt_fast, t_max > 0 and 0 <= t_switch <= t_max");
    }
};

namespace detail {

/// Composite Simpson weights for an even number of intervals (trapezoid on a trailing odd interval).
inline std::vector<double> simpson_weights(std::size_t samples, double h) {
    std::vector<double> w(samples, 0.0);
    if (samples < 2) return w;
    const std::size_t intervals = samples - 1;
    const std::size_t even = intervals - intervals % 2;
    for (std::size_t i = 0; i < even; i += 2) {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
    }
    if (even < intervals) {
        w[intervals - 1] += h / 2.0;
        w[intervals] += h / 2.0;
    }
    return w;
}

/// Re sum_i w_i e^(-i omega (t0 + i h)) c_i on every grid frequency, with phasor recurrences refreshed
/// every 4096 samples.
inline RVec weighted_fourier(const cplx* c, const std::vector<double>& w, double t0, double h, const RVec& grid) {
    const auto nw = static_cast<std::size_t>(grid.size());
    std::vector<double> pr(nw), pi(nw), sr(nw), si(nw), ar(nw, 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (i % 4096 == 0) {
            const double t = t0 + static_cast<double>(i) * h;
            for (std::size_t k = 0; k < nw; ++k) {
                const double om = grid(static_cast<Eigen::Index>(k));
                pr[k] = std::cos(om * t);
                pi[k] = -std::sin(om * t);
                sr[k] = std::cos(om * h);
                si[k] = -std::sin(om * h);
            }
        }
        const double vr = w[i] * c[i].real(), vi = w[i] * c[i].imag();
        for (std::size_t k = 0; k < nw; ++k) {
            ar[k] += pr[k] * vr - pi[k] * vi;
            const double r = pr[k] * sr[k] - pi[k] * si[k];
            pi[k] = pr[k] * si[k] + pi[k] * sr[k];
            pr[k] = r;
        }
    }
    return Eigen::Map<const RVec>(ar.data(), grid.size());
}

}  // namespace detail

/// Re int_0^T e^(-i omega t) c(t) dt by composite Simpson quadrature of samples c(i h), i = 0..N.
inline RVec half_line_fourier(const std::vector<cplx>& samples, double h, const RVec& grid) {
    return detail::weighted_fourier(samples.data(), detail::simpson_weights(samples.size(), h), 0.0, h, grid);
}

namespace detail {

/// Stationary state from powers of the one-step propagator, independent of any kernel solver. The
/// propagator is squared until it spans the horizon, then applied until the state stops changing.
inline Mat propagated_steady_state(const Mat& P, double dt, double horizon, Eigen::Index d) {
    Mat Q = P;
    for (double span = dt; span < horizon; span *= 2.0) Q = (Q * Q).eval();
    Vec v = vectorize(Mat(identity(d) / static_cast<double>(d)));
    for (int k = 0; k < 200; ++k) {
        const Vec next = Q * v;
        const double change = (next - v).cwiseAbs().maxCoeff();
        v = next;
        if (change < 1e-15) break;
    }
    Mat rho = devectorize(v);
    rho = 0.5 * (rho + rho.adjoint()).eval();
    return rho / rho.trace().real();
}

}  // namespace detail

/// Spectra computed literally from correlation functions: propagate vec(X rho_st) under exp(L tau),
/// record c(tau) = Tr{X^dagger .}, remove the non-decaying offset (the elastic weight) and take the
/// half-line Fourier transform S(omega) = Re int_0^inf e^(-i omega tau) [c(tau) - c(inf)] dtau by
/// Simpson quadrature on the requested grid.
inline std::vector<Spectrum> time_domain_spectra(const SystemParams& p, const std::vector<double>& psi_at, bool cav,
                                                 const RVec& grid, const PropagationConfig& cfg) {
    p.validate();
    cfg.validate();
    const Superoperator L = build_joint_liouvillian(p);
    const BasisDescriptor basis = p.basis();
    const Eigen::Index d = basis.dim();
    const Mat P_slow = (L.m * cfg.dt).exp();
    const Mat rho = detail::propagated_steady_state(P_slow, cfg.dt, 20.0 * cfg.t_max, d);

    std::vector<Mat> ops;
    std::vector<Spectrum> out;
    for (double psi : psi_at) {
        const DipoleOperators dip = build_dipole_operators(p, psi);
        ops.push_back(dip.D0 + dip.D1 + dip.D2);
        Spectrum s;
        s.channel = Channel::at;
        s.psi = psi;
        out.push_back(s);
    }
    if (cav) {
        ops.push_back(joint_operators(basis).A);
        Spectrum s;
        s.channel = Channel::cav;
        out.push_back(s);
    }
    const auto K = static_cast<Eigen::Index>(ops.size());
    if (K == 0) return out;
    Mat Y(d * d, K), Xv(d * d, K);
    for (Eigen::Index k = 0; k < K; ++k) {
        Y.col(k) = vectorize(Mat(ops[static_cast<std::size_t>(k)] * rho));
        Xv.col(k) = vectorize(ops[static_cast<std::size_t>(k)]);
    }

    std::vector<std::vector<cplx>> corr(static_cast<std::size_t>(K));
    std::vector<double> times;
    auto record = [&](double t) {
        const Mat c = Xv.adjoint() * Y;
        for (Eigen::Index k = 0; k < K; ++k) corr[static_cast<std::size_t>(k)].push_back(c(k, k));
        times.push_back(t);
    };
    const auto n_fast = static_cast<std::size_t>(std::llround(std::ceil(cfg.t_switch / cfg.dt_fast)));
    const double h_fast = n_fast > 0 ? cfg.t_switch / static_cast<double>(n_fast) : 0.0;
    const Mat P1 = n_fast > 0 ? Mat((L.m * h_fast).exp()) : Mat();
    record(0.0);
    for (std::size_t i = 1; i <= n_fast; ++i) {
        Y = (P1 * Y).eval();
        record(static_cast<double>(i) * h_fast);
    }
    const auto n_slow = static_cast<std::size_t>(std::llround(std::ceil((cfg.t_max - cfg.t_switch) / cfg.dt)));
    for (std::size_t i = 1; i <= n_slow; ++i) {
        Y = (P_slow * Y).eval();
        record(cfg.t_switch + static_cast<double>(i) * cfg.dt);
    }

    const std::size_t total = times.size();
    const std::size_t tail_begin = total - std::max<std::size_t>(n_slow / 10, 1);
    std::vector<cplx> offsets(static_cast<std::size_t>(K));
    for (Eigen::Index k = 0; k < K; ++k) {
        std::vector<cplx>& c = corr[static_cast<std::size_t>(k)];
        cplx offset = 0.0;
        for (std::size_t i = tail_begin; i < total; ++i) offset += c[i];
        offset /= static_cast<double>(total - tail_begin);
        double head = 0.0, tail = 0.0;
        for (std::size_t i = 0; i < total; ++i) {
            c[i] -= offset;
            if (i < tail_begin) head = std::max(head, std::abs(c[i]));
            else tail = std::max(tail, std::abs(c[i]));
        }
        if (tail > cfg.decay_tolerance * std::max(head, 1e-300) && head > 0.0) {
            std::ostringstream os;
            os << "time-domain oracle inconclusive: correlation not decayed at t_max = " << cfg.t_max << " (tail/peak "
               << tail / head << ")";
            throw InconclusiveOracleError(os.str());
        }
        offsets[static_cast<std::size_t>(k)] = offset;
    }

    const std::vector<double> w_fast = detail::simpson_weights(n_fast + 1, h_fast);
    const std::vector<double> w_slow = detail::simpson_weights(n_slow + 1, cfg.dt);
    for (Eigen::Index k = 0; k < K; ++k) {
        Spectrum& s = out[static_cast<std::size_t>(k)];
        s.grid = grid;
        const std::vector<cplx>& c = corr[static_cast<std::size_t>(k)];
        s.inelastic = detail::weighted_fourier(c.data(), w_fast, 0.0, h_fast, grid) +
                      detail::weighted_fourier(c.data() + n_fast, w_slow, cfg.t_switch, cfg.dt, grid);
        s.elastic_weight = offsets[static_cast<std::size_t>(k)].real();
        s.params_hash = params_hash(p);
        s.n_max = p.n_max;
        s.eta = p.eta;
        s.method = "time-domain";
    }
    return out;
}

inline Spectrum time_domain_spectrum(const SystemParams& p, Channel channel, double psi, const RVec& grid,
                                     const PropagationConfig& cfg) {
    if (channel == Channel::at) return time_domain_spectra(p, {psi}, false, grid, cfg).front();
    return time_domain_spectra(p, {}, true, grid, cfg).front();
}

/// max |a - b| / max |b| over a common grid.
inline double max_relative_difference(const RVec& a, const RVec& b) {
    const double scale = b.cwiseAbs().maxCoeff();
    return scale > 0.0 ? (a - b).cwiseAbs().maxCoeff() / scale : (a - b).cwiseAbs().maxCoeff();
}

struct WienerKhinchinReport {
    Channel channel = Channel::at;
    double psi = 0.0;
    double integral = 0.0;  ///< (1/pi) int S domega, tail included
    double tail = 0.0;      ///< (1/pi) contribution beyond the support window
    double elastic = 0.0;
    double expected = 0.0;  ///< Tr{X^dagger X rho_st}
    double relative_error = 0.0;
    Eigen::Index points = 0;  ///< spectrum evaluations
    bool passed = false;
    double tolerance = 1e-3;
};

namespace detail {

/// Eigenvalue weights F_k = (vec X^dagger v_k)(w_k . b_X) of the spectrum of X = sum_j c_j E_j.
inline Vec spectral_weights(const JointModel& m, const std::vector<int>& comps, const std::vector<double>& coeffs) {
    const JointModel::EigenData& e = m.eigen();
    Vec r = Vec::Zero(e.values.size()), l = Vec::Zero(e.values.size());
    for (std::size_t j = 0; j < comps.size(); ++j) {
        r += coeffs[j] * e.right_coeff.row(comps[j]).transpose();
        l += coeffs[j] * e.left_coeff.row(comps[j]).transpose();
    }
    Vec f = r.cwiseProduct(l);
    if (e.kernel_index >= 0) f(e.kernel_index) = 0.0;
    return f;
}

}  // namespace detail

/// Normalization audit (1/pi) int S domega + elastic = Tr{X^dagger X rho_st}. The inelastic spectrum is the
/// eigen-sum Re sum_k F_k / (i omega - lambda_k), integrated by adaptive Gauss-Kronrod between breakpoints
/// at every line center and at center +/- width and +/- 30 widths, over a window enclosing all lines; the
/// 1/omega^2 tails beyond the window add S(W) W on each side.
inline WienerKhinchinReport wiener_khinchin_check(const JointModel& m, Channel channel, double psi = 0.0, double tol = 1e-3) {
    WienerKhinchinReport r;
    r.channel = channel;
    r.psi = psi;
    r.tolerance = tol;
    std::vector<int> comps;
    std::vector<double> coeffs;
    if (channel == Channel::cav) {
        comps = {3};
        coeffs = {1.0};
    } else {
        const double c = detail::clean_cos(psi);
        comps = {0, 1, 2};
        coeffs = {1.0, c, c * c};
    }
    const Vec F = detail::spectral_weights(m, comps, coeffs);
    const Vec& ev = m.eigen().values;
    const auto n = ev.size();
    std::vector<double> lre(static_cast<std::size_t>(n)), lim(static_cast<std::size_t>(n)), fre(static_cast<std::size_t>(n)),
        fim(static_cast<std::size_t>(n));
    for (Eigen::Index k = 0; k < n; ++k) {
        lre[static_cast<std::size_t>(k)] = ev(k).real();
        lim[static_cast<std::size_t>(k)] = ev(k).imag();
        fre[static_cast<std::size_t>(k)] = F(k).real();
        fim[static_cast<std::size_t>(k)] = F(k).imag();
    }
    Eigen::Index evaluations = 0;
    auto S = [&](double om) {
        ++evaluations;
        double acc = 0.0;
        for (std::size_t k = 0; k < lre.size(); ++k) {
            // Re[F / (-re + i (om - im))]
            const double a = -lre[k], b = om - lim[k];
            acc += (fre[k] * a + fim[k] * b) / (a * a + b * b);
        }
        return acc;
    };

    double reach = 3.0;
    for (Eigen::Index k = 0; k < n; ++k) reach = std::max(reach, std::abs(ev(k).imag()) + 50.0 * std::abs(ev(k).real()));
    const double W = 2.0 * reach;
    std::vector<double> breaks = {-W, W};
    for (Eigen::Index k = 0; k < n; ++k) {
        if (k == m.eigen().kernel_index) continue;
        const double c = ev(k).imag(), w = std::abs(ev(k).real());
        for (double off : {0.0, -w, w, -30.0 * w, 30.0 * w})
            if (std::abs(c + off) < W) breaks.push_back(c + off);
    }
    const RVec bp = sorted_unique(breaks, 1e-14 * W);
    double integral = 0.0;
    for (Eigen::Index i = 1; i < bp.size(); ++i)
        integral += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(S, bp(i - 1), bp(i), 6, 1e-8);
    r.tail = (S(-W) + S(W)) * W / kPi;
    r.integral = integral / kPi + r.tail;
    cplx mean = 0.0;
    Mat X = Mat::Zero(m.component(0).rows(), m.component(0).cols());
    for (std::size_t j = 0; j < comps.size(); ++j) {
        X += coeffs[j] * m.component(comps[j]);
        mean += coeffs[j] * m.component_mean(comps[j]);
    }
    r.elastic = std::norm(mean);
    r.expected = m.expectation(Mat(X.adjoint() * X));
    r.points = evaluations;
    r.relative_error = std::abs(r.integral + r.elastic - r.expected) / std::max(std::abs(r.expected), 1e-300);
    r.passed = r.expected == 0.0 ? std::abs(r.integral + r.elastic) < 1e-14 : r.relative_error <= tol;
    return r;
}

inline WienerKhinchinReport wiener_khinchin_check(const SystemParams& p, Channel channel, double tol = 1e-3) {
    const JointModel m(p);
    return wiener_khinchin_check(m, channel, p.psi, tol);
}

enum class CertifiedQuantity { spectrum, n_mean };

inline std::string to_string(CertifiedQuantity q) { return q == CertifiedQuantity::spectrum ? "spectrum" : "n_mean"; }

/// Truncation drifts: the motional drift compares n_max with n_max + 5, the basis drift compares the
/// single-excitation basis with N_c = 2 (or N_c with N_c + 1 for a full basis).
struct ConvergenceReport {
    CertifiedQuantity quantity = CertifiedQuantity::n_mean;
    double motional_drift = 0.0;
    double basis_drift = 0.0;
    int n_max = 0, n_max_reference = 0;
    int basis_n_max = 0;  ///< motional truncation used for the basis comparison
    std::string basis_reference;
    double tolerance = 1e-3;
    bool motional_passed = false;
    bool basis_passed = false;
    bool passed = false;
};

namespace detail {

inline SystemParams larger_basis(const SystemParams& p) {
    SystemParams q = p;
    if (p.single_excitation) {
        q.single_excitation = false;
        q.N_c = 2;
    } else {
        q.N_c = p.N_c + 1;
    }
    return q;
}

inline double relative_drift(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline RVec certificate_values(const SystemParams& p, const RVec& grid) {
    const JointModel m(p);
    SpectrumRequest r;
    r.grid = grid;
    r.psi_at = {p.psi};
    r.cav = true;
    r.method = SpectrumMethod::resolvent;
    const std::vector<Spectrum> s = emission_spectra(m, r);
    RVec v(2 * grid.size());
    v << s[0].inelastic / s[0].inelastic.cwiseAbs().maxCoeff(), s[1].inelastic / s[1].inelastic.cwiseAbs().maxCoeff();
    return v;
}

}  // namespace detail

/// Report-only truncation audit. The spectrum drift is the max over both channels of the peak-normalized
/// pointwise difference on 241 points over [-3, 3]; the n_mean motional drift uses the joint steady state
/// and the basis drift uses the cooling-theory n_mean. Basis drifts of joint quantities are evaluated at
/// min(n_max, 5).
inline ConvergenceReport convergence_certificate(const SystemParams& p, CertifiedQuantity q, double tol = 1e-3) {
    p.validate();
    ConvergenceReport r;
    r.quantity = q;
    r.tolerance = tol;
    r.n_max = p.n_max;
    r.n_max_reference = p.n_max + 5;
    const SystemParams bigger = detail::larger_basis(p);
    r.basis_reference = bigger.single_excitation ? "single" : "N_c=" + std::to_string(bigger.N_c);
    SystemParams more = p;
    more.n_max = p.n_max + 5;
    if (q == CertifiedQuantity::n_mean) {
        const JointModel a(p), b(more);
        r.motional_drift = detail::relative_drift(a.mean_phonon_number(), b.mean_phonon_number());
        r.basis_n_max = p.n_max;
        const CoolingCoefficients ca = cooling_coefficients(p), cb = cooling_coefficients(bigger);
        r.basis_drift = ca.heating_regime || cb.heating_regime ? std::numeric_limits<double>::infinity()
                                                               : detail::relative_drift(ca.n_mean, cb.n_mean);
    } else {
        const RVec grid = uniform_grid(-3.0, 3.0, 241);
        const RVec base = detail::certificate_values(p, grid);
        r.motional_drift = (base - detail::certificate_values(more, grid)).cwiseAbs().maxCoeff();
        SystemParams small = p, small_big = bigger;
        small.n_max = small_big.n_max = std::min(p.n_max, 5);
        r.basis_n_max = small.n_max;
        r.basis_drift = (detail::certificate_values(small, grid) - detail::certificate_values(small_big, grid)).cwiseAbs().maxCoeff();
    }
    r.motional_passed = r.motional_drift < tol;
    r.basis_passed = r.basis_drift < tol;
    r.passed = r.motional_passed && r.basis_passed;
    return r;
}

}  // namespace cavityspec
