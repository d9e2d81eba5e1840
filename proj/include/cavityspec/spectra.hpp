#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <vector>

#include "cooling.hpp"
#include "lapack.hpp"
#include "liouvillian.hpp"
#include "operators.hpp"
#include "params.hpp"
#include "steadystate.hpp"
#include "types.hpp"

namespace cavityspec {

enum class Channel { at, cav };

inline std::string to_string(Channel c) { return c == Channel::at ? "at" : "cav"; }

inline Channel channel_from_string(const std::string& s) {
    if (s == "at") return Channel::at;
    if (s == "cav") return Channel::cav;
    throw ValidationError("unknown channel '" + s + "' (expected at or cav)");
}

/// How the resolvent is evaluated on a grid.
enum class SpectrumMethod { automatic, resolvent, eigen };

/// Spectrum on a grid of (omega - omega_L)/nu. The elastic delta peak is kept as a separate weight.
struct Spectrum {
    Channel channel = Channel::at;
    double psi = 0.0;
    RVec grid;
    RVec inelastic;
    double elastic_weight = 0.0;
    std::uint64_t params_hash = 0;
    int n_max = 0;
    double eta = 0.0;
    std::string method;
    Warnings warnings;
};

/// Eigenvalues with right and left elements normalized to Tr{check(lambda') rho(lambda)} = delta.
struct SpectralDecomposition {
    Vec eigenvalues;
    Mat right;  ///< column k is vec(rho(lambda_k))
    Mat left;   ///< row k gives Tr{check(lambda_k) X} = left.row(k) * vec(X)
    double biorthogonality_residual = 0.0;
    Eigen::Index kernel_index = -1;

    Mat right_element(Eigen::Index k) const { return devectorize(right.col(k)); }
    Mat left_element(Eigen::Index k) const { return devectorize(Vec(left.row(k).transpose())).transpose(); }
    /// P^lambda X = rho(lambda) Tr{check(lambda) X}.
    Mat project(Eigen::Index k, const Mat& x) const {
        return right_element(k) * cplx(left.row(k) * vectorize(x));
    }
};

namespace detail {

inline std::string clustered_eigenvalues(const Vec& ev, double tol) {
    std::ostringstream os;
    int shown = 0;
    for (Eigen::Index i = 0; i < ev.size() && shown < 8; ++i)
        for (Eigen::Index j = i + 1; j < ev.size() && shown < 8; ++j)
            if (std::abs(ev(i) - ev(j)) < tol) {
                os << " (" << ev(i).real() << "," << ev(i).imag() << ")~(" << ev(j).real() << "," << ev(j).imag() << ")";
                ++shown;
            }
    return os.str();
}

}  // namespace detail

/// Right/left eigen-elements of a superoperator with biorthogonal normalization.
inline SpectralDecomposition liouvillian_eigendecomposition(const Superoperator& L, double tol = 1e-8) {
    const auto n = L.m.rows();
    lapack::Eig e = lapack::eig(L.m);
    SpectralDecomposition d;
    d.eigenvalues = e.values;
    d.right = std::move(e.vectors);
    const lapack::LU lu(d.right);
    d.left = lu.solve(identity(n));
    d.biorthogonality_residual = (d.left * d.right - identity(n)).cwiseAbs().maxCoeff();
    const double nrm = norm_estimate(L.m);
    if (!std::isfinite(d.biorthogonality_residual) || d.biorthogonality_residual > tol || lu.clamped_pivots() > 0) {
        throw NumericalError("liouvillian_eigendecomposition: generator is defective to working precision; clustered eigenvalues:" +
                             detail::clustered_eigenvalues(d.eigenvalues, 1e-6 * std::max(1.0, nrm)));
    }
    const double thr = static_cast<double>(n) * static_cast<double>(n) * std::numeric_limits<double>::epsilon() * nrm;
    int count = 0;
    for (Eigen::Index k = 0; k < n; ++k)
        if (std::abs(d.eigenvalues(k)) <= thr) {
            ++count;
            d.kernel_index = k;
        }
    if (count == 1) {
        const cplx tr = d.right_element(d.kernel_index).trace();
        if (std::abs(tr) > 0) {
            d.right.col(d.kernel_index) /= tr;
            d.left.row(d.kernel_index) *= tr;
        }
    } else {
        d.kernel_index = -1;
    }
    return d;
}

/// U^(i l nu) X = sum_n |n><n| X |n+l><n+l| as a superoperator on the motional space.
inline Superoperator motional_projector(int ell, int n_max) {
    if (n_max < 0) throw ValidationError("motional_projector: n_max must be >= 0");
    if (std::abs(ell) > n_max) throw ValidationError("motional_projector: |ell| must not exceed n_max");
    const int dm = n_max + 1;
    Superoperator u = zero_superop(dm);
    for (int n = 0; n < dm; ++n) {
        const int m = n + ell;
        if (m < 0 || m >= dm) continue;
        const int k = m * dm + n;
        u.m(k, k) = 1.0;
    }
    return u;
}

/// Packed upper-Hessenberg shifted solver: (z - H) y = r for many right-hand sides at once.
class HessenbergSolver {
public:
    HessenbergSolver() = default;
    explicit HessenbergSolver(const Mat& H) : n_(H.rows()), scale_(H.cwiseAbs().maxCoeff()) {
        rows_.resize(static_cast<std::size_t>(n_ * n_));
        for (Eigen::Index i = 0; i < n_; ++i)
            for (Eigen::Index j = 0; j < n_; ++j) rows_[static_cast<std::size_t>(i * n_ + j)] = H(i, j);
    }

    Eigen::Index size() const { return n_; }

    /// Solves (z - H) Y = R. Returns false when a pivot vanishes (z on an eigenvalue).
    bool solve(cplx z, const Mat& R, Mat& Y) const {
        const Eigen::Index n = n_;
        const Eigen::Index k_rhs = R.cols();
        std::vector<cplx> U(static_cast<std::size_t>(n * (n + 1) / 2));
        std::vector<cplx> cur(static_cast<std::size_t>(n)), nxt(static_cast<std::size_t>(n));
        Mat rr = R;  // right-hand sides follow the row swaps
        auto offset = [n](Eigen::Index k) { return static_cast<std::size_t>(k * n - k * (k - 1) / 2); };
        const double tiny = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, scale_ + std::abs(z));

        for (Eigen::Index j = 0; j < n; ++j) cur[static_cast<std::size_t>(j)] = -rows_[static_cast<std::size_t>(j)];
        cur[0] += z;
        for (Eigen::Index k = 0; k + 1 < n; ++k) {
            const cplx* hrow = rows_.data() + (k + 1) * n;
            for (Eigen::Index j = k; j < n; ++j) nxt[static_cast<std::size_t>(j)] = -hrow[j];
            nxt[static_cast<std::size_t>(k + 1)] += z;
            if (std::abs(nxt[static_cast<std::size_t>(k)]) > std::abs(cur[static_cast<std::size_t>(k)])) {
                std::swap(cur, nxt);
                rr.row(k).swap(rr.row(k + 1));
            }
            const cplx piv = cur[static_cast<std::size_t>(k)];
            if (std::abs(piv) < tiny) return false;
            const cplx m = nxt[static_cast<std::size_t>(k)] / piv;
            const double mr = m.real(), mi = m.imag();
            double* np = reinterpret_cast<double*>(nxt.data() + k + 1);
            const double* cp = reinterpret_cast<const double*>(cur.data() + k + 1);
            const Eigen::Index len = n - k - 1;
            for (Eigen::Index j = 0; j < len; ++j) {
                const double cr = cp[2 * j], ci = cp[2 * j + 1];
                np[2 * j] -= mr * cr - mi * ci;
                np[2 * j + 1] -= mr * ci + mi * cr;
            }
            rr.row(k + 1) -= m * rr.row(k);
            std::copy(cur.begin() + k, cur.end(), U.begin() + static_cast<std::ptrdiff_t>(offset(k)));
            std::swap(cur, nxt);
        }
        if (std::abs(cur[static_cast<std::size_t>(n - 1)]) < tiny) return false;
        U[offset(n - 1)] = cur[static_cast<std::size_t>(n - 1)];

        Y.resize(n, k_rhs);
        std::vector<cplx> acc(static_cast<std::size_t>(k_rhs));
        for (Eigen::Index i = n - 1; i >= 0; --i) {
            const cplx* urow = U.data() + offset(i);
            for (Eigen::Index c = 0; c < k_rhs; ++c) acc[static_cast<std::size_t>(c)] = rr(i, c);
            for (Eigen::Index c = 0; c < k_rhs; ++c) {
                double sr = 0.0, si = 0.0;
                const double* up = reinterpret_cast<const double*>(urow + 1);
                const double* yp = reinterpret_cast<const double*>(Y.col(c).data() + i + 1);
                const Eigen::Index len = n - i - 1;
                for (Eigen::Index j = 0; j < len; ++j) {
                    const double ur = up[2 * j], ui = up[2 * j + 1], yr = yp[2 * j], yi = yp[2 * j + 1];
                    sr += ur * yr - ui * yi;
                    si += ur * yi + ui * yr;
                }
                Y(i, c) = (acc[static_cast<std::size_t>(c)] - cplx(sr, si)) / urow[0];
            }
        }
        return true;
    }

private:
    Eigen::Index n_ = 0;
    double scale_ = 0.0;
    std::vector<cplx> rows_;
};

/// Joint atom-cavity-motion model: Liouvillian, steady state and cached factorizations used by every
/// spectrum evaluation. Lazy factorizations are guarded, so one model may be shared across threads.
class JointModel {
public:
    explicit JointModel(const SystemParams& p) : raw_(p), scaled_(p.scaled()) {
        p.validate();
        warnings_ = p.warnings();
        basis_ = p.basis();
        ops_ = joint_operators(basis_);
        L_ = build_joint_liouvillian(p);
        rho_ = joint_steady_state(L_);
        const Mat& x = ops_.X;
        comps_ = {ops_.S, Mat(-I * scaled_.eta * (ops_.S * x)), Mat(-0.5 * scaled_.eta * scaled_.eta * (ops_.S * x * x)), ops_.A};
        const Mat& r = rho_.matrix;
        for (const Mat& e : comps_) {
            const cplx mean = (e * r).trace();
            means_.push_back(mean);
            rhs_.push_back(vectorize(Mat(e * r - mean * r)));
        }
    }
    JointModel(const JointModel&) = delete;
    JointModel& operator=(const JointModel&) = delete;

    const SystemParams& params() const { return raw_; }
    const BasisDescriptor& basis() const { return basis_; }
    const JointOperators& operators() const { return ops_; }
    const Superoperator& liouvillian() const { return L_; }
    const DensityOperator& steady() const { return rho_; }
    const Warnings& warnings() const { return warnings_; }
    Eigen::Index superop_dim() const { return L_.m.rows(); }

    /// Component operators E0 = sigma, E1 = -i eta sigma x, E2 = -(eta^2/2) sigma x^2 and E3 = a.
    const Mat& component(int k) const { return comps_[static_cast<std::size_t>(k)]; }
    cplx component_mean(int k) const { return means_[static_cast<std::size_t>(k)]; }

    double expectation(const Mat& op) const { return (op * rho_.matrix).trace().real(); }
    double mean_phonon_number() const { return expectation(Mat(ops_.B.adjoint() * ops_.B)); }

    struct EigenData {
        Vec values;
        Mat right_coeff;  ///< row k: vec(E_k)^dagger V
        Mat left_coeff;   ///< row k: (V^-1 b_k)^T
        Eigen::Index kernel_index = -1;
    };

    struct HessData {
        HessenbergSolver solver;
        Mat c;  ///< column k: Q^dagger vec(E_k)
        Mat d;  ///< column k: Q^dagger b_k
    };

    const EigenData& eigen() const {
        std::call_once(eig_once_, [this] { eig_ = std::make_unique<EigenData>(compute_eigen()); });
        return *eig_;
    }
    bool has_eigen() const { return static_cast<bool>(eig_); }

    const HessData& hessenberg() const {
        std::call_once(hess_once_, [this] { hess_ = std::make_unique<HessData>(compute_hessenberg()); });
        return *hess_;
    }

    /// Resolvent matrix M_jk(omega) = Tr{E_j^dagger [i omega - L]^-1 (E_k rho - rho <E_k>)} for the listed
    /// components, one K x K block per grid point (stored as columns j*K + k).
    Mat resolvent_pairs(const std::vector<int>& comps, const RVec& grid, SpectrumMethod method, Warnings* warn = nullptr,
                        std::string* used = nullptr) const {
        const SpectrumMethod m = choose(method, grid.size());
        if (used) *used = m == SpectrumMethod::eigen ? "eigen" : "resolvent";
        return m == SpectrumMethod::eigen ? pairs_eigen(comps, grid) : pairs_resolvent(comps, grid, warn);
    }

    /// Eigenvalue of L nearest to z (inverse iteration with the Hessenberg solver, or the cached eigenvalues).
    cplx nearest_eigenvalue(cplx z) const {
        if (eig_) {
            const Vec& ev = eig_->values;
            Eigen::Index best = 0;
            for (Eigen::Index k = 1; k < ev.size(); ++k)
                if (std::abs(ev(k) - z) < std::abs(ev(best) - z)) best = k;
            return ev(best);
        }
        const HessData& h = hessenberg();
        const auto n = h.solver.size();
        Mat x = Mat::Ones(n, 1) / std::sqrt(static_cast<double>(n));
        cplx lambda = z;
        for (int it = 0; it < 40; ++it) {
            Mat y;
            if (!h.solver.solve(z, x, y)) return z;
            const cplx xy = (x.adjoint() * y)(0, 0);
            const cplx est = z - 1.0 / xy;
            x = y / y.norm();
            if (std::abs(est - lambda) <= 1e-12 * std::max(1.0, std::abs(est)) && it > 2) {
                lambda = est;
                break;
            }
            lambda = est;
        }
        return lambda;
    }

private:
    SpectrumMethod choose(SpectrumMethod m, Eigen::Index points) const {
        if (m != SpectrumMethod::automatic) return m;
        if (eig_) return SpectrumMethod::eigen;
        return static_cast<double>(points) > 0.5 * static_cast<double>(superop_dim()) ? SpectrumMethod::eigen
                                                                                       : SpectrumMethod::resolvent;
    }

    Mat deflated() const {
        const Eigen::Index d = basis_.dim();
        return L_.m - vectorize(rho_.matrix) * vectorize(identity(d)).adjoint();
    }

    EigenData compute_eigen() const {
        EigenData e;
        lapack::Eig ed = lapack::eig(L_.m);
        e.values = ed.values;
        const lapack::LU lu(ed.vectors);
        const auto n = L_.m.rows();
        const auto K = static_cast<Eigen::Index>(comps_.size());
        Mat B(n, K), C(n, K);
        for (Eigen::Index k = 0; k < K; ++k) {
            B.col(k) = rhs_[static_cast<std::size_t>(k)];
            C.col(k) = vectorize(comps_[static_cast<std::size_t>(k)]);
        }
        e.left_coeff = lu.solve(B).transpose();
        e.right_coeff = C.adjoint() * ed.vectors;
        const double thr = static_cast<double>(n) * static_cast<double>(n) * std::numeric_limits<double>::epsilon() *
                           norm_estimate(L_.m);
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < n; ++k)
            if (std::abs(e.values(k)) < std::abs(e.values(best))) best = k;
        e.kernel_index = std::abs(e.values(best)) <= std::max(thr, 1e-9) ? best : -1;
        return e;
    }

    HessData compute_hessenberg() const {
        lapack::Hessenberg hs(deflated());
        const auto n = L_.m.rows();
        const auto K = static_cast<Eigen::Index>(comps_.size());
        Mat B(n, K), C(n, K);
        for (Eigen::Index k = 0; k < K; ++k) {
            B.col(k) = rhs_[static_cast<std::size_t>(k)];
            C.col(k) = vectorize(comps_[static_cast<std::size_t>(k)]);
        }
        return HessData{HessenbergSolver(hs.H()), hs.apply_qh(C), hs.apply_qh(B)};
    }

    Mat pairs_eigen(const std::vector<int>& comps, const RVec& grid) const {
        const EigenData& e = eigen();
        const auto K = static_cast<Eigen::Index>(comps.size());
        const auto n = e.values.size();
        // Weight products F_jk(lambda); the stationary eigenvalue carries the elastic part and is skipped.
        std::vector<Vec> F;
        for (int j : comps)
            for (int k : comps) {
                Vec f = e.right_coeff.row(j).transpose().cwiseProduct(e.left_coeff.row(k).transpose());
                if (e.kernel_index >= 0) f(e.kernel_index) = 0.0;
                F.push_back(std::move(f));
            }
        Mat out(grid.size(), K * K);
        Vec inv(n);
        for (Eigen::Index w = 0; w < grid.size(); ++w) {
            const cplx z = I * grid(w);
            for (Eigen::Index l = 0; l < n; ++l) inv(l) = 1.0 / (z - e.values(l));
            for (Eigen::Index p = 0; p < K * K; ++p) out(w, p) = F[static_cast<std::size_t>(p)].transpose() * inv;
        }
        return out;
    }

    Mat pairs_resolvent(const std::vector<int>& comps, const RVec& grid, Warnings* warn) const {
        const HessData& h = hessenberg();
        const auto K = static_cast<Eigen::Index>(comps.size());
        Mat R(h.d.rows(), K), C(h.c.rows(), K);
        for (Eigen::Index k = 0; k < K; ++k) {
            R.col(k) = h.d.col(comps[static_cast<std::size_t>(k)]);
            C.col(k) = h.c.col(comps[static_cast<std::size_t>(k)]);
        }
        const bool idealized = scaled_.kappa == 0.0 || scaled_.gamma == 0.0;
        Mat out(grid.size(), K * K);
        Mat Y;
        for (Eigen::Index w = 0; w < grid.size(); ++w) {
            double om = grid(w);
            if (!h.solver.solve(I * om, R, Y)) {
                if (idealized && h.solver.solve(I * (om + 1e-9), R, Y)) {
                    if (warn) warn->push_back("grid point " + format_double(om) + " offset by 1e-9 nu from an undamped eigenvalue");
                } else {
                    const cplx lam = nearest_eigenvalue(I * om);
                    std::ostringstream os;
                    os << "shifted solve singular at omega = " << om << " (eigenvalue " << lam.real() << (lam.imag() < 0 ? "" : "+")
                       << lam.imag() << "i); offset the grid, e.g. by 1e-9";
                    throw SingularityError(os.str(), lam);
                }
            }
            const Mat M = C.adjoint() * Y;
            for (Eigen::Index j = 0; j < K; ++j)
                for (Eigen::Index k = 0; k < K; ++k) out(w, j * K + k) = M(j, k);
        }
        return out;
    }

    SystemParams raw_, scaled_;
    Warnings warnings_;
    BasisDescriptor basis_;
    JointOperators ops_;
    Superoperator L_;
    DensityOperator rho_;
    std::vector<Mat> comps_;
    std::vector<cplx> means_;
    std::vector<Vec> rhs_;
    mutable std::once_flag eig_once_, hess_once_;
    mutable std::unique_ptr<EigenData> eig_;
    mutable std::unique_ptr<HessData> hess_;
};

namespace detail {

inline double clean_cos(double psi) {
    const double c = std::cos(psi);
    return std::abs(c) < 1e-15 ? 0.0 : c;
}

inline void check_positivity(Spectrum& s) {
    if (s.inelastic.size() == 0) return;
    const double peak = s.inelastic.maxCoeff();
    const double low = s.inelastic.minCoeff();
    if (low < -1e-3 * std::max(peak, 0.0))
        s.warnings.push_back("inelastic spectrum below -1e-3 of its peak (min " + format_double(low) + ", peak " +
                             format_double(peak) + ")");
}

}  // namespace detail

/// What to evaluate on one grid in one pass over the resolvent.
struct SpectrumRequest {
    std::vector<double> psi_at;  ///< at-channel detector angles
    bool cav = false;
    RVec grid;
    SpectrumMethod method = SpectrumMethod::automatic;
};

/// Full joint-space spectra: Re Tr{X^dagger [i omega - L]^-1 (X rho - rho <X>)} with X = D0 + D1 + D2 or a.
inline std::vector<Spectrum> emission_spectra(const JointModel& model, const SpectrumRequest& req) {
    std::vector<int> comps;
    bool need_motion = false;
    for (double psi : req.psi_at) need_motion = need_motion || detail::clean_cos(psi) != 0.0;
    if (!req.psi_at.empty()) {
        comps.push_back(0);
        if (need_motion) {
            comps.push_back(1);
            comps.push_back(2);
        }
    }
    const int cav_pos = req.cav ? static_cast<int>(comps.size()) : -1;
    if (req.cav) comps.push_back(3);
    const auto K = static_cast<Eigen::Index>(comps.size());
    Warnings warn = model.warnings();
    std::string used;
    const Mat M = comps.empty() ? Mat() : model.resolvent_pairs(comps, req.grid, req.method, &warn, &used);

    auto make = [&](Channel ch, double psi) {
        Spectrum s;
        s.channel = ch;
        s.psi = psi;
        s.grid = req.grid;
        s.params_hash = params_hash(model.params());
        s.n_max = model.params().n_max;
        s.eta = model.params().eta;
        s.method = used;
        s.warnings = warn;
        return s;
    };

    std::vector<Spectrum> out;
    for (double psi : req.psi_at) {
        const double c = detail::clean_cos(psi);
        std::vector<cplx> w;
        const int na = need_motion ? 3 : 1;
        for (int k = 0; k < na; ++k) w.push_back(std::pow(c, k));
        Spectrum s = make(Channel::at, psi);
        s.inelastic.resize(req.grid.size());
        for (Eigen::Index p = 0; p < req.grid.size(); ++p) {
            cplx acc = 0.0;
            for (int j = 0; j < na; ++j)
                for (int k = 0; k < na; ++k) acc += std::conj(w[static_cast<std::size_t>(j)]) * w[static_cast<std::size_t>(k)] * M(p, j * K + k);
            s.inelastic(p) = acc.real();
        }
        cplx mean = 0.0;
        for (int k = 0; k < na; ++k) mean += w[static_cast<std::size_t>(k)] * model.component_mean(k);
        s.elastic_weight = std::norm(mean);
        detail::check_positivity(s);
        out.push_back(std::move(s));
    }
    if (req.cav) {
        Spectrum s = make(Channel::cav, 0.0);
        s.inelastic = M.col(cav_pos * K + cav_pos).real();
        s.elastic_weight = std::norm(model.component_mean(3));
        detail::check_positivity(s);
        out.push_back(std::move(s));
    }
    return out;
}

inline Spectrum emission_spectrum(const JointModel& model, Channel channel, double psi, const RVec& grid,
                                  SpectrumMethod method = SpectrumMethod::automatic) {
    SpectrumRequest r;
    r.grid = grid;
    r.method = method;
    if (channel == Channel::at) r.psi_at = {psi};
    else r.cav = true;
    return emission_spectra(model, r).front();
}

inline Spectrum emission_spectrum(const SystemParams& p, Channel channel, double psi, const RVec& grid,
                                  SpectrumMethod method = SpectrumMethod::automatic) {
    const JointModel model(p);
    return emission_spectrum(model, channel, psi, grid, method);
}

/// Zeroth-order spectrum from the internal Liouvillian: eigen-sum over lambda_I != 0, elastic part
/// |Tr{X rho_st}|^2 with X = sigma or a.
inline Spectrum zeroth_order_spectrum(const InternalModel& m, Channel channel, const RVec& grid) {
    const Mat& X = channel == Channel::at ? m.couplings.sigma : m.couplings.a;
    const Mat& rho = m.rho_st.matrix;
    const SpectralDecomposition d = liouvillian_eigendecomposition(m.L_I);
    const Vec xr = vectorize(Mat(X * rho));
    const Vec xv = vectorize(X);
    const auto n = d.eigenvalues.size();
    Vec F(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        F(k) = xv.dot(d.right.col(k)) * cplx(d.left.row(k) * xr);
    }
    // The stationary eigenvalue is identified by the kernel test; without a unique kernel the
    // smallest-magnitude eigenvalue plays its role.
    Eigen::Index k0 = d.kernel_index;
    if (k0 < 0) d.eigenvalues.cwiseAbs().minCoeff(&k0);
    Spectrum s;
    s.channel = channel;
    s.psi = m.params.psi;
    s.grid = grid;
    s.inelastic.resize(grid.size());
    for (Eigen::Index w = 0; w < grid.size(); ++w) {
        cplx acc = 0.0;
        for (Eigen::Index k = 0; k < n; ++k)
            if (k != k0) acc += F(k) / (I * grid(w) - d.eigenvalues(k));
        s.inelastic(w) = acc.real();
    }
    s.elastic_weight = std::norm((X * rho).trace());
    s.params_hash = params_hash(m.params);
    s.n_max = m.params.n_max;
    s.eta = 0.0;
    s.method = "internal-eigen";
    return s;
}

inline Spectrum zeroth_order_spectrum(const SystemParams& p, Channel channel, const RVec& grid) {
    return zeroth_order_spectrum(internal_model(p), channel, grid);
}

/// Result of the eta^2 scaling test of the second-order component.
struct ScalingCertificate {
    bool passed = true;
    int points_tested = 0;
    double max_deviation = 0.0;  ///< max |ratio - 4| over tested points
    double core_halfwidth = 0.0;
};

struct SecondOrderResult {
    Spectrum s2;
    ScalingCertificate certificate;
};

/// S2 = emission - zeroth order (elastic and inelastic), with a pointwise eta -> eta/2 ratio test away
/// from the motional line cores at omega = 0, +/-nu, +/-2nu.
inline SecondOrderResult second_order_component(const SystemParams& p, Channel channel, double psi, const RVec& grid,
                                                SpectrumMethod method = SpectrumMethod::automatic) {
    auto s2_at = [&](const SystemParams& q) {
        Spectrum full = emission_spectrum(q, channel, psi, grid, method);
        const Spectrum zero = zeroth_order_spectrum(q, channel, grid);
        full.inelastic -= zero.inelastic;
        full.elastic_weight -= zero.elastic_weight;
        return full;
    };
    SecondOrderResult r;
    if (p.eta == 0.0) {
        r.s2 = zeroth_order_spectrum(p, channel, grid);
        r.s2.inelastic.setZero();
        r.s2.elastic_weight = 0.0;
        r.s2.psi = psi;
        r.s2.method = "identically-zero";
        return r;
    }
    r.s2 = s2_at(p);
    SystemParams half = p;
    half.eta = p.eta / 2.0;
    const Spectrum h = s2_at(half);
    const CoolingCoefficients cc = cooling_coefficients(p);
    const double eta = p.eta;
    r.certificate.core_halfwidth = 20.0 * eta * eta * std::max(std::abs(cc.A_minus), 1e-6);
    const double ref = r.s2.inelastic.cwiseAbs().maxCoeff();
    for (Eigen::Index w = 0; w < grid.size(); ++w) {
        bool in_core = false;
        for (int ell = -2; ell <= 2; ++ell)
            in_core = in_core || std::abs(grid(w) - ell) < r.certificate.core_halfwidth;
        if (in_core || std::abs(r.s2.inelastic(w)) < 1e-3 * ref || std::abs(h.inelastic(w)) == 0.0) continue;
        const double dev = std::abs(r.s2.inelastic(w) / h.inelastic(w) - 4.0);
        r.certificate.max_deviation = std::max(r.certificate.max_deviation, dev);
        ++r.certificate.points_tested;
    }
    r.certificate.passed = r.certificate.max_deviation <= 0.2;
    if (!r.certificate.passed)
        r.s2.warnings.push_back("eta^2 scaling certificate failed (max |ratio - 4| = " +
                                format_double(r.certificate.max_deviation) + "): higher-order contamination");
    return r;
}

struct SidebandWeights {
    double lower = 0.0;
    double upper = 0.0;
};

namespace detail {

inline double interp(const RVec& x, const RVec& y, double t) {
    const auto n = x.size();
    if (t <= x(0)) return y(0);
    if (t >= x(n - 1)) return y(n - 1);
    const auto it = std::upper_bound(x.data(), x.data() + n, t);
    const auto i = static_cast<Eigen::Index>(it - x.data());
    const double f = (t - x(i - 1)) / (x(i) - x(i - 1));
    return y(i - 1) + f * (y(i) - y(i - 1));
}

/// Trapezoid integral of the tabulated function over [a, b] (endpoints linearly interpolated).
inline double trapezoid(const RVec& x, const RVec& y, double a, double b) {
    double acc = 0.0;
    double px = a, py = interp(x, y, a);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (x(i) <= a) continue;
        if (x(i) >= b) break;
        acc += 0.5 * (y(i) + py) * (x(i) - px);
        px = x(i);
        py = y(i);
    }
    acc += 0.5 * (interp(x, y, b) + py) * (b - px);
    return acc;
}

inline void check_coverage(const RVec& g, double a, double b) {
    if (g.size() < 3 || g(0) > a || g(g.size() - 1) < b) throw ValidationError("sideband_weights: grid does not cover the window");
    int inside = 0;
    for (Eigen::Index i = 0; i < g.size(); ++i) inside += (g(i) >= a && g(i) <= b) ? 1 : 0;
    if (inside < 3) throw ValidationError("sideband_weights: fewer than 3 grid points inside the window");
    for (Eigen::Index i = 1; i < g.size(); ++i)
        if (!(g(i) > g(i - 1))) throw ValidationError("sideband_weights: grid must be strictly increasing");
}

}  // namespace detail

/// Trapezoid integrals of the inelastic part over [-1-w, -1+w] and [1-w, 1+w].
inline SidebandWeights sideband_weights(const Spectrum& s, double window = 0.3) {
    detail::check_coverage(s.grid, -1.0 - window, -1.0 + window);
    detail::check_coverage(s.grid, 1.0 - window, 1.0 + window);
    return {detail::trapezoid(s.grid, s.inelastic, -1.0 - window, -1.0 + window),
            detail::trapezoid(s.grid, s.inelastic, 1.0 - window, 1.0 + window)};
}

/// Narrow windows around located sideband lines, with a straight baseline through the window edges removed.
struct NarrowWindows {
    double lower_center = -1.0, lower_halfwidth = 0.0;
    double upper_center = 1.0, upper_halfwidth = 0.0;
};

inline SidebandWeights sideband_weights(const Spectrum& s, const NarrowWindows& w) {
    auto one = [&](double c, double h) {
        detail::check_coverage(s.grid, c - h, c + h);
        const double raw = detail::trapezoid(s.grid, s.inelastic, c - h, c + h);
        const double base = 0.5 * (detail::interp(s.grid, s.inelastic, c - h) + detail::interp(s.grid, s.inelastic, c + h)) * 2.0 * h;
        return raw - base;
    };
    return {one(w.lower_center, w.lower_halfwidth), one(w.upper_center, w.upper_halfwidth)};
}

/// Narrow motional lines near -nu and +nu: the nearest eigenvalue of the joint Liouvillian.
struct SidebandLines {
    cplx lower, upper;
    NarrowWindows windows(double k_widths = 40.0) const {
        return {lower.imag(), k_widths * std::abs(lower.real()), upper.imag(), k_widths * std::abs(upper.real())};
    }
};

inline SidebandLines locate_sidebands(const JointModel& m) {
    return {m.nearest_eigenvalue(cplx(0.0, -1.0)), m.nearest_eigenvalue(cplx(0.0, 1.0))};
}

/// Points c + width * tan(theta) with theta uniform, concentrating samples on a Lorentzian core.
inline std::vector<double> lorentzian_points(double c, double width, double k_widths, int n) {
    std::vector<double> out;
    const double tmax = std::atan(k_widths);
    for (int i = 0; i < n; ++i) {
        const double t = -tmax + 2.0 * tmax * i / (n - 1);
        out.push_back(c + width * std::tan(t));
    }
    return out;
}

inline RVec sorted_unique(std::vector<double> v, double min_gap = 0.0) {
    std::sort(v.begin(), v.end());
    std::vector<double> u;
    for (double x : v)
        if (u.empty() || x - u.back() > min_gap) u.push_back(x);
    return Eigen::Map<RVec>(u.data(), static_cast<Eigen::Index>(u.size()));
}

inline RVec uniform_grid(double a, double b, int n) { return RVec::LinSpaced(n, a, b); }

/// 2001 points over [-3, 3], ten-fold refinement in windows of width 20 max(kappa, eta^2 A_-) around
/// +/-nu, and Lorentzian-resolved points on the located sideband lines.
inline RVec default_grid(const SystemParams& p, const SidebandLines* lines = nullptr) {
    std::vector<double> pts;
    const RVec base = uniform_grid(-3.0, 3.0, 2001);
    pts.assign(base.data(), base.data() + base.size());
    const SystemParams s = p.scaled();
    double a_minus = 0.0;
    try {
        a_minus = std::abs(cooling_coefficients(p).A_minus);
    } catch (const NumericalError&) {
        a_minus = 0.0;
    }
    const double width = 20.0 * std::max(s.kappa, s.eta * s.eta * a_minus);
    const double step = 6.0 / 2000.0 / 10.0;
    for (double c : {-1.0, 1.0}) {
        const int n = static_cast<int>(std::ceil(width / step));
        for (int i = 0; i <= n; ++i) pts.push_back(c - width / 2 + width * i / std::max(n, 1));
    }
    if (lines) {
        for (cplx l : {lines->lower, lines->upper}) {
            const double w = std::max(std::abs(l.real()), 1e-9);
            for (double x : lorentzian_points(l.imag(), w, 200.0, 201)) pts.push_back(x);
        }
    }
    return sorted_unique(pts, 1e-12);
}

}  // namespace cavityspec
