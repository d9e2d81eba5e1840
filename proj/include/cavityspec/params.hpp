#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "operators.hpp"
#include "recoil.hpp"
#include "types.hpp"

namespace cavityspec {

enum class LaserMode { running_wave, standing_wave_node };

inline std::string to_string(LaserMode m) {
    return m == LaserMode::running_wave ? "running_wave" : "standing_wave_node";
}

inline LaserMode laser_mode_from_string(const std::string& s) {
    if (s == "running_wave") return LaserMode::running_wave;
    if (s == "standing_wave_node") return LaserMode::standing_wave_node;
    throw ValidationError("unknown laser_mode '" + s + "' (expected running_wave or standing_wave_node)");
}

/// Physical parameters, geometry and truncation controls. Frequencies are absolute; the numerical
/// core works with frequencies in units of nu (see scaled()).
struct SystemParams {
    double nu = 1.0;
    double Delta = 0.0;    ///< laser-atom detuning omega_L - omega_0
    double delta_c = 0.0;  ///< laser-cavity detuning omega_L - omega_c
    double Omega = 0.0;    ///< laser Rabi frequency
    double g = 0.0;        ///< vacuum Rabi coupling
    double phi = kPi / 4;  ///< cavity-mode phase at the trap center
    double theta_L = 0.0;
    double theta_c = 0.0;
    std::optional<double> phi_L_factor;
    std::optional<double> phi_c_factor;
    LaserMode laser_mode = LaserMode::running_wave;
    double gamma = 10.0;
    double kappa = 0.1;
    double eta = 0.05;
    double alpha = default_alpha();
    double psi = 0.0;
    int N_c = 2;
    int n_max = 15;
    bool single_excitation = true;

    double g_tilde() const { return g * std::cos(phi); }
    double tan_phi() const { return std::tan(phi); }
    double phi_L() const { return phi_L_factor ? *phi_L_factor : std::cos(theta_L); }
    double phi_c() const { return phi_c_factor ? *phi_c_factor : std::cos(theta_c) * std::tan(phi); }

    BasisDescriptor basis() const { return BasisDescriptor::make(N_c, n_max, single_excitation); }

    void validate() const {
        auto finite = [](double v, const char* name) {
            if (!std::isfinite(v)) throw ValidationError(std::string("parameter ") + name + " is not finite");
        };
        finite(nu, "nu"); finite(Delta, "Delta"); finite(delta_c, "delta_c"); finite(Omega, "Omega");
        finite(g, "g"); finite(phi, "phi"); finite(theta_L, "theta_L"); finite(theta_c, "theta_c");
        finite(gamma, "gamma"); finite(kappa, "kappa"); finite(eta, "eta"); finite(alpha, "alpha"); finite(psi, "psi");
        if (!(nu > 0)) throw ValidationError("parameter nu must be > 0");
        if (gamma < 0) throw ValidationError("parameter gamma must be >= 0");
        if (kappa < 0) throw ValidationError("parameter kappa must be >= 0");
        if (eta < 0) throw ValidationError("parameter eta must be >= 0");
        if (Omega < 0) throw ValidationError("parameter Omega must be >= 0");
        if (g < 0) throw ValidationError("parameter g must be >= 0");
        if (alpha < 0 || alpha > 1) throw ValidationError("parameter alpha must lie in [0, 1]");
        if (n_max < 0) throw ValidationError("parameter n_max must be >= 0");
        if (N_c < 0) throw ValidationError("parameter N_c must be >= 0");
        if (!single_excitation && N_c < 1) throw ValidationError("parameter N_c must be >= 1");
        if (phi_L_factor) finite(*phi_L_factor, "phi_L_factor");
        if (phi_c_factor) finite(*phi_c_factor, "phi_c_factor");
        if (std::abs(std::tan(phi)) < 1e-12 && std::abs(phi_c()) > 0.0)
            throw ValidationError("singular geometry: tan(phi) = 0 with nonzero phi_c");
    }

    Warnings warnings() const {
        Warnings w;
        if (eta > 0.3) w.push_back("eta > 0.3: Lamb-Dicke expansion unreliable");
        if (n_max < 2) w.push_back("n_max < 2: motional truncation too small");
        return w;
    }

    /// Copy with every frequency expressed in units of nu (nu = 1).
    SystemParams scaled() const {
        SystemParams s = *this;
        s.Delta /= nu; s.delta_c /= nu; s.Omega /= nu; s.g /= nu; s.gamma /= nu; s.kappa /= nu;
        s.nu = 1.0;
        return s;
    }
};

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Canonical text form of every resolved parameter, used for hashing and file headers.
inline std::string canonical_string(const SystemParams& p) {
    std::string s;
    auto add = [&](const char* k, const std::string& v) { s += k; s += '='; s += v; s += ';'; };
    add("nu", format_double(p.nu)); add("Delta", format_double(p.Delta)); add("delta_c", format_double(p.delta_c));
    add("Omega", format_double(p.Omega)); add("g", format_double(p.g)); add("phi", format_double(p.phi));
    add("theta_L", format_double(p.theta_L)); add("theta_c", format_double(p.theta_c));
    add("phi_L", format_double(p.phi_L())); add("phi_c", format_double(p.phi_c()));
    add("laser_mode", to_string(p.laser_mode)); add("gamma", format_double(p.gamma)); add("kappa", format_double(p.kappa));
    add("eta", format_double(p.eta)); add("alpha", format_double(p.alpha)); add("psi", format_double(p.psi));
    add("N_c", std::to_string(p.N_c)); add("n_max", std::to_string(p.n_max));
    add("single_excitation", p.single_excitation ? "true" : "false");
    return s;
}

/// 64-bit FNV-1a hash of canonical_string(p).
inline std::uint64_t params_hash(const SystemParams& p) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : canonical_string(p)) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

/// Named parameter regimes with the detector angles and decay rates plotted for each.
struct Preset {
    std::string name;
    SystemParams params;
    std::vector<double> psi_list;
    std::vector<double> kappa_list;
};

inline std::vector<std::string> preset_names() { return {"fig4", "fig5", "fig6", "fig7"}; }

inline Preset preset(const std::string& name) {
    SystemParams p;
    p.nu = 1.0;
    p.gamma = 10.0;
    p.eta = 0.05;
    p.phi = kPi / 4;
    p.g = 7.0 * std::sqrt(2.0);
    const double r2 = 1.0 / std::sqrt(2.0);
    if (name == "fig4") {
        p.delta_c = -1.0; p.Delta = 500.0; p.Omega = 5.0; p.kappa = 0.1;
        p.phi_c_factor = r2; p.phi_L_factor = r2;
        return {name, p, {0.0, kPi}, {0.1}};
    }
    if (name == "fig5") {
        p.delta_c = 0.0; p.Delta = 48.0; p.Omega = 0.5; p.kappa = 0.01;
        p.phi_c_factor = r2; p.phi_L_factor = r2;
        return {name, p, {0.0, kPi / 2}, {0.01}};
    }
    if (name == "fig6") {
        p.delta_c = 0.5; p.Delta = 32.0; p.Omega = 0.5; p.kappa = 0.01;
        p.phi_c_factor = 1.0; p.phi_L_factor = 0.0;
        return {name, p, {kPi / 2, kPi}, {0.01, 0.1}};
    }
    if (name == "fig7") {
        p.delta_c = 0.5; p.Delta = 23.0; p.Omega = 0.5; p.kappa = 0.01;
        p.laser_mode = LaserMode::standing_wave_node;
        p.phi_c_factor = 1.0; p.phi_L_factor = 1.0;
        return {name, p, {0.0, kPi / 2}, {0.01}};
    }
    throw ValidationError("unknown preset '" + name + "' (expected fig4, fig5, fig6 or fig7)");
}

}  // namespace cavityspec
