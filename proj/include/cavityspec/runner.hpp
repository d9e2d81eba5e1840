#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "cooling.hpp"
#include "oracle.hpp"
#include "params.hpp"
#include "spectra.hpp"
#include "types.hpp"

namespace cavityspec::cli {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kDeterminismNote =
    "seedless deterministic computation: identical configuration and build give bit-identical files";

enum class Task { spectrum, cooling, audit, sweep };

inline std::string to_string(Task t) {
    switch (t) {
        case Task::spectrum: return "spectrum";
        case Task::cooling: return "cooling";
        case Task::audit: return "audit";
        case Task::sweep: return "sweep";
    }
    return "spectrum";
}

/// Frequency grid in units of nu. The default grid refines around the motional sidebands.
struct GridSpec {
    bool use_default = true;
    double min = -3.0;
    double max = 3.0;
    int points = 2001;
};

struct SweepSpec {
    std::string axis;
    std::vector<double> values;
};

/// Everything a CLI invocation needs; frequencies are in units of nu.
struct RunConfig {
    std::string name = "run";
    SystemParams params;
    Task task = Task::spectrum;
    bool at = true;
    bool cav = true;
    std::vector<double> psi_list{0.0};
    std::vector<double> kappa_list;  ///< empty: params.kappa only
    GridSpec grid;
    SpectrumMethod method = SpectrumMethod::automatic;
    std::string out_dir = ".";
    std::optional<SweepSpec> sweep;
    int oracle_n_max = 2;
    double sideband_window = 0.3;
};

/// Numeric SystemParams fields addressable from configs and sweep axes.
inline const std::vector<std::string>& param_fields() {
    static const std::vector<std::string> f = {"Delta", "delta_c", "Omega", "g",     "phi",   "theta_L", "theta_c", "phi_L",
                                               "phi_c", "gamma",   "kappa", "eta",   "alpha", "psi",     "N_c",     "n_max"};
    return f;
}

inline bool is_param_field(const std::string& key) {
    const auto& f = param_fields();
    return std::find(f.begin(), f.end(), key) != f.end();
}

inline void set_param(SystemParams& p, const std::string& key, double v) {
    auto as_int = [&](const char* name) {
        if (v != std::floor(v) || std::abs(v) > 1e6) throw ValidationError(std::string("parameter ") + name + " must be an integer");
        return static_cast<int>(v);
    };
    if (key == "Delta") p.Delta = v;
    else if (key == "delta_c") p.delta_c = v;
    else if (key == "Omega") p.Omega = v;
    else if (key == "g") p.g = v;
    else if (key == "phi") p.phi = v;
    else if (key == "theta_L") p.theta_L = v;
    else if (key == "theta_c") p.theta_c = v;
    else if (key == "phi_L") p.phi_L_factor = v;
    else if (key == "phi_c") p.phi_c_factor = v;
    else if (key == "gamma") p.gamma = v;
    else if (key == "kappa") p.kappa = v;
    else if (key == "eta") p.eta = v;
    else if (key == "alpha") p.alpha = v;
    else if (key == "psi") p.psi = v;
    else if (key == "N_c") p.N_c = as_int("N_c");
    else if (key == "n_max") p.n_max = as_int("n_max");
    else throw ValidationError("unknown parameter field '" + key + "'");
}

inline json params_to_json(const SystemParams& p) {
    json j;
    j["nu"] = p.nu;
    j["Delta"] = p.Delta;
    j["delta_c"] = p.delta_c;
    j["Omega"] = p.Omega;
    j["g"] = p.g;
    j["g_tilde"] = p.g_tilde();
    j["phi"] = p.phi;
    j["theta_L"] = p.theta_L;
    j["theta_c"] = p.theta_c;
    j["phi_L"] = p.phi_L();
    j["phi_c"] = p.phi_c();
    j["laser_mode"] = to_string(p.laser_mode);
    j["gamma"] = p.gamma;
    j["kappa"] = p.kappa;
    j["eta"] = p.eta;
    j["alpha"] = p.alpha;
    j["psi"] = p.psi;
    j["N_c"] = p.N_c;
    j["n_max"] = p.n_max;
    j["single_excitation"] = p.single_excitation;
    return j;
}

inline std::string hex(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Short, deterministic number text for column and file names.
inline std::string short_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline RunConfig preset_config(const std::string& name) {
    const Preset pr = preset(name);
    RunConfig c;
    c.name = name;
    c.params = pr.params;
    c.psi_list = pr.psi_list;
    c.kappa_list = pr.kappa_list;
    return c;
}

namespace detail {

/// 1-based line of the first occurrence of "key" at or after byte offset `from`.
inline int line_of_key(const std::string& text, const std::string& key, std::size_t from = 0) {
    const std::size_t pos = text.find("\"" + key + "\"", from);
    if (pos == std::string::npos) return 0;
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

inline int line_of_byte(const std::string& text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

class ConfigReader {
public:
    ConfigReader(const std::string& text, std::string origin) : text_(text), origin_(std::move(origin)) {}

    [[noreturn]] void fail(const std::string& key, const std::string& msg, std::size_t from = 0) const {
        const int line = line_of_key(text_, key, from);
        std::ostringstream os;
        os << origin_;
        if (line > 0) os << ":" << line;
        os << ": " << msg;
        throw ValidationError(os.str());
    }

    double number(const json& j, const std::string& key, std::size_t from = 0) const {
        if (!j.is_number()) fail(key, "field '" + key + "' must be a number", from);
        const double v = j.get<double>();
        if (!std::isfinite(v)) fail(key, "field '" + key + "' must be finite", from);
        return v;
    }

    std::vector<double> numbers(const json& j, const std::string& key, std::size_t from = 0) const {
        if (!j.is_array() || j.empty()) fail(key, "field '" + key + "' must be a non-empty array of numbers", from);
        std::vector<double> v;
        for (const auto& x : j) v.push_back(number(x, key, from));
        return v;
    }

    std::string string(const json& j, const std::string& key, std::size_t from = 0) const {
        if (!j.is_string()) fail(key, "field '" + key + "' must be a string", from);
        return j.get<std::string>();
    }

    bool boolean(const json& j, const std::string& key, std::size_t from = 0) const {
        if (!j.is_boolean()) fail(key, "field '" + key + "' must be true or false", from);
        return j.get<bool>();
    }

    std::size_t offset_of(const std::string& key) const {
        const std::size_t p = text_.find("\"" + key + "\"");
        return p == std::string::npos ? 0 : p;
    }

private:
    const std::string& text_;
    std::string origin_;
};

}  // namespace detail

/// Parses a version-1 JSON run configuration. Errors carry "origin:line:" prefixes.
///
/// {
///   "version": 1, "name": "...", "preset": "fig4",
///   "task": "spectrum" | "cooling" | "audit" | "sweep",
///   "params": { "Delta": 500, "kappa": 0.1, "laser_mode": "running_wave", "single_excitation": true, ... },
///   "channels": ["at", "cav"], "psi_list": [0, 3.14159], "kappa_list": [0.01, 0.1],
///   "grid": { "min": -3, "max": 3, "points": 2001 } | "default",
///   "method": "auto" | "resolvent" | "eigen",
///   "output_dir": "out", "oracle_n_max": 2, "sideband_window": 0.3,
///   "sweep": { "axis": "kappa", "values": [0.01, 0.02] }
/// }
inline RunConfig parse_config(const std::string& text, const std::string& origin = "config") {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        std::ostringstream os;
        os << origin << ":" << detail::line_of_byte(text, e.byte == 0 ? 0 : e.byte - 1) << ": JSON syntax error: " << e.what();
        throw ValidationError(os.str());
    }
    const detail::ConfigReader rd(text, origin);
    if (!j.is_object()) throw ValidationError(origin + ":1: configuration must be a JSON object");
    static const std::vector<std::string> top = {"version", "name",    "preset",      "task",         "params",          "channels",
                                                 "psi_list", "kappa_list", "grid",     "method",       "output_dir",      "oracle_n_max",
                                                 "sweep",   "sideband_window"};
    for (const auto& [k, v] : j.items())
        if (std::find(top.begin(), top.end(), k) == top.end()) rd.fail(k, "unknown field '" + k + "'");
    if (!j.contains("version")) throw ValidationError(origin + ":1: missing field 'version' (expected " + std::to_string(kSchemaVersion) + ")");
    if (rd.number(j["version"], "version") != kSchemaVersion)
        rd.fail("version", "unsupported schema version (expected " + std::to_string(kSchemaVersion) + ")");

    RunConfig c;
    if (j.contains("preset")) {
        const std::string name = rd.string(j["preset"], "preset");
        try {
            c = preset_config(name);
        } catch (const ValidationError& e) {
            rd.fail("preset", e.what());
        }
    }
    if (j.contains("name")) c.name = rd.string(j["name"], "name");
    if (c.name.empty() || c.name.find_first_of("/\\") != std::string::npos) rd.fail("name", "field 'name' must be a plain file stem");
    if (j.contains("task")) {
        const std::string t = rd.string(j["task"], "task");
        if (t == "spectrum") c.task = Task::spectrum;
        else if (t == "cooling") c.task = Task::cooling;
        else if (t == "audit") c.task = Task::audit;
        else if (t == "sweep") c.task = Task::sweep;
        else rd.fail("task", "unknown task '" + t + "' (expected spectrum, cooling, audit or sweep)");
    }
    if (j.contains("params")) {
        const json& pj = j["params"];
        const std::size_t base = rd.offset_of("params");
        if (!pj.is_object()) rd.fail("params", "field 'params' must be an object");
        for (const auto& [k, v] : pj.items()) {
            if (k == "laser_mode") {
                try {
                    c.params.laser_mode = laser_mode_from_string(rd.string(v, k, base));
                } catch (const ValidationError& e) {
                    rd.fail(k, e.what(), base);
                }
            } else if (k == "single_excitation") {
                c.params.single_excitation = rd.boolean(v, k, base);
            } else if (k == "nu") {
                rd.fail(k, "frequencies are in units of nu; 'nu' cannot be set", base);
            } else if (is_param_field(k)) {
                try {
                    set_param(c.params, k, rd.number(v, k, base));
                } catch (const ValidationError& e) {
                    rd.fail(k, e.what(), base);
                }
            } else {
                rd.fail(k, "unknown parameter field '" + k + "'", base);
            }
        }
    }
    if (j.contains("channels")) {
        const json& ch = j["channels"];
        if (!ch.is_array() || ch.empty()) rd.fail("channels", "field 'channels' must be a non-empty array");
        c.at = c.cav = false;
        for (const auto& x : ch) {
            const std::string s = rd.string(x, "channels");
            if (s == "at") c.at = true;
            else if (s == "cav") c.cav = true;
            else rd.fail("channels", "unknown channel '" + s + "' (expected at or cav)");
        }
    }
    if (j.contains("psi_list")) c.psi_list = rd.numbers(j["psi_list"], "psi_list");
    if (j.contains("kappa_list")) {
        c.kappa_list = rd.numbers(j["kappa_list"], "kappa_list");
        for (double k : c.kappa_list)
            if (k < 0) rd.fail("kappa_list", "kappa values must be >= 0");
    } else if (j.contains("params") && j["params"].contains("kappa")) {
        c.kappa_list.clear();
    }
    if (j.contains("grid")) {
        const json& g = j["grid"];
        const std::size_t base = rd.offset_of("grid");
        if (g.is_string() && g.get<std::string>() == "default") {
            c.grid.use_default = true;
        } else if (g.is_object()) {
            c.grid.use_default = false;
            for (const auto& [k, v] : g.items()) {
                if (k == "min") c.grid.min = rd.number(v, k, base);
                else if (k == "max") c.grid.max = rd.number(v, k, base);
                else if (k == "points") {
                    const double n = rd.number(v, k, base);
                    if (n < 2 || n != std::floor(n) || n > 1e7) rd.fail(k, "grid points must be an integer in [2, 1e7]", base);
                    c.grid.points = static_cast<int>(n);
                } else rd.fail(k, "unknown grid field '" + k + "'", base);
            }
            if (!(c.grid.max > c.grid.min)) rd.fail("grid", "grid max must exceed min");
        } else {
            rd.fail("grid", "field 'grid' must be \"default\" or an object {min, max, points}");
        }
    }
    if (j.contains("method")) {
        const std::string m = rd.string(j["method"], "method");
        if (m == "auto") c.method = SpectrumMethod::automatic;
        else if (m == "resolvent") c.method = SpectrumMethod::resolvent;
        else if (m == "eigen") c.method = SpectrumMethod::eigen;
        else rd.fail("method", "unknown method '" + m + "' (expected auto, resolvent or eigen)");
    }
    if (j.contains("output_dir")) c.out_dir = rd.string(j["output_dir"], "output_dir");
    if (j.contains("oracle_n_max")) {
        const double n = rd.number(j["oracle_n_max"], "oracle_n_max");
        if (n < 0 || n != std::floor(n) || n > 60) rd.fail("oracle_n_max", "oracle_n_max must be an integer in [0, 60]");
        c.oracle_n_max = static_cast<int>(n);
    }
    if (j.contains("sideband_window")) {
        c.sideband_window = rd.number(j["sideband_window"], "sideband_window");
        if (!(c.sideband_window > 0.0 && c.sideband_window < 0.5)) rd.fail("sideband_window", "sideband_window must lie in (0, 0.5)");
    }
    if (j.contains("sweep")) {
        const json& s = j["sweep"];
        const std::size_t base = rd.offset_of("sweep");
        if (!s.is_object() || !s.contains("axis") || !s.contains("values"))
            rd.fail("sweep", "field 'sweep' must be an object {axis, values}");
        SweepSpec sw;
        sw.axis = rd.string(s["axis"], "axis", base);
        if (!is_param_field(sw.axis)) rd.fail("axis", "sweep axis '" + sw.axis + "' is not a SystemParams field", base);
        sw.values = rd.numbers(s["values"], "values", base);
        for (const auto& [k, v] : s.items())
            if (k != "axis" && k != "values") rd.fail(k, "unknown sweep field '" + k + "'", base);
        c.sweep = sw;
    }
    if (c.task == Task::sweep && !c.sweep) rd.fail("task", "task 'sweep' needs a 'sweep' object");
    if (c.sweep && c.task != Task::sweep) rd.fail("sweep", "a 'sweep' object requires task 'sweep'");
    try {
        c.params.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(origin + ": " + e.what());
    }
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read configuration file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

/// Decay rates to evaluate: kappa_list or the single params.kappa.
inline std::vector<double> kappas(const RunConfig& c) {
    return c.kappa_list.empty() ? std::vector<double>{c.params.kappa} : c.kappa_list;
}

/// One spectrum column of the CSV.
struct SeriesResult {
    std::string column;
    double kappa = 0.0;
    Spectrum spectrum;
    SidebandWeights window_weights;
    std::optional<SidebandWeights> line_weights;
};

/// Per-decay-rate model summary for the sidecar JSON.
struct ModelSummary {
    SystemParams params;
    CoolingCoefficients cooling;
    double joint_mean_phonon_number = 0.0;
    SidebandLines lines;
    double flux_balance_residual = 0.0;
    std::vector<WienerKhinchinReport> wiener_khinchin;
};

struct SpectrumResult {
    RVec grid;
    std::vector<SeriesResult> series;
    std::vector<ModelSummary> models;
};

inline double flux_balance_residual(const CoolingCoefficients& c) {
    if (c.heating_regime) return std::numeric_limits<double>::quiet_NaN();
    const double down = c.A_minus * c.n_mean;
    const double up = c.A_plus * (c.n_mean + 1.0);
    return std::abs(down - up) / std::max(std::abs(up), 1e-300);
}

inline RVec explicit_grid(const GridSpec& g) { return uniform_grid(g.min, g.max, g.points); }

/// Spectra for every decay rate, channel and detector angle on one common grid.
inline SpectrumResult compute_spectra(const RunConfig& c) {
    SpectrumResult r;
    std::vector<std::unique_ptr<JointModel>> models;
    std::vector<double> ks = kappas(c);
    for (double k : ks) {
        SystemParams p = c.params;
        p.kappa = k;
        models.push_back(std::make_unique<JointModel>(p));
    }
    std::vector<SidebandLines> lines;
    for (const auto& m : models) lines.push_back(locate_sidebands(*m));
    if (c.grid.use_default) {
        std::vector<double> pts;
        for (std::size_t i = 0; i < models.size(); ++i) {
            const RVec g = default_grid(models[i]->params(), &lines[i]);
            pts.insert(pts.end(), g.data(), g.data() + g.size());
        }
        r.grid = sorted_unique(pts, 1e-12);
    } else {
        r.grid = explicit_grid(c.grid);
    }
    for (std::size_t i = 0; i < models.size(); ++i) {
        const JointModel& m = *models[i];
        SpectrumRequest req;
        req.grid = r.grid;
        req.method = c.method;
        if (c.at) req.psi_at = c.psi_list;
        req.cav = c.cav;
        std::vector<Spectrum> s = emission_spectra(m, req);
        const std::string suffix = ks.size() > 1 ? "_kappa_" + short_number(ks[i]) : "";
        for (Spectrum& sp : s) {
            SeriesResult sr;
            sr.kappa = ks[i];
            sr.column = sp.channel == Channel::at ? "S_at_psi_" + short_number(sp.psi) + suffix : "S_cav" + suffix;
            try {
                sr.window_weights = sideband_weights(sp, c.sideband_window);
                sr.line_weights = sideband_weights(sp, lines[i].windows());
            } catch (const ValidationError& e) {
                sp.warnings.push_back(std::string("sideband weights unavailable: ") + e.what());
            }
            sr.spectrum = std::move(sp);
            r.series.push_back(std::move(sr));
        }
        ModelSummary ms;
        ms.params = m.params();
        ms.cooling = cooling_coefficients(m.params());
        ms.joint_mean_phonon_number = m.mean_phonon_number();
        ms.lines = lines[i];
        ms.flux_balance_residual = flux_balance_residual(ms.cooling);
        if (m.has_eigen()) {
            if (c.at)
                for (double psi : c.psi_list) ms.wiener_khinchin.push_back(wiener_khinchin_check(m, Channel::at, psi));
            if (c.cav) ms.wiener_khinchin.push_back(wiener_khinchin_check(m, Channel::cav));
        }
        r.models.push_back(std::move(ms));
    }
    return r;
}

inline json cooling_to_json(const CoolingCoefficients& c) {
    json j;
    j["A_plus"] = c.A_plus;
    j["A_minus"] = c.A_minus;
    j["n_mean"] = c.heating_regime ? json(nullptr) : json(c.n_mean);
    j["heating_regime"] = c.heating_regime;
    j["alpha"] = c.alpha;
    j["diffusion_D"] = c.diffusion_D;
    j["excited_population"] = c.excited_population;
    auto fs = [](const ForceSpectrum& f) {
        json o;
        for (const auto& [name, v] : {std::pair{"s_L", f.s_L}, {"s_c", f.s_c}, {"s_cL", f.s_cL}, {"s_total", f.s_total}})
            o[name] = json::array({v.real(), v.imag()});
        return o;
    };
    j["s_at_minus_nu"] = fs(c.at_minus_nu);
    j["s_at_plus_nu"] = fs(c.at_plus_nu);
    return j;
}

inline json wk_to_json(const WienerKhinchinReport& w) {
    json j;
    j["channel"] = to_string(w.channel);
    if (w.channel == Channel::at) j["psi"] = w.psi;
    j["integral_over_pi"] = w.integral;
    j["tail"] = w.tail;
    j["elastic"] = w.elastic;
    j["expected"] = w.expected;
    j["relative_error"] = w.relative_error;
    j["tolerance"] = w.tolerance;
    j["passed"] = w.passed;
    return j;
}

inline json basis_to_json(const SystemParams& p) {
    const BasisDescriptor b = p.basis();
    json j;
    json labels = json::array();
    for (const auto& l : b.internal_labels) labels.push_back(l.str());
    j["internal_labels"] = labels;
    j["vib_dim"] = b.vib_dim;
    j["joint_dim"] = b.dim();
    j["superoperator_dim"] = b.dim() * b.dim();
    return j;
}

inline std::filesystem::path ensure_dir(const std::string& dir) {
    std::filesystem::path p(dir);
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    if (!std::filesystem::is_directory(p)) throw ValidationError("output directory '" + dir + "' cannot be created");
    return p;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw ValidationError("write failed for '" + path.string() + "'");
}

/// CSV with '#' metadata lines, then `omega_minus_omegaL_over_nu,<series...>`.
inline std::string spectra_csv(const RunConfig& c, const SpectrumResult& r) {
    std::ostringstream os;
    os << "# cavityspec emission spectra (inelastic part; elastic weights in the sidecar JSON)\n";
    os << "# task: " << to_string(c.task) << "; name: " << c.name << "\n";
    for (const auto& m : r.models) {
        const BasisDescriptor b = m.params.basis();
        os << "# params: " << canonical_string(m.params) << "\n";
        os << "# truncation: internal_dim=" << b.internal_dim() << " vib_dim=" << b.vib_dim << " joint_dim=" << b.dim()
           << " params_hash=" << hex(params_hash(m.params)) << "\n";
    }
    os << "# determinism: " << kDeterminismNote << "\n";
    os << "omega_minus_omegaL_over_nu";
    for (const auto& s : r.series) os << "," << s.column;
    os << "\n";
    for (Eigen::Index i = 0; i < r.grid.size(); ++i) {
        os << format_double(r.grid(i));
        for (const auto& s : r.series) os << "," << format_double(s.spectrum.inelastic(i));
        os << "\n";
    }
    return os.str();
}

inline json spectra_sidecar(const RunConfig& c, const SpectrumResult& r) {
    json j;
    j["format"] = "cavityspec-spectra";
    j["schema_version"] = kSchemaVersion;
    j["determinism"] = kDeterminismNote;
    j["name"] = c.name;
    j["task"] = to_string(c.task);
    j["grid_points"] = r.grid.size();
    j["sideband_window"] = c.sideband_window;
    json series = json::array();
    for (const auto& s : r.series) {
        json o;
        o["column"] = s.column;
        o["channel"] = to_string(s.spectrum.channel);
        if (s.spectrum.channel == Channel::at) o["psi"] = s.spectrum.psi;
        o["kappa"] = s.kappa;
        o["elastic_weight"] = s.spectrum.elastic_weight;
        o["method"] = s.spectrum.method;
        o["window_sideband_weights"] = {{"lower", s.window_weights.lower}, {"upper", s.window_weights.upper}};
        if (s.line_weights) o["line_sideband_weights"] = {{"lower", s.line_weights->lower}, {"upper", s.line_weights->upper}};
        o["warnings"] = s.spectrum.warnings;
        series.push_back(o);
    }
    j["series"] = series;
    json models = json::array();
    for (const auto& m : r.models) {
        json o;
        o["params"] = params_to_json(m.params);
        o["params_hash"] = hex(params_hash(m.params));
        o["basis"] = basis_to_json(m.params);
        o["cooling"] = cooling_to_json(m.cooling);
        o["joint_mean_phonon_number"] = m.joint_mean_phonon_number;
        o["sideband_lines"] = {{"lower", {m.lines.lower.real(), m.lines.lower.imag()}},
                               {"upper", {m.lines.upper.real(), m.lines.upper.imag()}}};
        json audit;
        audit["flux_balance_relative_residual"] =
            std::isfinite(m.flux_balance_residual) ? json(m.flux_balance_residual) : json(nullptr);
        json wk = json::array();
        for (const auto& w : m.wiener_khinchin) wk.push_back(wk_to_json(w));
        audit["wiener_khinchin"] = wk;
        o["audit"] = audit;
        models.push_back(o);
    }
    j["models"] = models;
    return j;
}

/// Writes <stem>.csv and <stem>.json; returns the written paths.
inline std::vector<std::string> write_spectra(const RunConfig& c, const SpectrumResult& r, const std::string& stem) {
    const auto dir = ensure_dir(c.out_dir);
    const auto csv = dir / (stem + ".csv");
    const auto side = dir / (stem + ".json");
    write_text(csv, spectra_csv(c, r));
    write_text(side, spectra_sidecar(c, r).dump(2) + "\n");
    return {csv.string(), side.string()};
}

/// Cooling task: rate-equation distribution against the thermal state plus coefficients.
inline std::vector<std::string> run_cooling(const RunConfig& c) {
    const auto dir = ensure_dir(c.out_dir);
    json j;
    j["format"] = "cavityspec-cooling";
    j["schema_version"] = kSchemaVersion;
    j["determinism"] = kDeterminismNote;
    j["name"] = c.name;
    json entries = json::array();
    std::ostringstream csv;
    csv << "# cavityspec phonon distributions from the rate equation\n# determinism: " << kDeterminismNote << "\n";
    csv << "kappa,n,p_rate_equation,p_thermal\n";
    for (double k : kappas(c)) {
        SystemParams p = c.params;
        p.kappa = k;
        const CoolingCoefficients cc = cooling_coefficients(p);
        json o;
        o["params"] = params_to_json(p);
        o["params_hash"] = hex(params_hash(p));
        o["cooling"] = cooling_to_json(cc);
        o["flux_balance_relative_residual"] = cc.heating_regime ? json(nullptr) : json(flux_balance_residual(cc));
        if (!cc.heating_regime) {
            const RVec pr = rate_equation_steady(cc.A_plus, cc.A_minus, p.n_max);
            const RVec th = thermal_populations(cc.n_mean, p.n_max);
            for (Eigen::Index n = 0; n < pr.size(); ++n)
                csv << format_double(k) << "," << n << "," << format_double(pr(n)) << "," << format_double(th(n)) << "\n";
        }
        entries.push_back(o);
    }
    j["entries"] = entries;
    const auto side = dir / (c.name + "_cooling.json");
    const auto table = dir / (c.name + "_cooling.csv");
    write_text(side, j.dump(2) + "\n");
    write_text(table, csv.str());
    return {table.string(), side.string()};
}

struct AuditCheck {
    std::string name;
    bool passed = false;
    double value = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

struct AuditReport {
    std::vector<AuditCheck> checks;
    bool passed = true;
};

/// Oracle equivalence at oracle_n_max, Wiener-Khinchin normalization, flux balance and rate-equation
/// consistency, and truncation certificates at the configured n_max.
inline AuditReport run_audit(const RunConfig& c, const std::function<void(const AuditCheck&)>& on_check = {}) {
    AuditReport r;
    auto add = [&](AuditCheck ch) {
        r.passed = r.passed && ch.passed;
        if (on_check) on_check(ch);
        r.checks.push_back(std::move(ch));
    };
    for (double k : kappas(c)) {
        SystemParams p = c.params;
        p.kappa = k;
        const std::string tag = "[kappa=" + short_number(k) + "] ";
        const CoolingCoefficients cc = cooling_coefficients(p);
        if (cc.heating_regime) {
            add({tag + "cooling regime", false, cc.A_minus - cc.A_plus, 0.0, "A_minus <= A_plus"});
        } else {
            const double fb = flux_balance_residual(cc);
            add({tag + "flux balance A_- n = A_+ (n + 1)", fb <= 1e-10, fb, 1e-10, ""});
            const RVec dist = rate_equation_steady(cc.A_plus, cc.A_minus, 200);
            double mean = 0.0;
            for (Eigen::Index n = 0; n < dist.size(); ++n) mean += static_cast<double>(n) * dist(n);
            const double rel = std::abs(mean - cc.n_mean) / std::max(cc.n_mean, 1e-300);
            add({tag + "rate equation mean vs A_+/(A_- - A_+)", rel <= 1e-8, rel, 1e-8, ""});
        }

        SystemParams small = p;
        small.n_max = c.oracle_n_max;
        const RVec grid = uniform_grid(c.grid.use_default ? -3.0 : c.grid.min, c.grid.use_default ? 3.0 : c.grid.max, 241);
        const PropagationConfig cfg = PropagationConfig::for_params(small);
        const std::vector<double> psis = c.at ? c.psi_list : std::vector<double>{};
        const std::vector<Spectrum> od = time_domain_spectra(small, psis, c.cav, grid, cfg);
        const JointModel sm(small);
        SpectrumRequest req;
        req.grid = grid;
        req.psi_at = psis;
        req.cav = c.cav;
        req.method = SpectrumMethod::resolvent;
        const std::vector<Spectrum> rs = emission_spectra(sm, req);
        for (std::size_t i = 0; i < rs.size(); ++i) {
            const std::string label = rs[i].channel == Channel::at ? "at psi=" + short_number(rs[i].psi) : "cav";
            const double d = max_relative_difference(od[i].inelastic, rs[i].inelastic);
            add({tag + "oracle equivalence " + label + " (n_max=" + std::to_string(small.n_max) + ")", d <= 1e-3, d, 1e-3, ""});
            const double e = std::abs(od[i].elastic_weight - rs[i].elastic_weight) / std::max(rs[i].elastic_weight, 1e-300);
            add({tag + "oracle elastic weight " + label, e <= 1e-4, e, 1e-4, ""});
        }

        const JointModel m(p);
        if (c.at)
            for (double psi : c.psi_list) {
                const WienerKhinchinReport w = wiener_khinchin_check(m, Channel::at, psi);
                add({tag + "Wiener-Khinchin at psi=" + short_number(psi), w.passed, w.relative_error, w.tolerance, ""});
            }
        if (c.cav) {
            const WienerKhinchinReport w = wiener_khinchin_check(m, Channel::cav);
            add({tag + "Wiener-Khinchin cav", w.passed, w.relative_error, w.tolerance, ""});
        }

        for (CertifiedQuantity q : {CertifiedQuantity::n_mean, CertifiedQuantity::spectrum}) {
            const ConvergenceReport cr = convergence_certificate(p, q);
            add({tag + "convergence " + to_string(q) + " motional (n_max " + std::to_string(cr.n_max) + " -> " +
                     std::to_string(cr.n_max_reference) + ")",
                 cr.motional_passed, cr.motional_drift, cr.tolerance, ""});
            add({tag + "convergence " + to_string(q) + " internal basis (-> " + cr.basis_reference + " at n_max " +
                     std::to_string(cr.basis_n_max) + ")",
                 cr.basis_passed, cr.basis_drift, cr.tolerance, ""});
        }
    }
    return r;
}

inline std::vector<std::string> write_audit(const RunConfig& c, const AuditReport& r) {
    const auto dir = ensure_dir(c.out_dir);
    json j;
    j["format"] = "cavityspec-audit";
    j["schema_version"] = kSchemaVersion;
    j["determinism"] = kDeterminismNote;
    j["name"] = c.name;
    j["params"] = params_to_json(c.params);
    j["params_hash"] = hex(params_hash(c.params));
    j["oracle_n_max"] = c.oracle_n_max;
    json checks = json::array();
    for (const auto& ch : r.checks)
        checks.push_back({{"name", ch.name}, {"passed", ch.passed}, {"value", ch.value}, {"tolerance", ch.tolerance}, {"detail", ch.detail}});
    j["checks"] = checks;
    j["passed"] = r.passed;
    const auto path = dir / (c.name + "_audit.json");
    write_text(path, j.dump(2) + "\n");
    return {path.string()};
}

/// Worker count: SPECTRA_THREADS if set (>= 1), else the hardware concurrency, never more than the jobs.
inline unsigned worker_count(std::size_t jobs) {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SPECTRA_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1) throw ValidationError("SPECTRA_THREADS must be a positive integer");
        n = static_cast<unsigned>(v);
    }
    return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

/// Runs job(i) for i in [0, n) on the worker pool. The first error (lowest index) is rethrown.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& job) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                job(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const unsigned w = worker_count(n);
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < w; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// One spectrum file per sweep value plus <name>_sweep_summary.csv with cooling data and sideband ratios.
inline std::vector<std::string> run_sweep(const RunConfig& c) {
    if (!c.sweep) throw ValidationError("sweep task without sweep specification");
    const SweepSpec& sw = *c.sweep;
    const std::size_t n = sw.values.size();
    std::vector<SpectrumResult> results(n);
    std::vector<RunConfig> configs(n, c);
    for (std::size_t i = 0; i < n; ++i) {
        set_param(configs[i].params, sw.axis, sw.values[i]);
        configs[i].params.validate();
        if (sw.axis == "kappa") configs[i].kappa_list.clear();
        configs[i].sweep.reset();
    }
    std::vector<std::vector<std::string>> files(n);
    parallel_for(n, [&](std::size_t i) {
        results[i] = compute_spectra(configs[i]);
        files[i] = write_spectra(configs[i], results[i], c.name + "_" + sw.axis + "_" + short_number(sw.values[i]));
    });
    std::ostringstream os;
    os << "# cavityspec sweep summary; sideband weights integrate the inelastic spectrum over +/-" << short_number(c.sideband_window)
       << " around -nu (lower) and +nu (upper)\n";
    os << "# determinism: " << kDeterminismNote << "\n";
    os << "sweep_" << sw.axis << ",kappa,A_plus,A_minus,n_mean,series,lower,upper,lower_over_upper\n";
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& s : results[i].series) {
            const ModelSummary* ms = nullptr;
            for (const auto& m : results[i].models)
                if (m.params.kappa == s.kappa) ms = &m;
            os << format_double(sw.values[i]) << "," << format_double(s.kappa) << "," << format_double(ms->cooling.A_plus) << ","
               << format_double(ms->cooling.A_minus) << ","
               << (ms->cooling.heating_regime ? std::string("nan") : format_double(ms->cooling.n_mean)) << "," << s.column << ","
               << format_double(s.window_weights.lower) << "," << format_double(s.window_weights.upper) << ","
               << format_double(s.window_weights.lower / s.window_weights.upper) << "\n";
        }
    }
    const auto path = ensure_dir(c.out_dir) / (c.name + "_sweep_summary.csv");
    write_text(path, os.str());
    std::vector<std::string> out;
    for (auto& f : files) out.insert(out.end(), f.begin(), f.end());
    out.push_back(path.string());
    return out;
}

}  // namespace cavityspec::cli
