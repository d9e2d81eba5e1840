#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cavityspec/runner.hpp"

using namespace cavityspec;
using namespace cavityspec::cli;
namespace fs = std::filesystem;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : fallback;
}

std::string spectra_bin() { return env_or("SPECTRA_BIN", "./spectra"); }
std::string config_dir() { return env_or("SPECTRA_CONFIGS", "configs"); }

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("cavityspec_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult run_cli(const std::string& args, const fs::path& dir, const std::string& env = "") {
    const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = env + " '" + spectra_bin() + "' " + args + " > '" + out.string() + "' 2> '" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(out), read_file(err)};
}

std::string expect_validation_error(const std::string& text) {
    try {
        parse_config(text, "cfg.json");
    } catch (const ValidationError& e) {
        return e.what();
    }
    ADD_FAILURE() << "expected ValidationError";
    return {};
}

std::vector<std::string> csv_header(const std::string& csv) {
    std::istringstream is(csv);
    std::string line;
    while (std::getline(is, line))
        if (!line.empty() && line[0] != '#') break;
    std::vector<std::string> cols;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
    return cols;
}

}  // namespace

TEST(Config, PresetOnlyConfigEqualsPreset) {
    const RunConfig c = parse_config(R"({"version": 1, "preset": "fig4"})");
    const RunConfig p = preset_config("fig4");
    EXPECT_EQ(params_hash(c.params), params_hash(p.params));
    EXPECT_EQ(c.psi_list, p.psi_list);
    EXPECT_EQ(c.kappa_list, p.kappa_list);
    EXPECT_EQ(c.name, "fig4");
    EXPECT_EQ(c.task, Task::spectrum);
}

TEST(Config, SampleConfigsParse) {
    for (const char* f : {"fig4.json", "fig6_kappa_sweep.json", "smoke.json", "custom.json"})
        EXPECT_NO_THROW(load_config((fs::path(config_dir()) / f).string())) << f;
    const RunConfig c = load_config((fs::path(config_dir()) / "custom.json").string());
    EXPECT_NEAR(c.params.phi_L(), 0.0, 1e-15);
    EXPECT_NEAR(c.params.phi_c(), 1.0, 1e-15);
}

TEST(Config, OverridesApplyOnTopOfPreset) {
    const RunConfig c = parse_config(R"({"version": 1, "preset": "fig6", "params": {"kappa": 0.05, "n_max": 7}})");
    EXPECT_EQ(c.params.kappa, 0.05);
    EXPECT_EQ(c.params.n_max, 7);
    EXPECT_TRUE(c.kappa_list.empty());
    EXPECT_EQ(c.params.Delta, preset("fig6").params.Delta);
}

TEST(Config, InvalidSweepAxisReportsLine) {
    const std::string msg = expect_validation_error("{\n  \"version\": 1,\n  \"task\": \"sweep\",\n  \"sweep\": {\n    \"axis\": \"temperature\",\n    \"values\": [1]\n  }\n}");
    EXPECT_NE(msg.find("cfg.json:5:"), std::string::npos) << msg;
    EXPECT_NE(msg.find("temperature"), std::string::npos) << msg;
}

TEST(Config, UnknownFieldReportsLine) {
    const std::string msg = expect_validation_error("{\n  \"version\": 1,\n  \"params\": {\n    \"kapa\": 0.1\n  }\n}");
    EXPECT_NE(msg.find("cfg.json:4:"), std::string::npos) << msg;
    const std::string top = expect_validation_error("{\n  \"version\": 1,\n  \"colour\": 3\n}");
    EXPECT_NE(top.find("cfg.json:3:"), std::string::npos) << top;
}

TEST(Config, SyntaxErrorReportsLine) {
    const std::string msg = expect_validation_error("{\n  \"version\": 1,\n  \"name\": \"x\"\n  \"preset\": \"fig4\"\n}");
    EXPECT_NE(msg.find("cfg.json:4:"), std::string::npos) << msg;
}

TEST(Config, RejectedValues) {
    expect_validation_error(R"({"preset": "fig4"})");
    expect_validation_error(R"({"version": 2})");
    expect_validation_error(R"({"version": 1, "params": {"nu": 2.0}})");
    expect_validation_error(R"({"version": 1, "params": {"gamma": -1.0}})");
    expect_validation_error(R"({"version": 1, "params": {"n_max": 2.5}})");
    expect_validation_error(R"({"version": 1, "kappa_list": [-0.1]})");
    expect_validation_error(R"({"version": 1, "preset": "fig9"})");
    expect_validation_error(R"({"version": 1, "grid": {"min": 1, "max": -1, "points": 10}})");
    expect_validation_error(R"({"version": 1, "method": "fastest"})");
    expect_validation_error(R"({"version": 1, "channels": ["photodiode"]})");
    expect_validation_error(R"({"version": 1, "task": "sweep"})");
    expect_validation_error(R"({"version": 1, "sweep": {"axis": "kappa", "values": [0.1]}})");
}

TEST(Spectra, PresetColumnsFollowDetectorAnglesAndDecayRates) {
    RunConfig c = preset_config("fig6");
    c.params.n_max = 3;
    c.grid.use_default = false;
    c.grid.points = 121;
    const SpectrumResult r = compute_spectra(c);
    std::vector<std::string> cols;
    for (const auto& s : r.series) cols.push_back(s.column);
    const std::vector<std::string> expected = {"S_at_psi_1.5708_kappa_0.01", "S_at_psi_3.14159_kappa_0.01", "S_cav_kappa_0.01",
                                               "S_at_psi_1.5708_kappa_0.1",  "S_at_psi_3.14159_kappa_0.1",  "S_cav_kappa_0.1"};
    EXPECT_EQ(cols, expected);
    ASSERT_EQ(r.models.size(), 2u);
    EXPECT_LT(r.models[0].flux_balance_residual, 1e-10);
}

TEST(Spectra, NodePresetUsesStandingWave) {
    const RunConfig c = preset_config("fig7");
    EXPECT_EQ(c.params.laser_mode, LaserMode::standing_wave_node);
    EXPECT_EQ(c.params.phi_c(), 1.0);
}

TEST(Binary, RunIsDeterministic) {
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    const std::string cfg = (fs::path(config_dir()) / "smoke.json").string();
    const CliResult ra = run_cli("run --config '" + cfg + "' --out '" + a.string() + "'", a);
    const CliResult rb = run_cli("run --config '" + cfg + "' --out '" + b.string() + "'", b);
    ASSERT_EQ(ra.code, 0) << ra.err;
    ASSERT_EQ(rb.code, 0) << rb.err;
    for (const char* f : {"smoke.csv", "smoke.json", "smoke_cooling.json", "smoke_cooling.csv"}) {
        ASSERT_TRUE(fs::exists(a / f)) << f;
        EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
    }
    const std::vector<std::string> cols = csv_header(read_file(a / "smoke.csv"));
    const std::vector<std::string> expected = {"omega_minus_omegaL_over_nu", "S_at_psi_0", "S_at_psi_1.5708", "S_cav"};
    EXPECT_EQ(cols, expected);
    const json side = json::parse(read_file(a / "smoke.json"));
    EXPECT_EQ(side["schema_version"], kSchemaVersion);
    EXPECT_EQ(side["grid_points"], 201);
    EXPECT_EQ(side["series"].size(), 3u);
}

TEST(Binary, InvalidConfigExitsWithValidationCode) {
    const fs::path d = scratch("invalid");
    std::ofstream(d / "bad.json") << "{\n  \"version\": 1,\n  \"task\": \"sweep\",\n  \"sweep\": {\"axis\": \"colour\", \"values\": [1]}\n}\n";
    const CliResult r = run_cli("sweep --config '" + (d / "bad.json").string() + "'", d);
    EXPECT_EQ(r.code, 2);
    const json err = json::parse(r.err);
    EXPECT_EQ(err["error"], "validation");
    EXPECT_EQ(err["exit_code"], 2);
    EXPECT_NE(err["message"].get<std::string>().find("bad.json:4:"), std::string::npos);
}

TEST(Binary, UsageErrors) {
    const fs::path d = scratch("usage");
    EXPECT_EQ(run_cli("", d).code, 2);
    EXPECT_EQ(run_cli("run", d).code, 2);
    const CliResult r = run_cli("run --preset fig9", d);
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(json::parse(r.err)["error"], "validation");
}

TEST(Binary, KappaSweepOnFig6) {
    const fs::path d = scratch("sweep");
    std::ofstream(d / "sweep.json") << R"({
  "version": 1,
  "name": "k",
  "preset": "fig6",
  "task": "sweep",
  "params": {"n_max": 3},
  "psi_list": [1.5707963267948966],
  "grid": {"min": -2.0, "max": 2.0, "points": 401},
  "sweep": {"axis": "kappa", "values": [0.01, 0.02, 0.05, 0.1]}
})";
    const CliResult r = run_cli("sweep --config '" + (d / "sweep.json").string() + "' --out '" + (d / "out").string() + "'", d,
                          "SPECTRA_THREADS=2");
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* v : {"0.01", "0.02", "0.05", "0.1"}) {
        EXPECT_TRUE(fs::exists(d / "out" / (std::string("k_kappa_") + v + ".csv"))) << v;
        EXPECT_TRUE(fs::exists(d / "out" / (std::string("k_kappa_") + v + ".json"))) << v;
    }
    std::istringstream summary(read_file(d / "out" / "k_sweep_summary.csv"));
    int rows = 0;
    std::string line, header;
    while (std::getline(summary, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header.empty()) header = line;
        else ++rows;
    }
    EXPECT_EQ(header, "sweep_kappa,kappa,A_plus,A_minus,n_mean,series,lower,upper,lower_over_upper");
    EXPECT_EQ(rows, 8);
}

TEST(Binary, InvalidThreadCountRejected) {
    const fs::path d = scratch("threads");
    const CliResult r = run_cli("sweep --config '" + (fs::path(config_dir()) / "fig6_kappa_sweep.json").string() + "' --out '" +
                              (d / "out").string() + "'",
                          d, "SPECTRA_THREADS=zero");
    EXPECT_EQ(r.code, 2);
}

TEST(Binary, AuditReportsEveryCheck) {
    const fs::path d = scratch("audit");
    const CliResult r = run_cli("audit --preset fig6 --n-max 4 --out '" + d.string() + "'", d);
    EXPECT_TRUE(r.code == 0 || r.code == 4) << r.err;
    EXPECT_NE(r.out.find("oracle"), std::string::npos);
    EXPECT_NE(r.out.find(r.code == 0 ? "AUDIT PASS" : "AUDIT FAIL"), std::string::npos);
    const json j = json::parse(read_file(d / "fig6_audit.json"));
    EXPECT_EQ(j["passed"].get<bool>(), r.code == 0);
    EXPECT_GE(j["checks"].size(), 8u);
}
