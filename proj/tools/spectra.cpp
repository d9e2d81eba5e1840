#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "cavityspec/runner.hpp"

namespace cs = cavityspec;
namespace cli = cavityspec::cli;

namespace {

/// Machine-readable error report on stderr.
int report_error(const std::string& kind, const std::string& message, cs::ExitCode code) {
    cli::json j;
    j["error"] = kind;
    j["message"] = message;
    j["exit_code"] = static_cast<int>(code);
    std::cerr << j.dump() << "\n";
    return static_cast<int>(code);
}

void print_files(const std::vector<std::string>& files) {
    for (const auto& f : files) std::cout << "wrote " << f << "\n";
}

int print_audit(const cli::AuditReport& r) {
    std::cout << (r.passed ? "AUDIT PASS" : "AUDIT FAIL") << "\n";
    return static_cast<int>(r.passed ? cs::ExitCode::ok : cs::ExitCode::audit);
}

void print_check(const cli::AuditCheck& c) {
    std::printf("%s  %-70s value=%.3e tol=%.1e\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.value, c.tolerance);
    std::fflush(stdout);
}

int execute(const cli::RunConfig& c) {
    switch (c.task) {
        case cli::Task::spectrum: {
            const cli::SpectrumResult r = cli::compute_spectra(c);
            print_files(cli::write_spectra(c, r, c.name));
            print_files(cli::run_cooling(c));
            for (const auto& m : r.models)
                for (const auto& w : m.wiener_khinchin)
                    if (!w.passed) std::cerr << "warning: Wiener-Khinchin audit failed (relative error " << w.relative_error << ")\n";
            return 0;
        }
        case cli::Task::cooling: print_files(cli::run_cooling(c)); return 0;
        case cli::Task::audit: {
            const cli::AuditReport r = cli::run_audit(c, print_check);
            print_files(cli::write_audit(c, r));
            return print_audit(r);
        }
        case cli::Task::sweep: print_files(cli::run_sweep(c)); return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Emission spectra and cooling of a trapped atom in a driven, lossy cavity"};
    app.require_subcommand(1);

    std::string preset, config, out_dir;
    int audit_n_max = -1, oracle_n_max = -1;

    auto* run = app.add_subcommand("run", "compute spectra, cooling coefficients and audit summaries");
    auto* run_preset = run->add_option("--preset", preset, "fig4, fig5, fig6 or fig7");
    auto* run_config = run->add_option("--config", config, "JSON configuration file");
    run_preset->excludes(run_config);
    run->add_option("--out", out_dir, "output directory (overrides the configuration)");

    auto* audit = app.add_subcommand("audit", "oracle equivalence, truncation certificates and flux-balance checks");
    audit->add_option("--preset", preset, "fig4, fig5, fig6 or fig7")->required();
    audit->add_option("--out", out_dir, "output directory");
    audit->add_option("--n-max", audit_n_max, "motional cutoff for the audit (default: preset value)");
    audit->add_option("--oracle-n-max", oracle_n_max, "motional cutoff of the time-domain oracle (default 2)");

    auto* sweep = app.add_subcommand("sweep", "parameter sweep from a configuration file");
    sweep->add_option("--config", config, "JSON configuration file with a sweep object")->required();
    sweep->add_option("--out", out_dir, "output directory (overrides the configuration)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return static_cast<int>(cs::ExitCode::validation);
    }

    try {
        cli::RunConfig c;
        if (*run) {
            if (preset.empty() && config.empty()) throw cs::ValidationError("run needs --preset or --config");
            c = preset.empty() ? cli::load_config(config) : cli::preset_config(preset);
        } else if (*audit) {
            c = cli::preset_config(preset);
            c.task = cli::Task::audit;
            if (audit_n_max >= 0) c.params.n_max = audit_n_max;
            if (oracle_n_max >= 0) c.oracle_n_max = oracle_n_max;
        } else {
            c = cli::load_config(config);
            if (c.task != cli::Task::sweep) throw cs::ValidationError(config + ": sweep needs task \"sweep\"");
        }
        if (!out_dir.empty()) c.out_dir = out_dir;
        return execute(c);
    } catch (const cs::Error& e) {
        return report_error(e.kind(), e.what(), e.code());
    } catch (const std::exception& e) {
        return report_error("numerical", e.what(), cs::ExitCode::numerical);
    }
}
