// Command-line driver. Subcommands: check, run, sweep, mf-compare,
// leakage, taps-study, samples-study, probe-study; shared flags
// --config/--out/--seed/--format. Factored as cli_main() so tests can
// invoke it in-process.
#pragma once

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "ddident/baseline.hpp"
#include "ddident/harness.hpp"
#include "ddident/io.hpp"
#include "ddident/model.hpp"
#include "ddident/recovery.hpp"

namespace ddident {

namespace detail {

inline std::ofstream open_out(const std::string& dir, const std::string& name) {
    const std::string path = dir + "/" + name;
    std::ofstream os(path);
    if (!os) throw StageError("cli", "cannot write '" + path + "'");
    return os;
}

inline std::string pi_units(double x) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g*pi", x / pi);
    return buf;
}

inline void print_check(std::ostream& os, const Scenario& sc) {
    IdentifiabilityReport rep = check_identifiability(sc.system, sc.probe);
    os << "scenario: " << sc.name << "\n";
    os << "TW product: " << pi_units(rep.tw_product) << "\n";
    os << "Theorem 1: " << (rep.satisfies_thm1 ? "satisfied" : "NOT satisfied") << " (TW = "
       << pi_units(rep.tw_product) << (rep.tw_product >= rep.thm1_bound ? " >= " : " < ")
       << pi_units(rep.thm1_bound) << ")\n";
    os << "Corollary bound: " << (rep.satisfies_corollary ? "satisfied" : "NOT satisfied")
       << " (TW = " << pi_units(rep.tw_product)
       << (rep.tw_product >= rep.corollary_bound ? " >= " : " < ")
       << pi_units(rep.corollary_bound) << ")\n";
    os << "channels p >= 2*K_tau: " << (rep.p_ok ? "yes" : "NO") << "\n";
    os << "pulses N >= 2*max(K_nu): " << (rep.n_ok ? "yes" : "NO") << "\n";
    os << "A2 (tau_max <= T): " << (rep.a2_ok ? "yes" : "NO") << "\n";
    char a3[96];
    std::snprintf(a3, sizeof a3, "A3 nu_max*T = %.4g (threshold 0.1): %s", rep.a3_ratio,
                  rep.a3_warn ? "EXCEEDED - narrowband approximation degraded" : "ok");
    os << a3 << "\n";
}

inline void print_result(std::ostream& os, const RecoveryResult& res) {
    os << "recovered delay groups:\n";
    for (const auto& g : res.groups) {
        char head[64];
        std::snprintf(head, sizeof head, "  tau = %.6f us", g.tau * 1e6);
        os << head;
        if (g.failed) {
            os << "  [FAILED: " << g.error << "]\n";
            continue;
        }
        os << "\n";
        for (std::size_t j = 0; j < g.nus.size(); ++j) {
            char line[96];
            std::snprintf(line, sizeof line, "    nu = %+.4f kHz   alpha = %.4f at %+.1f deg",
                          g.nus[j] * 1e-3, std::abs(g.alphas[j]),
                          std::arg(g.alphas[j]) * 180.0 / pi);
            os << line << "\n";
        }
    }
}

/// Single identification at the first configured SNR, trial seed 0.
inline RecoveryResult run_once(const Scenario& sc) {
    DenseSignal y0 = simulate_observation(sc);
    auto [lo, hi] = scenario_noise_band(sc);
    DenseSignal y = add_noise(y0, sc.snr_grid.front(), lo, hi, derive_seed(sc.seed, 0, 0));
    IdentifyOptions opts;
    opts.method = sc.method;
    opts.override_identifiability = sc.override_identifiability;
    return identify(y, sc.probe, sc.sampler, sc.system.k_tau(), sc.system.k_nu_list(), opts);
}

inline void run_mf_compare(const Scenario& sc, std::ostream& csv, std::ostream& os) {
    RecoveryResult res = run_once(sc);
    const double bw = static_cast<double>(sc.probe.p) / sc.probe.T;
    const double dur = static_cast<double>(sc.probe.n_pulses()) * sc.probe.T;
    DenseSignal y0 = simulate_observation(sc);
    auto [lo, hi] = scenario_noise_band(sc);
    DenseSignal y = add_noise(y0, sc.snr_grid.front(), lo, hi, derive_seed(sc.seed, 0, 0));
    const auto tau_grid = mf_tau_grid(sc.system.tau_max, bw);
    const auto nu_grid = mf_nu_grid(sc.system.nu_max, dur);
    const auto surface = mf_surface(y, sc.probe, tau_grid, nu_grid);
    const int k_total = sc.system.k_total();
    const auto peaks = extract_peaks(surface, tau_grid, nu_grid, k_total);

    const auto truth = system_targets(sc.system);
    const auto prop = result_targets(res);
    std::vector<TargetPoint> mf;
    for (const auto& pk : peaks) mf.push_back({pk.tau, pk.nu});
    const auto a_prop = assign_targets(truth, prop, sc.system.tau_max, sc.system.nu_max);
    const auto a_mf = assign_targets(truth, mf, sc.system.tau_max, sc.system.nu_max);

    csv << "target,tau_true_s,nu_true_hz,tau_prop_s,nu_prop_hz,tau_mf_s,nu_mf_hz,err_prop,err_mf\n";
    for (std::size_t t = 0; t < truth.size(); ++t) {
        const TargetPoint& tr = truth[t];
        std::string prop_tau = "nan", prop_nu = "nan", prop_err = "nan";
        std::string mf_tau = "nan", mf_nu = "nan", mf_err = "nan";
        for (std::size_t k = 0; k < a_prop.pairs.size(); ++k)
            if (a_prop.pairs[k].first == static_cast<int>(t)) {
                const TargetPoint& e = prop[static_cast<std::size_t>(a_prop.pairs[k].second)];
                prop_tau = fmt_num(e.tau);
                prop_nu = fmt_num(e.nu);
                prop_err = fmt_num(a_prop.costs[k]);
            }
        for (std::size_t k = 0; k < a_mf.pairs.size(); ++k)
            if (a_mf.pairs[k].first == static_cast<int>(t)) {
                const TargetPoint& e = mf[static_cast<std::size_t>(a_mf.pairs[k].second)];
                mf_tau = fmt_num(e.tau);
                mf_nu = fmt_num(e.nu);
                mf_err = fmt_num(a_mf.costs[k]);
            }
        csv << t << ',' << fmt_num(tr.tau) << ',' << fmt_num(tr.nu) << ',' << prop_tau << ','
            << prop_nu << ',' << mf_tau << ',' << mf_nu << ',' << prop_err << ',' << mf_err
            << '\n';
    }
    int displaced = 0;
    for (std::size_t k = 0; k < a_mf.pairs.size(); ++k) {
        const TargetPoint& tr = truth[static_cast<std::size_t>(a_mf.pairs[k].first)];
        const TargetPoint& e = mf[static_cast<std::size_t>(a_mf.pairs[k].second)];
        if (std::abs(tr.tau - e.tau) > 0.5 / bw || std::abs(tr.nu - e.nu) > 0.5 / dur) ++displaced;
    }
    os << "targets: " << k_total << "\n";
    os << "proposed total assignment cost: " << fmt_num(a_prop.total_cost) << "\n";
    os << "matched filter total assignment cost: " << fmt_num(a_mf.total_cost) << "\n";
    os << "matched filter peaks displaced beyond half a resolution cell: " << displaced << "\n";
}

}  // namespace detail

/// Entry point behind main(); returns the process exit code.
inline int cli_main(int argc, const char* const* argv) {
    CLI::App app{"parametric delay-Doppler system identification harness"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_dir = ".", format = "csv";
    long long seed_override = -1;
    app.add_option("--config", config_path, "scenario config (JSON)")->required();
    app.add_option("--out", out_dir, "output directory (default .)");
    app.add_option("--seed", seed_override, "override the config seed");
    app.add_option("--format", format, "output format (csv)");

    CLI::App* cmd_check = app.add_subcommand("check", "identifiability report");
    CLI::App* cmd_run = app.add_subcommand("run", "single identification, prints triplets");
    CLI::App* cmd_sweep = app.add_subcommand("sweep", "SNR Monte-Carlo sweep -> sweep.csv");
    CLI::App* cmd_mf = app.add_subcommand("mf-compare",
                                          "proposed vs matched-filter peaks -> mf_compare.csv");
    CLI::App* cmd_leak = app.add_subcommand("leakage", "quantized-grid leakage -> leakage.csv");
    CLI::App* cmd_taps = app.add_subcommand("taps-study",
                                            "correction length study -> taps_study.csv");
    CLI::App* cmd_samp = app.add_subcommand("samples-study",
                                            "capture-count study -> samples_study.csv");
    CLI::App* cmd_probe = app.add_subcommand("probe-study",
                                             "alternating-sequence study -> probe_study.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (format != "csv") throw StageError("cli", "unsupported format '" + format + "'");
        std::ifstream in(config_path);
        if (!in) throw StageError("cli", "cannot open config file '" + config_path + "'");
        nlohmann::json cfg;
        try {
            in >> cfg;
        } catch (const nlohmann::json::exception& e) {
            throw StageError("config", std::string("malformed config: ") + e.what());
        }
        if (seed_override >= 0) cfg["seed"] = static_cast<std::uint64_t>(seed_override);
        Scenario sc = load_scenario(cfg);

        if (cmd_check->parsed()) {
            detail::print_check(std::cout, sc);
        } else if (cmd_run->parsed()) {
            RecoveryResult res = detail::run_once(sc);
            detail::print_result(std::cout, res);
            auto os = detail::open_out(out_dir, "run.json");
            os << result_to_json(res).dump(2) << "\n";
            std::cout << "wrote " << out_dir << "/run.json\n";
        } else if (cmd_sweep->parsed()) {
            SweepReport rep = run_scenario(sc);
            auto os = detail::open_out(out_dir, "sweep.csv");
            write_sweep_csv(os, rep);
            std::cout << "wrote " << out_dir << "/sweep.csv (" << rep.rows.size() << " rows)\n";
        } else if (cmd_mf->parsed()) {
            auto os = detail::open_out(out_dir, "mf_compare.csv");
            detail::run_mf_compare(sc, os, std::cout);
            std::cout << "wrote " << out_dir << "/mf_compare.csv\n";
        } else if (cmd_leak->parsed()) {
            const double bw = static_cast<double>(sc.probe.p) / sc.probe.T;
            const double dur = static_cast<double>(sc.probe.n_pulses()) * sc.probe.T;
            LeakageGrid grid = quantized_leakage(sc.system, bw, dur);
            auto os = detail::open_out(out_dir, "leakage.csv");
            write_leakage_csv(os, grid);
            std::cout << "wrote " << out_dir << "/leakage.csv (" << (grid.l_max + 1) << "x"
                      << (2 * grid.m_max + 1) << " cells)\n";
        } else if (cmd_taps->parsed()) {
            std::vector<int> taps{35, 49};
            if (cfg.contains("study") && cfg["study"].contains("taps"))
                taps = cfg["study"]["taps"].get<std::vector<int>>();
            auto rows = taps_study(sc, taps);
            auto os = detail::open_out(out_dir, "taps_study.csv");
            write_study_csv(os, rows, "taps");
            std::cout << "wrote " << out_dir << "/taps_study.csv\n";
        } else if (cmd_samp->parsed()) {
            std::vector<long> captures{248, 1000};
            if (cfg.contains("study") && cfg["study"].contains("captures"))
                captures = cfg["study"]["captures"].get<std::vector<long>>();
            auto rows = samples_study(sc, captures);
            auto os = detail::open_out(out_dir, "samples_study.csv");
            write_study_csv(os, rows, "capture");
            std::cout << "wrote " << out_dir << "/samples_study.csv\n";
        } else if (cmd_probe->parsed()) {
            std::vector<int> alternation{1, 2, 4, 32};
            if (cfg.contains("study") && cfg["study"].contains("alternation"))
                alternation = cfg["study"]["alternation"].get<std::vector<int>>();
            auto rows = probe_study(sc, alternation);
            auto os = detail::open_out(out_dir, "probe_study.csv");
            write_study_csv(os, rows, "r");
            std::cout << "wrote " << out_dir << "/probe_study.csv\n";
        }
        return 0;
    } catch (const StageError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "[cli] " << e.what() << "\n";
        return 1;
    }
}

}  // namespace ddident
