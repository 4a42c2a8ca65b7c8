// Scenario configs (JSON with explicit physical units: "10us", "5kHz")
// and the machine-readable outputs: sweep/study/leakage CSV files and a
// JSON rendering of recovery results.
#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ddident/baseline.hpp"
#include "ddident/common.hpp"
#include "ddident/harness.hpp"
#include "ddident/model.hpp"
#include "ddident/recovery.hpp"

namespace ddident {

enum class Unit { seconds, hertz, none };

/// Accepts a plain number (base units) or a string with an SI suffix:
/// seconds s/ms/us/ns, hertz Hz/kHz/MHz/GHz; "inf" for unbounded values.
inline double parse_quantity(const nlohmann::json& j, Unit unit, const std::string& field) {
    if (j.is_number()) return j.get<double>();
    if (!j.is_string())
        throw StageError("config", field + ": expected number or unit string");
    std::string s = j.get<std::string>();
    if (s == "inf" || s == "+inf" || s == "Inf")
        return std::numeric_limits<double>::infinity();
    double scale = 1.0;
    std::string num = s;
    auto ends_with = [&s](const char* suf) {
        std::string t(suf);
        return s.size() > t.size() && s.compare(s.size() - t.size(), t.size(), t) == 0;
    };
    auto strip = [&s](std::size_t k) { return s.substr(0, s.size() - k); };
    if (unit == Unit::seconds) {
        if (ends_with("ms")) { scale = 1e-3; num = strip(2); }
        else if (ends_with("us")) { scale = 1e-6; num = strip(2); }
        else if (ends_with("ns")) { scale = 1e-9; num = strip(2); }
        else if (ends_with("s")) { scale = 1.0; num = strip(1); }
        else throw StageError("config", field + ": missing time suffix (s/ms/us/ns)");
    } else if (unit == Unit::hertz) {
        if (ends_with("kHz")) { scale = 1e3; num = strip(3); }
        else if (ends_with("MHz")) { scale = 1e6; num = strip(3); }
        else if (ends_with("GHz")) { scale = 1e9; num = strip(3); }
        else if (ends_with("Hz")) { scale = 1.0; num = strip(2); }
        else throw StageError("config", field + ": missing frequency suffix (Hz/kHz/MHz/GHz)");
    }
    try {
        std::size_t pos = 0;
        double v = std::stod(num, &pos);
        if (pos != num.size()) throw std::invalid_argument(num);
        return v * scale;
    } catch (const std::exception&) {
        throw StageError("config", field + ": cannot parse quantity '" + s + "'");
    }
}

namespace detail {

inline cplx parse_cplx(const nlohmann::json& j, const std::string& field) {
    if (j.is_number()) return cplx{j.get<double>(), 0.0};
    if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
        return cplx{j[0].get<double>(), j[1].get<double>()};
    throw StageError("config", field + ": expected number or [re, im]");
}

inline std::vector<cplx> make_sequence(const nlohmann::json& seq, long n, std::uint64_t seed) {
    const std::string kind = seq.value("kind", "random_pm1");
    std::uint64_t s = seq.contains("seed") ? seq.at("seed").get<std::uint64_t>() : seed;
    std::mt19937_64 rng(derive_seed(s, 0x5EED, 0));
    std::vector<cplx> x(static_cast<std::size_t>(n));
    if (kind == "random_pm1") {
        std::uniform_int_distribution<int> bit(0, 1);
        for (auto& v : x) v = bit(rng) ? cplx{1.0, 0.0} : cplx{-1.0, 0.0};
    } else if (kind == "random_qpsk") {
        std::uniform_int_distribution<int> q(0, 3);
        for (auto& v : x) v = std::polar(1.0, pi / 4.0 + pi / 2.0 * q(rng));
    } else if (kind == "random_phase") {
        std::uniform_real_distribution<double> th(0.0, 2.0 * pi);
        for (auto& v : x) v = std::polar(1.0, th(rng));
    } else if (kind == "alternating") {
        const long r = seq.value("r", 1);
        if (r < 1) throw StageError("config", "sequence.r must be >= 1");
        for (long i = 0; i < n; ++i)
            x[static_cast<std::size_t>(i)] = ((i / r) % 2 == 0) ? cplx{1.0, 0.0} : cplx{-1.0, 0.0};
    } else if (kind == "explicit") {
        const auto& vals = seq.at("values");
        if (static_cast<long>(vals.size()) != n)
            throw StageError("config", "sequence.values length must equal probe.n");
        for (long i = 0; i < n; ++i)
            x[static_cast<std::size_t>(i)] = parse_cplx(vals[static_cast<std::size_t>(i)], "sequence.values");
    } else {
        throw StageError("config", "unknown sequence kind '" + kind + "'");
    }
    return x;
}

}  // namespace detail

/// Builds a runnable Scenario from a config object. Random choices
/// (probing sequence, random-phase attenuations) resolve deterministically
/// from the scenario seed at load time.
inline Scenario load_scenario(const nlohmann::json& cfg) {
    Scenario sc;
    try {
        sc.name = cfg.value("name", "scenario");
        sc.seed = cfg.value("seed", 1ULL);
        sc.trials = cfg.value("trials", 100);

        const auto& sys = cfg.at("system");
        sc.system.tau_max = parse_quantity(sys.at("tau_max"), Unit::seconds, "system.tau_max");
        sc.system.nu_max = parse_quantity(sys.at("nu_max"), Unit::hertz, "system.nu_max");
        std::uint64_t alpha_ctr = 0;
        for (const auto& gj : sys.at("groups")) {
            DelayGroup g;
            g.tau = parse_quantity(gj.at("tau"), Unit::seconds, "group.tau");
            for (const auto& vj : gj.at("dopplers"))
                g.nus.push_back(parse_quantity(vj, Unit::hertz, "group.dopplers"));
            if (!gj.contains("alphas") ||
                (gj.at("alphas").is_string() && gj.at("alphas") == "unit_random_phase")) {
                std::mt19937_64 rng(derive_seed(sc.seed, 0xA1FA, alpha_ctr++));
                std::uniform_real_distribution<double> th(0.0, 2.0 * pi);
                for (std::size_t i = 0; i < g.nus.size(); ++i) g.alphas.push_back(std::polar(1.0, th(rng)));
            } else {
                for (const auto& aj : gj.at("alphas"))
                    g.alphas.push_back(detail::parse_cplx(aj, "group.alphas"));
            }
            sc.system.groups.push_back(std::move(g));
        }

        const auto& pj = cfg.at("probe");
        const long n = pj.at("n").get<long>();
        sc.probe.T = parse_quantity(pj.at("T"), Unit::seconds, "probe.T");
        sc.probe.p = pj.at("p").get<int>();
        sc.probe.x_seq = detail::make_sequence(pj.value("sequence", nlohmann::json::object()),
                                               n, sc.seed);

        const auto& gj = cfg.value("pulse", nlohmann::json::object());
        const int taps = gj.value("taps", 257);
        const int oversample = gj.value("oversample", 16);
        if (oversample < 1) throw StageError("config", "pulse.oversample must be >= 1");
        const double sim_rate =
            static_cast<double>(oversample) * static_cast<double>(sc.probe.p) / sc.probe.T;
        sc.probe.pulse = design_flat_pulse(sc.probe.p, sc.probe.T, sim_rate, taps);

        const auto& sj = cfg.value("sampler", nlohmann::json::object());
        const std::string kern = sj.value("kernel", "ideal");
        if (kern == "ideal") sc.sampler.kernel_kind = KernelKind::ideal_lowpass;
        else if (kern == "raised_cosine") sc.sampler.kernel_kind = KernelKind::raised_cosine_rolloff1;
        else throw StageError("config", "unknown kernel '" + kern + "'");
        const auto& cj = sj.value("correction", nlohmann::json::object());
        const std::string mode = cj.value("mode", "fir");
        if (mode == "fir") sc.sampler.correction_mode = CorrectionMode::fir;
        else if (mode == "exact") sc.sampler.correction_mode = CorrectionMode::dtft_exact;
        else throw StageError("config", "correction.mode must be 'fir' or 'exact'");
        sc.sampler.correction_taps = cj.value("taps", 49);
        if (sj.contains("channels") && !sj.at("channels").is_string()) {
            const auto& ch = sj.at("channels");
            if (!ch.is_array() || ch.size() != 2)
                throw StageError("config", "sampler.channels: \"all\" or [first, last]");
            const int first = ch[0].get<int>(), last = ch[1].get<int>();
            for (int m = first; m <= last; ++m) sc.sampler.active_channels.push_back(m);
        }
        sc.sampler.capture_count = sj.value("capture", 0L);

        const std::string cm = cfg.value("channel_mode", "narrowband");
        if (cm == "narrowband") sc.channel_mode = ChannelMode::narrowband;
        else if (cm == "exact") sc.channel_mode = ChannelMode::exact;
        else throw StageError("config", "channel_mode must be 'narrowband' or 'exact'");

        if (cfg.contains("snr_db"))
            for (const auto& v : cfg.at("snr_db"))
                sc.snr_grid.push_back(parse_quantity(v, Unit::none, "snr_db"));
        else
            sc.snr_grid.push_back(std::numeric_limits<double>::infinity());

        const std::string method = cfg.value("method", "matrix_pencil");
        if (method == "matrix_pencil") sc.method = DopplerMethod::matrix_pencil;
        else if (method == "annihilating_filter") sc.method = DopplerMethod::annihilating_filter;
        else if (method == "esprit_temporal") sc.method = DopplerMethod::esprit_temporal;
        else throw StageError("config", "unknown method '" + method + "'");
        sc.override_identifiability = cfg.value("override_identifiability", false);

        if (cfg.contains("noise_band")) {
            sc.has_noise_band = true;
            sc.noise_band_lo =
                parse_quantity(cfg.at("noise_band").at("lo"), Unit::hertz, "noise_band.lo");
            sc.noise_band_hi =
                parse_quantity(cfg.at("noise_band").at("hi"), Unit::hertz, "noise_band.hi");
        }
    } catch (const nlohmann::json::exception& e) {
        throw StageError("config", std::string("malformed config: ") + e.what());
    }
    validate_scenario(sc);
    return sc;
}

inline Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StageError("config", "cannot open config file '" + path + "'");
    nlohmann::json cfg;
    try {
        in >> cfg;
    } catch (const nlohmann::json::exception& e) {
        throw StageError("config", std::string("malformed config: ") + e.what());
    }
    return load_scenario(cfg);
}

namespace detail {

inline std::string fmt_num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

}  // namespace detail

inline void write_sweep_csv(std::ostream& os, const SweepReport& rep) {
    os << "snr_db,e2_delay,e2_doppler,failures\n";
    for (const auto& r : rep.rows)
        os << detail::fmt_num(r.snr_db) << ',' << detail::fmt_num(r.e2_delay_mean) << ','
           << detail::fmt_num(r.e2_doppler_mean) << ',' << r.failures << '\n';
}

inline void write_study_csv(std::ostream& os, const std::vector<StudyRow>& rows,
                            const std::string& param_name) {
    os << param_name << ",snr_db,e2_delay,e2_doppler,failures\n";
    for (const auto& r : rows)
        os << detail::fmt_num(r.param) << ',' << detail::fmt_num(r.row.snr_db) << ','
           << detail::fmt_num(r.row.e2_delay_mean) << ',' << detail::fmt_num(r.row.e2_doppler_mean)
           << ',' << r.row.failures << '\n';
}

inline void write_leakage_csv(std::ostream& os, const LeakageGrid& grid) {
    os << "l,m,tau_s,nu_hz,re,im,abs\n";
    for (int l = 0; l <= grid.l_max; ++l)
        for (int m = -grid.m_max; m <= grid.m_max; ++m) {
            const cplx v = grid.cell(l, m);
            os << l << ',' << m << ',' << detail::fmt_num(grid.tau_of(l)) << ','
               << detail::fmt_num(grid.nu_of(m)) << ',' << detail::fmt_num(v.real()) << ','
               << detail::fmt_num(v.imag()) << ',' << detail::fmt_num(std::abs(v)) << '\n';
        }
}

inline nlohmann::json result_to_json(const RecoveryResult& res) {
    nlohmann::json j;
    j["delays_s"] = res.delays;
    j["singular_values"] = res.singular_values;
    j["eigen_moduli"] = res.eigen_moduli;
    j["groups"] = nlohmann::json::array();
    for (const auto& g : res.groups) {
        nlohmann::json gj;
        gj["tau_s"] = g.tau;
        gj["failed"] = g.failed;
        if (g.failed) {
            gj["error"] = g.error;
        } else {
            gj["nus_hz"] = g.nus;
            gj["alphas"] = nlohmann::json::array();
            for (const auto& a : g.alphas) gj["alphas"].push_back({a.real(), a.imag()});
            gj["fit_residual"] = g.fit_residual;
        }
        j["groups"].push_back(std::move(gj));
    }
    return j;
}

}  // namespace ddident
