// Monte-Carlo harness: scenario container, normalized MSE metrics, SNR
// sweeps with counter-based per-trial seeding (deterministic under any
// thread schedule), and the filter-length / capture-count / probing-
// sequence studies.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "ddident/baseline.hpp"
#include "ddident/common.hpp"
#include "ddident/model.hpp"
#include "ddident/recovery.hpp"
#include "ddident/sampler.hpp"
#include "ddident/waveform.hpp"

namespace ddident {

/// Everything needed to reproduce one experiment: the system under test,
/// the probe, the sampler configuration, and the Monte-Carlo plan.
struct Scenario {
    std::string name = "scenario";
    SystemSpec system;
    ProbeSpec probe;
    SamplerSpec sampler;
    ChannelMode channel_mode = ChannelMode::narrowband;
    std::vector<double> snr_grid;  // dB; +infinity means noiseless
    int trials = 100;
    std::uint64_t seed = 1;
    DopplerMethod method = DopplerMethod::matrix_pencil;
    bool override_identifiability = false;
    // Noise band in Hz; when unset the sampler band (-p/(2T), p/(2T)) is
    // used, which keeps kernel comparisons fair (same physical noise).
    bool has_noise_band = false;
    double noise_band_lo = 0.0;
    double noise_band_hi = 0.0;
};

inline void validate_scenario(const Scenario& sc) {
    validate_system(sc.system);
    validate_probe(sc.probe);
    validate_sampler(sc.sampler, sc.probe.p);
    if (sc.trials < 1) throw StageError("harness", "trials must be >= 1");
    if (sc.snr_grid.empty()) throw StageError("harness", "snr_grid must be non-empty");
}

/// e2_delay = (1/K_tau) sum [(tau_hat - tau)/tau_max]^2 and
/// e2_doppler = (1/K) sum sum [(nu_hat - nu)/nu_max]^2, with delays paired
/// by minimum-cost assignment and Dopplers nearest-assigned within each
/// matched group. Groups whose estimated order differs from the truth (or
/// that failed) are excluded and flagged via mismatch.
struct MseMetrics {
    double e2_delay = 0.0;
    double e2_doppler = 0.0;
    bool mismatch = false;
    int matched_groups = 0;
    int matched_dopplers = 0;
};

namespace detail {

/// Minimum-cost pairing of two point lists; returns (i_truth, j_est) pairs.
/// Rectangular problems are padded; padded matches are dropped.
inline std::vector<std::pair<int, int>> assign_pairs(const std::vector<double>& truth,
                                                     const std::vector<double>& est,
                                                     double scale) {
    const int nt = static_cast<int>(truth.size());
    const int ne = static_cast<int>(est.size());
    const int n = std::max(nt, ne);
    const double big = 1e9;
    std::vector<std::vector<double>> cost(static_cast<std::size_t>(n),
                                          std::vector<double>(static_cast<std::size_t>(n), big));
    for (int i = 0; i < nt; ++i)
        for (int j = 0; j < ne; ++j)
            cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                std::abs(truth[static_cast<std::size_t>(i)] - est[static_cast<std::size_t>(j)]) / scale;
    std::vector<int> row_to_col = hungarian(cost);
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < nt; ++i) {
        int j = row_to_col[static_cast<std::size_t>(i)];
        if (j >= 0 && j < ne) out.emplace_back(i, j);
    }
    return out;
}

}  // namespace detail

inline MseMetrics mse_metrics(const SystemSpec& truth, const RecoveryResult& est) {
    validate_system(truth);
    MseMetrics m;
    std::vector<double> tt;
    for (const auto& g : truth.groups) tt.push_back(g.tau);
    auto pairs = detail::assign_pairs(tt, est.delays, truth.tau_max);
    if (pairs.empty()) {
        m.e2_delay = std::numeric_limits<double>::quiet_NaN();
        m.e2_doppler = std::numeric_limits<double>::quiet_NaN();
        m.mismatch = true;
        return m;
    }
    if (static_cast<int>(pairs.size()) != static_cast<int>(tt.size()) ||
        static_cast<int>(est.delays.size()) != static_cast<int>(tt.size()))
        m.mismatch = true;

    double acc_d = 0.0;
    for (auto [i, j] : pairs) {
        double e = (tt[static_cast<std::size_t>(i)] - est.delays[static_cast<std::size_t>(j)]) /
                   truth.tau_max;
        acc_d += e * e;
    }
    m.e2_delay = acc_d / static_cast<double>(pairs.size());

    double acc_v = 0.0;
    int count_v = 0;
    for (auto [i, j] : pairs) {
        const auto& tg = truth.groups[static_cast<std::size_t>(i)];
        const auto& eg = est.groups[static_cast<std::size_t>(j)];
        if (eg.failed || eg.nus.size() != tg.nus.size()) {
            m.mismatch = true;
            continue;
        }
        auto vp = detail::assign_pairs(tg.nus, eg.nus, truth.nu_max);
        for (auto [a, b] : vp) {
            double e = (tg.nus[static_cast<std::size_t>(a)] - eg.nus[static_cast<std::size_t>(b)]) /
                       truth.nu_max;
            acc_v += e * e;
        }
        count_v += static_cast<int>(vp.size());
        ++m.matched_groups;
    }
    m.matched_dopplers = count_v;
    m.e2_doppler = count_v > 0 ? acc_v / static_cast<double>(count_v)
                               : std::numeric_limits<double>::quiet_NaN();
    return m;
}

/// Worst matched-pair relative attenuation error max |alpha_hat - alpha| /
/// |alpha| (pairing as in mse_metrics; Dopplers nearest-assigned first).
inline double attenuation_rel_error(const SystemSpec& truth, const RecoveryResult& est) {
    std::vector<double> tt;
    for (const auto& g : truth.groups) tt.push_back(g.tau);
    auto pairs = detail::assign_pairs(tt, est.delays, truth.tau_max);
    double worst = 0.0;
    bool any = false;
    for (auto [i, j] : pairs) {
        const auto& tg = truth.groups[static_cast<std::size_t>(i)];
        const auto& eg = est.groups[static_cast<std::size_t>(j)];
        if (eg.failed || eg.nus.size() != tg.nus.size()) continue;
        auto vp = detail::assign_pairs(tg.nus, eg.nus, truth.nu_max);
        for (auto [a, b] : vp) {
            double den = std::abs(tg.alphas[static_cast<std::size_t>(a)]);
            if (den <= 0.0) continue;
            worst = std::max(worst, std::abs(tg.alphas[static_cast<std::size_t>(a)] -
                                             eg.alphas[static_cast<std::size_t>(b)]) /
                                        den);
            any = true;
        }
    }
    return any ? worst : std::numeric_limits<double>::quiet_NaN();
}

/// Flattened (tau, nu) target lists and their matched comparison, used by
/// the matched-filter head-to-head.
struct TargetPoint {
    double tau = 0.0;
    double nu = 0.0;
};

inline std::vector<TargetPoint> system_targets(const SystemSpec& sys) {
    std::vector<TargetPoint> pts;
    for (const auto& g : sys.groups)
        for (double nu : g.nus) pts.push_back({g.tau, nu});
    return pts;
}

inline std::vector<TargetPoint> result_targets(const RecoveryResult& res) {
    std::vector<TargetPoint> pts;
    for (const auto& g : res.groups) {
        if (g.failed) continue;
        for (double nu : g.nus) pts.push_back({g.tau, nu});
    }
    return pts;
}

struct TargetAssignment {
    std::vector<std::pair<int, int>> pairs;  // (truth index, estimate index)
    std::vector<double> costs;               // per-pair normalized distance
    double total_cost = 0.0;
    double max_abs_dtau = 0.0;
    double max_abs_dnu = 0.0;
};

/// Minimum-total-cost pairing under the normalized metric
/// sqrt((dtau/tau_max)^2 + (dnu/nu_max)^2).
inline TargetAssignment assign_targets(const std::vector<TargetPoint>& truth,
                                       const std::vector<TargetPoint>& est, double tau_max,
                                       double nu_max) {
    const int nt = static_cast<int>(truth.size());
    const int ne = static_cast<int>(est.size());
    const int n = std::max(nt, ne);
    if (n == 0) return {};
    const double big = 1e9;
    std::vector<std::vector<double>> cost(static_cast<std::size_t>(n),
                                          std::vector<double>(static_cast<std::size_t>(n), big));
    for (int i = 0; i < nt; ++i)
        for (int j = 0; j < ne; ++j) {
            const double dt = (truth[static_cast<std::size_t>(i)].tau -
                               est[static_cast<std::size_t>(j)].tau) / tau_max;
            const double dv = (truth[static_cast<std::size_t>(i)].nu -
                               est[static_cast<std::size_t>(j)].nu) / nu_max;
            cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = std::hypot(dt, dv);
        }
    std::vector<int> row_to_col = hungarian(cost);
    TargetAssignment out;
    for (int i = 0; i < nt; ++i) {
        const int j = row_to_col[static_cast<std::size_t>(i)];
        if (j < 0 || j >= ne) continue;
        out.pairs.emplace_back(i, j);
        const double c = cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        out.costs.push_back(c);
        out.total_cost += c;
        out.max_abs_dtau = std::max(out.max_abs_dtau,
                                    std::abs(truth[static_cast<std::size_t>(i)].tau -
                                             est[static_cast<std::size_t>(j)].tau));
        out.max_abs_dnu = std::max(out.max_abs_dnu,
                                   std::abs(truth[static_cast<std::size_t>(i)].nu -
                                            est[static_cast<std::size_t>(j)].nu));
    }
    return out;
}

struct TrialRecord {
    double snr_db = 0.0;
    int trial = 0;
    double e2_delay = 0.0;
    double e2_doppler = 0.0;
    bool failed = false;
    std::string error;
};

struct SweepRow {
    double snr_db = 0.0;
    double e2_delay_mean = 0.0;
    double e2_doppler_mean = 0.0;
    long failures = 0;
    long ok = 0;
};

struct SweepReport {
    std::vector<SweepRow> rows;
    std::vector<TrialRecord> records;
};

inline int pool_threads() {
    if (const char* env = std::getenv("DDIDENT_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 4;
}

/// Index-space work pool. Bodies must not throw; results keyed by index so
/// aggregation is schedule-independent.
template <class F>
inline void parallel_for(long n, F&& body) {
    const long nt = std::min<long>(pool_threads(), n);
    if (nt <= 1) {
        for (long i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<long> next{0};
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(nt));
    for (long t = 0; t < nt; ++t)
        threads.emplace_back([&next, n, &body] {
            for (long i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
        });
    for (auto& th : threads) th.join();
}

/// Simulation window: the probe's own support plus, for partial captures,
/// the capture window with extra slack so truncated tails are genuinely
/// lost rather than wrapped.
inline std::pair<long, long> scenario_window(const Scenario& sc) {
    auto [lo, hi] = default_window(sc.probe);
    if (sc.sampler.capture_count > 0) {
        const long L = sc.sampler.capture_count / sc.probe.p;
        const long ns = static_cast<long>(
            std::floor(static_cast<double>(sc.probe.n_pulses() - L) / 2.0));
        lo = std::min(lo, ns - 32);
        hi = std::max(hi, ns + L + 32);
    }
    return {lo, hi};
}

/// Noiseless channel output for the scenario.
inline DenseSignal simulate_observation(const Scenario& sc) {
    validate_scenario(sc);
    auto [lo, hi] = scenario_window(sc);
    DenseSignal x = synthesize_probe(sc.probe, sc.probe.pulse.sim_rate, lo, hi);
    return apply_system(x, sc.system, sc.channel_mode);
}

inline std::pair<double, double> scenario_noise_band(const Scenario& sc) {
    if (sc.has_noise_band) return {sc.noise_band_lo, sc.noise_band_hi};
    const double half = static_cast<double>(sc.probe.p) / (2.0 * sc.probe.T);
    return {-half, half};
}

/// Full Monte-Carlo sweep. Per-trial seeds derive from (seed, snr index,
/// trial index) only, so results are bit-identical for any thread count;
/// failed trials (identification errors, failed Doppler groups) are
/// counted per row and excluded from the means.
inline SweepReport run_scenario(const Scenario& sc) {
    validate_scenario(sc);
    DenseSignal y0 = simulate_observation(sc);
    auto [band_lo, band_hi] = scenario_noise_band(sc);
    SamplingKernel kernel =
        make_kernel(sc.sampler.kernel_kind, sc.probe.p, sc.probe.T, y0.sim_rate, 33);
    CorrectionBank corr = design_correction(sc.probe.pulse, kernel, sc.sampler, sc.probe);
    const std::vector<int> k_nu_list = sc.system.k_nu_list();
    const int k_tau = sc.system.k_tau();

    IdentifyOptions opts;
    opts.method = sc.method;
    opts.override_identifiability = sc.override_identifiability;
    opts.correction = &corr;

    const long n_snr = static_cast<long>(sc.snr_grid.size());
    const long n_jobs = n_snr * sc.trials;
    SweepReport rep;
    rep.records.assign(static_cast<std::size_t>(n_jobs), TrialRecord{});

    parallel_for(n_jobs, [&](long idx) {
        const long si = idx / sc.trials;
        const int trial = static_cast<int>(idx % sc.trials);
        const double snr = sc.snr_grid[static_cast<std::size_t>(si)];
        TrialRecord& rec = rep.records[static_cast<std::size_t>(idx)];
        rec.snr_db = snr;
        rec.trial = trial;
        try {
            DenseSignal y = add_noise(y0, snr, band_lo, band_hi,
                                      derive_seed(sc.seed, static_cast<std::uint64_t>(si),
                                                  static_cast<std::uint64_t>(trial)));
            RecoveryResult res = identify(y, sc.probe, sc.sampler, k_tau, k_nu_list, opts);
            if (!res.all_ok()) {
                rec.failed = true;
                for (const auto& g : res.groups)
                    if (g.failed) {
                        rec.error = g.error;
                        break;
                    }
                return;
            }
            MseMetrics m = mse_metrics(sc.system, res);
            if (!std::isfinite(m.e2_delay) || !std::isfinite(m.e2_doppler)) {
                rec.failed = true;
                rec.error = "metric undefined (group mismatch)";
                return;
            }
            rec.e2_delay = m.e2_delay;
            rec.e2_doppler = m.e2_doppler;
        } catch (const std::exception& e) {
            rec.failed = true;
            rec.error = e.what();
        }
    });

    rep.rows.resize(static_cast<std::size_t>(n_snr));
    for (long si = 0; si < n_snr; ++si) {
        SweepRow& row = rep.rows[static_cast<std::size_t>(si)];
        row.snr_db = sc.snr_grid[static_cast<std::size_t>(si)];
        double acc_d = 0.0, acc_v = 0.0;
        for (int t = 0; t < sc.trials; ++t) {
            const TrialRecord& rec = rep.records[static_cast<std::size_t>(si * sc.trials + t)];
            if (rec.failed) {
                ++row.failures;
                continue;
            }
            acc_d += rec.e2_delay;
            acc_v += rec.e2_doppler;
            ++row.ok;
        }
        if (row.ok > 0) {
            row.e2_delay_mean = acc_d / static_cast<double>(row.ok);
            row.e2_doppler_mean = acc_v / static_cast<double>(row.ok);
        } else {
            row.e2_delay_mean = std::numeric_limits<double>::quiet_NaN();
            row.e2_doppler_mean = std::numeric_limits<double>::quiet_NaN();
        }
    }
    return rep;
}

/// One study row: the varied parameter value plus a full sweep row.
struct StudyRow {
    double param = 0.0;
    SweepRow row;
};

/// Correction filter length study (error floors of truncated corrections).
inline std::vector<StudyRow> taps_study(Scenario sc, const std::vector<int>& taps_list) {
    std::vector<StudyRow> out;
    for (int taps : taps_list) {
        sc.sampler.correction_taps = taps;
        sc.sampler.correction_mode = CorrectionMode::fir;
        SweepReport rep = run_scenario(sc);
        for (const auto& row : rep.rows) out.push_back({static_cast<double>(taps), row});
    }
    return out;
}

/// Capture-count study (finite observation windows).
inline std::vector<StudyRow> samples_study(Scenario sc, const std::vector<long>& captures) {
    std::vector<StudyRow> out;
    for (long cc : captures) {
        sc.sampler.capture_count = cc;
        SweepReport rep = run_scenario(sc);
        for (const auto& row : rep.rows) out.push_back({static_cast<double>(cc), row});
    }
    return out;
}

/// Alternating-sequence study: x_n = +1/-1 in blocks of r (period 2r).
/// Faster alternation pushes the per-delay sequences away from the
/// correction filters' worst frequencies.
inline std::vector<StudyRow> probe_study(Scenario sc, const std::vector<int>& r_list) {
    std::vector<StudyRow> out;
    const long n = sc.probe.n_pulses();
    for (int r : r_list) {
        if (r < 1) throw StageError("harness", "alternation period must be >= 1");
        for (long i = 0; i < n; ++i)
            sc.probe.x_seq[static_cast<std::size_t>(i)] =
                ((i / r) % 2 == 0) ? cplx{1.0, 0.0} : cplx{-1.0, 0.0};
        SweepReport rep = run_scenario(sc);
        for (const auto& row : rep.rows) out.push_back({static_cast<double>(r), row});
    }
    return out;
}

}  // namespace ddident
