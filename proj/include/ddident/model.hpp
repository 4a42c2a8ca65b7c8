// Domain types for parametric underspread systems and probe/sampler
// configuration, plus the identifiability checks of Theorems 1-2 and the
// combinatorial partition bound.
#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ddident/common.hpp"

namespace ddident {

/// One (delay, Doppler, attenuation) triplet.
struct DelayDopplerTriplet {
    double tau = 0.0;   // seconds, >= 0
    double nu = 0.0;    // hertz, signed
    cplx alpha{1.0, 0.0};
};

/// One distinct delay with its associated Doppler shifts.
struct DelayGroup {
    double tau = 0.0;                 // seconds
    std::vector<double> nus;          // hertz, pairwise distinct
    std::vector<cplx> alphas;         // same length as nus
};

/// Ground-truth (or recovered) system: K_tau groups of Dopplers sharing a
/// delay, inside the [0, tau_max] x [-nu_max/2, nu_max/2] support rectangle.
struct SystemSpec {
    std::vector<DelayGroup> groups;
    double tau_max = 0.0;  // seconds
    double nu_max = 0.0;   // hertz (total two-sided Doppler spread)

    int k_tau() const { return static_cast<int>(groups.size()); }
    int k_total() const {
        std::size_t k = 0;
        for (const auto& g : groups) k += g.nus.size();
        return static_cast<int>(k);
    }
    int k_nu_max() const {
        std::size_t m = 0;
        for (const auto& g : groups) m = std::max(m, g.nus.size());
        return static_cast<int>(m);
    }
    std::vector<int> k_nu_list() const {
        std::vector<int> ks;
        for (const auto& g : groups) ks.push_back(static_cast<int>(g.nus.size()));
        return ks;
    }
    std::vector<DelayDopplerTriplet> triplets() const {
        std::vector<DelayDopplerTriplet> ts;
        for (const auto& g : groups)
            for (std::size_t j = 0; j < g.nus.size(); ++j)
                ts.push_back({g.tau, g.nus[j], g.alphas[j]});
        return ts;
    }
};

/// Validates structural invariants (A1, distinctness). Throws StageError.
inline void validate_system(const SystemSpec& sys) {
    if (sys.groups.empty()) throw StageError("model", "system has no delay groups");
    for (std::size_t i = 0; i < sys.groups.size(); ++i) {
        const auto& g = sys.groups[i];
        if (g.tau < 0.0 || g.tau > sys.tau_max)
            throw StageError("model", "delay outside [0, tau_max] (A1)");
        if (g.nus.empty()) throw StageError("model", "delay group without Dopplers");
        if (g.nus.size() != g.alphas.size())
            throw StageError("model", "Doppler/attenuation count mismatch");
        for (double nu : g.nus)
            if (std::abs(nu) > sys.nu_max / 2.0 + 1e-15)
                throw StageError("model", "Doppler outside [-nu_max/2, nu_max/2] (A1)");
        for (std::size_t a = 0; a < g.nus.size(); ++a)
            for (std::size_t b = a + 1; b < g.nus.size(); ++b)
                if (g.nus[a] == g.nus[b])
                    throw StageError("model", "duplicate Doppler within a group");
        for (std::size_t j = i + 1; j < sys.groups.size(); ++j)
            if (std::abs(g.tau - sys.groups[j].tau) < 1e-12)
                throw StageError("model", "delays not pairwise distinct (tol 1e-12 s)");
    }
}

/// Prototype pulse as a dense-rate FIR (taps centered at t = 0, odd length),
/// plus an analytic generator so the pulse can be evaluated off-grid when a
/// test needs a direct-synthesis oracle.
struct PulseSpec {
    std::vector<cplx> taps;     // centered FIR, odd length
    double sim_rate = 0.0;      // hertz
    double energy = 1.0;        // must be 1 (sum |taps|^2 * dt)
    double band_lo = 0.0;       // hertz (signed two-sided edges)
    double band_hi = 0.0;
    double passband_ripple_db = 0.0;   // achieved, reported by the designer
    double stopband_atten_db = 0.0;    // achieved, reported by the designer
    // Analytic evaluation of g(t) at arbitrary time (windowed-sinc closed
    // form); valid only for designer-produced pulses, zero outside support.
    double kaiser_beta = 0.0;
    double cutoff_hz = 0.0;
    double half_support = 0.0;  // seconds

    double dt() const { return 1.0 / sim_rate; }

    /// g(t) evaluated analytically (Kaiser-windowed sinc). Used by oracle
    /// tests that need off-grid samples independent of FFT machinery.
    double eval(double t) const {
        if (std::abs(t) > half_support) return 0.0;
        double x = t / half_support;
        double win = std::cyl_bessel_i(0.0, kaiser_beta * std::sqrt(std::max(0.0, 1.0 - x * x))) /
                     std::cyl_bessel_i(0.0, kaiser_beta);
        return amplitude * 2.0 * cutoff_hz * sinc(2.0 * cutoff_hz * t) * win;
    }
    double amplitude = 1.0;  // normalization applied by the designer
};

/// Probe: pulse train x(t) = sum_n x_n g(t - nT) with p sampling channels.
struct ProbeSpec {
    PulseSpec pulse;
    std::vector<cplx> x_seq;  // length N, all nonzero
    double T = 0.0;           // seconds, pulse repetition interval
    int p = 0;                // positive even channel count

    int n_pulses() const { return static_cast<int>(x_seq.size()); }
    double t_total() const { return static_cast<double>(n_pulses()) * T; }
};

inline void validate_probe(const ProbeSpec& probe) {
    if (probe.p <= 0 || probe.p % 2 != 0)
        throw StageError("model", "p must be a positive even integer");
    if (probe.T <= 0.0) throw StageError("model", "T must be positive");
    if (probe.x_seq.empty()) throw StageError("model", "empty probing sequence");
    for (const cplx& x : probe.x_seq)
        if (std::abs(x) == 0.0)
            throw StageError("model", "probing sequence contains a zero entry");
}

enum class KernelKind { ideal_lowpass, raised_cosine_rolloff1 };
enum class CorrectionMode { fir, dtft_exact };

/// Acquisition + correction configuration.
struct SamplerSpec {
    KernelKind kernel_kind = KernelKind::ideal_lowpass;
    CorrectionMode correction_mode = CorrectionMode::fir;
    int correction_taps = 49;          // odd; used by the fir mode
    std::vector<int> active_channels;  // 1-based; empty = all of 1..p
    long capture_count = 0;            // total LPF-output samples; 0 = full window

    std::vector<int> resolved_channels(int p) const {
        if (active_channels.empty()) {
            std::vector<int> all(p);
            for (int i = 0; i < p; ++i) all[i] = i + 1;
            return all;
        }
        return active_channels;
    }
};

inline void validate_sampler(const SamplerSpec& spec, int p) {
    if (spec.correction_mode == CorrectionMode::fir &&
        (spec.correction_taps <= 0 || spec.correction_taps % 2 == 0))
        throw StageError("sampler", "correction_taps must be positive and odd");
    if (spec.capture_count < 0) throw StageError("sampler", "negative capture_count");
    auto chans = spec.resolved_channels(p);
    if (chans.empty()) throw StageError("sampler", "no active channels");
    for (std::size_t i = 0; i < chans.size(); ++i) {
        if (chans[i] < 1 || chans[i] > p)
            throw StageError("sampler", "active channel outside 1..p");
        if (i > 0 && chans[i] != chans[i - 1] + 1)
            throw StageError("sampler", "active channels must be contiguous");
    }
    if (spec.kernel_kind == KernelKind::raised_cosine_rolloff1)
        for (int c : chans)
            if (c == 1 || c == p)
                throw StageError("sampler",
                                 "raised-cosine kernel requires excluding channels 1 and p "
                                 "(S(omega) vanishes at the band edges)");
}

/// Identifiability report per Theorems 1-2 / Corollary 1.
struct IdentifiabilityReport {
    double tw_product = 0.0;     // angular convention: 2*pi*N*p
    bool satisfies_thm1 = false;
    bool satisfies_corollary = false;
    bool p_ok = false;           // p >= 2*K_tau
    bool n_ok = false;           // N >= 2*K_nu_max
    bool a2_ok = false;          // tau_max <= T
    double a3_ratio = 0.0;       // nu_max * T
    bool a3_warn = false;        // ratio >= threshold (default 0.1)
    double thm1_bound = 0.0;     // 8*pi*K_tau*K_nu_max
    double corollary_bound = 0.0;  // 2*pi*(K+1)^2
};

/// Pure condition checker; threshold parameterizes the A3 "much less than"
/// warning (the paper never quantifies it).
inline IdentifiabilityReport check_identifiability(const SystemSpec& sys, const ProbeSpec& probe,
                                                   double a3_threshold = 0.1) {
    validate_system(sys);
    validate_probe(probe);
    IdentifiabilityReport r;
    const int k_tau = sys.k_tau();
    const int k_nu_max = sys.k_nu_max();
    const int k = sys.k_total();
    const double n = static_cast<double>(probe.n_pulses());
    r.tw_product = 2.0 * pi * n * static_cast<double>(probe.p);
    r.thm1_bound = 8.0 * pi * static_cast<double>(k_tau) * static_cast<double>(k_nu_max);
    r.corollary_bound = 2.0 * pi * static_cast<double>((k + 1) * (k + 1));
    r.p_ok = probe.p >= 2 * k_tau;
    r.n_ok = probe.n_pulses() >= 2 * k_nu_max;
    r.a2_ok = sys.tau_max <= probe.T;
    r.a3_ratio = sys.nu_max * probe.T;
    r.a3_warn = r.a3_ratio >= a3_threshold;
    r.satisfies_thm1 = r.tw_product >= r.thm1_bound && r.p_ok && r.n_ok && r.a2_ok;
    r.satisfies_corollary = r.tw_product >= r.corollary_bound;
    return r;
}

/// Corollary 1 bound: over every admissible (K_tau, K_nu_max) partition shape
/// of K total pairs, K_tau * K_nu_max <= (K+1)^2 / 4.
inline bool partition_bound_check(int k) {
    if (k < 1) throw StageError("model", "K must be >= 1");
    const double bound = static_cast<double>((k + 1) * (k + 1)) / 4.0;
    for (int k_tau = 1; k_tau <= k; ++k_tau) {
        // group sizes sum to K over k_tau nonempty groups, so the largest
        // group can be anything in [ceil(K/k_tau), K - k_tau + 1]
        int lo = (k + k_tau - 1) / k_tau;
        int hi = k - k_tau + 1;
        for (int k_nu_max = lo; k_nu_max <= hi; ++k_nu_max)
            if (static_cast<double>(k_tau) * static_cast<double>(k_nu_max) > bound) return false;
    }
    return true;
}

}  // namespace ddident
