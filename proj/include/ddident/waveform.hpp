// Dense-grid waveform stage: flat-passband pulse design, probe synthesis,
// the parametric channel (exact and narrowband modes), and calibrated
// in-band noise.
//
// "Continuous time" is a dense grid over a finite window [n_lo*T, n_hi*T)
// treated circularly. Circular semantics make the frequency-domain phase
// ramps used for fractional delays exact rather than approximately linear,
// which the noiseless-exactness requirements need; windows are sized so the
// wrap seam only ever touches pulse/kernel tails.
#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "ddident/common.hpp"
#include "ddident/fft.hpp"
#include "ddident/model.hpp"

namespace ddident {

/// Uniformly sampled complex baseband signal standing in for continuous
/// time. When produced by synthesize_probe it carries the pulse-train
/// metadata the narrowband channel mode and the identification pipeline
/// need (probe reference and window origin in units of T).
struct DenseSignal {
    std::vector<cplx> samples;
    double sim_rate = 0.0;  // hertz
    double t0 = 0.0;        // seconds, time of samples[0]
    std::shared_ptr<const ProbeSpec> probe;  // set by synthesize_probe
    long n_lo = 0;          // window start in units of T (valid with probe)

    double dt() const { return 1.0 / sim_rate; }
    double energy() const {
        double e = 0.0;
        for (const cplx& v : samples) e += std::norm(v);
        return e * dt();
    }
};

inline void validate_signal(const DenseSignal& y) {
    if (y.samples.empty() || y.sim_rate <= 0.0)
        throw StageError("waveform", "empty or rate-less signal");
    for (const cplx& v : y.samples)
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
            throw StageError("waveform", "signal contains NaN/Inf");
}

/// Kaiser-windowed sinc pulse, unit energy, flat over F = [-p/(2T), p/(2T)]
/// hertz. The transition band is placed well outside F (the acquisition
/// filter is exactly band-limited to F, so out-of-F rolloff costs nothing),
/// which buys very deep stopband attenuation at moderate tap counts.
inline PulseSpec design_flat_pulse(int p, double T, double sim_rate, int taps) {
    if (taps < 1 || taps % 2 == 0)
        throw StageError("waveform", "pulse taps must be odd and positive");
    if (p <= 0 || p % 2 != 0) throw StageError("waveform", "p must be positive even");
    const double dpt = sim_rate * T;
    if (std::abs(dpt - std::round(dpt)) > 1e-6 * dpt)
        throw StageError("waveform", "sim_rate*T must be an integer (grid commensurate with T)");
    const double dt = 1.0 / sim_rate;
    const double f_band = static_cast<double>(p) / (2.0 * T);  // F edge in Hz

    PulseSpec g;
    g.sim_rate = sim_rate;
    g.band_lo = -f_band;
    g.band_hi = f_band;

    if (taps == 1) {
        g.taps = {cplx{std::sqrt(sim_rate), 0.0}};  // unit energy delta
        g.energy = 1.0;
        g.passband_ripple_db = 0.0;
        g.stopband_atten_db = 0.0;
        // eval() computes amplitude * 2 * cutoff_hz * sinc(..), and
        // 2 * cutoff_hz = sim_rate here, so this makes eval(0) equal the tap.
        g.amplitude = 1.0 / std::sqrt(sim_rate);
        g.kaiser_beta = 0.0;
        g.cutoff_hz = sim_rate / 2.0;
        g.half_support = dt / 2.0;
        return g;
    }

    // Kaiser design: transition width fixed in dense-rate terms, attenuation
    // then follows from the tap count (capped; beta from the standard fit).
    const double d_omega = 0.35;  // rad/sample transition width
    double atten = std::min(200.0, 2.285 * d_omega * static_cast<double>(taps - 1) + 8.0);
    const double beta = atten > 50.0 ? 0.1102 * (atten - 8.7)
                        : atten >= 21.0
                            ? 0.5842 * std::pow(atten - 21.0, 0.4) + 0.07886 * (atten - 21.0)
                            : 0.0;
    const double trans_hz = d_omega * sim_rate / (2.0 * pi);
    const double cutoff = f_band + 0.6 * trans_hz;
    if (2.0 * (cutoff + 0.6 * trans_hz) >= sim_rate)
        throw StageError("waveform", "sim_rate too low for requested band (transition clips Nyquist)");

    const int half = (taps - 1) / 2;
    const double half_support = static_cast<double>(half) * dt;
    std::vector<double> raw(taps);
    const double i0b = std::cyl_bessel_i(0.0, beta);
    for (int k = 0; k < taps; ++k) {
        double t = static_cast<double>(k - half) * dt;
        double x = half > 0 ? t / half_support : 0.0;
        double win = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - x * x))) / i0b;
        raw[k] = 2.0 * cutoff * sinc(2.0 * cutoff * t) * win;
    }
    double e = 0.0;
    for (double v : raw) e += v * v;
    e *= dt;
    const double amp = 1.0 / std::sqrt(e);
    g.taps.resize(taps);
    for (int k = 0; k < taps; ++k) g.taps[k] = cplx{amp * raw[k], 0.0};
    g.energy = 1.0;
    g.amplitude = amp;
    g.kaiser_beta = beta;
    g.cutoff_hz = cutoff;
    g.half_support = half_support;

    // Measure achieved in-band ripple and stopband attenuation.
    double mx = 0.0, mn = 1e300;
    for (int i = 0; i <= 256; ++i) {
        double w = 2.0 * pi * f_band * (2.0 * i / 256.0 - 1.0);
        double m = std::abs(centered_dtft(g.taps, w, dt));
        mx = std::max(mx, m);
        mn = std::min(mn, m);
    }
    g.passband_ripple_db = 20.0 * std::log10(mx / mn);
    double stop_edge = 2.0 * pi * (cutoff + 0.6 * trans_hz);
    double worst = 0.0;
    for (int i = 0; i <= 256; ++i) {
        double w = stop_edge + (pi * sim_rate - stop_edge) * i / 256.0;
        worst = std::max(worst, std::abs(centered_dtft(g.taps, w, dt)));
    }
    g.stopband_atten_db = -20.0 * std::log10(worst / mx);
    if (g.passband_ripple_db > 1.0)
        throw StageError("waveform", "flat-pulse ripple spec unmet: achieved " +
                                         std::to_string(g.passband_ripple_db) +
                                         " dB > 1 dB (increase taps)");
    return g;
}

/// Default simulation window for a probe: [-(margin), N + margin) in units
/// of T, where margin covers the pulse tails.
inline std::pair<long, long> default_window(const ProbeSpec& probe) {
    long margin = static_cast<long>(std::ceil(probe.pulse.half_support / probe.T)) + 1;
    return {-margin, static_cast<long>(probe.n_pulses()) + margin};
}

/// x(t) = sum_n x_n g(t - nT) on the dense window [n_lo*T, n_hi*T).
inline DenseSignal synthesize_probe(const ProbeSpec& probe, double sim_rate, long n_lo,
                                    long n_hi) {
    validate_probe(probe);
    if (std::abs(probe.pulse.sim_rate - sim_rate) > 1e-6 * sim_rate)
        throw StageError("waveform", "pulse designed at a different sim_rate");
    const double dptd = sim_rate * probe.T;
    if (std::abs(dptd - std::round(dptd)) > 1e-6 * dptd)
        throw StageError("waveform", "sim_rate*T must be an integer");
    const long dpt = static_cast<long>(std::llround(dptd));
    if (n_hi <= n_lo) throw StageError("waveform", "empty window");
    {
        auto [lo_min, hi_min] = default_window(probe);
        if (n_lo > lo_min || n_hi < hi_min)
            throw StageError("waveform", "window does not cover the probe support");
    }

    DenseSignal x;
    x.sim_rate = sim_rate;
    x.n_lo = n_lo;
    x.t0 = static_cast<double>(n_lo) * probe.T;
    x.samples.assign(static_cast<std::size_t>((n_hi - n_lo) * dpt), cplx{0.0, 0.0});
    const long half = (static_cast<long>(probe.pulse.taps.size()) - 1) / 2;
    for (long n = 0; n < probe.n_pulses(); ++n) {
        const long base = (n - n_lo) * dpt - half;
        for (long k = 0; k < static_cast<long>(probe.pulse.taps.size()); ++k) {
            long j = base + k;  // window covers the support, no wrap needed
            x.samples[static_cast<std::size_t>(j)] +=
                probe.x_seq[static_cast<std::size_t>(n)] * probe.pulse.taps[static_cast<std::size_t>(k)];
        }
    }
    x.probe = std::make_shared<ProbeSpec>(probe);
    return x;
}

inline DenseSignal synthesize_probe(const ProbeSpec& probe, double sim_rate) {
    auto [lo, hi] = default_window(probe);
    return synthesize_probe(probe, sim_rate, lo, hi);
}

enum class ChannelMode { exact, narrowband };

/// Applies the parametric channel.
/// exact:      y(t) = sum_ij alpha_ij x(t - tau_i) e^{j 2 pi nu_ij t}
/// narrowband: y(t) = sum_i sum_n a_i[n] g(t - tau_i - nT),
///             a_i[n] = sum_j alpha_ij x_n e^{j 2 pi nu_ij n T}
/// Doppler phases are referenced to absolute time (t = 0 at probe pulse 0).
inline DenseSignal apply_system(const DenseSignal& x, const SystemSpec& sys, ChannelMode mode) {
    validate_signal(x);
    validate_system(sys);
    DenseSignal y = x;
    for (auto& v : y.samples) v = cplx{0.0, 0.0};
    const double dt = x.dt();

    if (mode == ChannelMode::exact) {
        for (const auto& g : sys.groups) {
            std::vector<cplx> delayed =
                g.tau == 0.0 ? x.samples : circular_delay(x.samples, g.tau, dt);
            for (std::size_t j = 0; j < g.nus.size(); ++j) {
                const double nu = g.nus[j];
                const cplx a = g.alphas[j];
                for (std::size_t i = 0; i < delayed.size(); ++i) {
                    double t = x.t0 + static_cast<double>(i) * dt;
                    y.samples[i] += a * delayed[i] * std::polar(1.0, 2.0 * pi * nu * t);
                }
            }
        }
        return y;
    }

    // narrowband
    if (!x.probe)
        throw StageError("waveform", "narrowband mode requires a probe-synthesized input "
                                     "(pulse-train metadata missing)");
    const ProbeSpec& probe = *x.probe;
    // A2 at the spread level: tau_max may equal T (the box bound), the
    // delays themselves are held inside it by A1.
    if (sys.tau_max > probe.T)
        throw StageError("waveform", "narrowband mode requires tau_max <= T (A2)");
    const long dpt = static_cast<long>(std::llround(x.sim_rate * probe.T));
    const long half = (static_cast<long>(probe.pulse.taps.size()) - 1) / 2;
    std::vector<cplx> train(x.samples.size());
    for (const auto& g : sys.groups) {
        std::fill(train.begin(), train.end(), cplx{0.0, 0.0});
        for (long n = 0; n < probe.n_pulses(); ++n) {
            cplx a{0.0, 0.0};
            for (std::size_t j = 0; j < g.nus.size(); ++j)
                a += g.alphas[j] *
                     std::polar(1.0, 2.0 * pi * g.nus[j] * static_cast<double>(n) * probe.T);
            a *= probe.x_seq[static_cast<std::size_t>(n)];
            const long base = (n - x.n_lo) * dpt - half;
            for (long k = 0; k < static_cast<long>(probe.pulse.taps.size()); ++k)
                train[static_cast<std::size_t>(base + k)] +=
                    a * probe.pulse.taps[static_cast<std::size_t>(k)];
        }
        std::vector<cplx> shifted = g.tau == 0.0 ? train : circular_delay(train, g.tau, dt);
        for (std::size_t i = 0; i < shifted.size(); ++i) y.samples[i] += shifted[i];
    }
    return y;
}

/// Adds circular complex white Gaussian noise spectrally confined to
/// [band_lo, band_hi] (signed hertz). SNR is mean in-band signal power over
/// the probe's active duration divided by in-band noise power per sample.
/// snr_db = +infinity returns the input unchanged.
inline DenseSignal add_noise(const DenseSignal& y, double snr_db, double band_lo, double band_hi,
                             std::uint64_t seed) {
    validate_signal(y);
    if (band_hi <= band_lo) throw StageError("waveform", "negative noise bandwidth");
    if (std::abs(band_lo) > y.sim_rate / 2.0 || std::abs(band_hi) > y.sim_rate / 2.0)
        throw StageError("waveform", "noise band outside Nyquist range");
    if (std::isinf(snr_db)) return y;

    const long n = static_cast<long>(y.samples.size());
    std::vector<cplx> spec = fft_fwd(y.samples);
    double e_band = 0.0;
    long band_bins = 0;
    std::vector<char> in_band(static_cast<std::size_t>(n), 0);
    for (long k = 0; k < n; ++k) {
        double f = static_cast<double>(signed_bin(k, n)) * y.sim_rate / static_cast<double>(n);
        if (f >= band_lo && f <= band_hi) {
            in_band[static_cast<std::size_t>(k)] = 1;
            ++band_bins;
            e_band += std::norm(spec[static_cast<std::size_t>(k)]);
        }
    }
    e_band /= static_cast<double>(n);  // Parseval: time-domain in-band energy (sample units)
    // Active duration: the probe support if known, else the whole window.
    double active_samples = static_cast<double>(n);
    if (y.probe)
        active_samples = static_cast<double>(y.probe->n_pulses()) *
                         std::llround(y.sim_rate * y.probe->T);
    const double p_sig = e_band / active_samples;
    const double p_noise = p_sig / db_to_lin(snr_db);
    const double rho =
        static_cast<double>(n) * std::sqrt(p_noise / static_cast<double>(band_bins));

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(2.0));
    for (long k = 0; k < n; ++k)
        if (in_band[static_cast<std::size_t>(k)]) {
            double re = gauss(rng), im = gauss(rng);
            spec[static_cast<std::size_t>(k)] += rho * cplx{re, im};
        }
    DenseSignal out = y;
    out.samples = fft_inv(spec);
    return out;
}

}  // namespace ddident
