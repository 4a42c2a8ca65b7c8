// Acquisition chain: LPF kernel, uniform sampling at rate p/T with
// serial-to-parallel split into p rate-1/T streams, and the three-stage
// digital correction W^-1 = Psi^-1 * F * Phi^-1.
//
// Conventions (shared by every module):
//   - channel index m in 1..p maps to m' = m - p/2 - 1;
//   - the stream-domain DTFT period is omega in [0, 2*pi/T), under which
//     channel m covers [2*pi*m'/T, 2*pi*(m'+1)/T) and the union over m is
//     exactly F = [-pi*p/T, pi*p/T) — the raised-cosine zeros then land on
//     channels 1 and p, as in the reference treatment of that kernel;
//   - the kernel acts spectrally on the dense circle, i.e. it is exactly
//     band-limited to F (its inspection taps are the same function's
//     time-domain samples).
#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ddident/common.hpp"
#include "ddident/fft.hpp"
#include "ddident/model.hpp"
#include "ddident/waveform.hpp"

namespace ddident {

/// Sampling kernel: exact frequency response (zero outside F) plus a
/// truncated time-domain tap view for decay studies.
struct SamplingKernel {
    KernelKind kind = KernelKind::ideal_lowpass;
    int p = 0;
    double T = 0.0;
    double sim_rate = 0.0;
    std::vector<cplx> taps;  // centered samples of s(t), inspection only

    /// S(omega); identically zero outside [-pi*p/T, pi*p/T). The band is
    /// half-open on the right so each dense bin belongs to exactly one of
    /// the p channel slices.
    ///
    /// Band membership is snapped within a tiny relative tolerance of the
    /// edges: acquisition evaluates bin frequencies and correction evaluates
    /// stream-grid offsets through different floating-point expressions, and
    /// when a dense bin lands exactly on +-pi*p/T the rounding direction must
    /// not decide which side it falls on. The +pi*p/T bin aliases onto the
    /// same stream bin as -pi*p/T (residues +-p/2 coincide mod p), so keeping
    /// it by accident double-counts the edge bin of channel 1, and dropping
    /// the -pi*p/T bin silently zeroes it; either way the pulse-inverting
    /// correction amplifies the damage by 1/|G(edge)|.
    double response(double w) const {
        const double edge = pi * static_cast<double>(p) / T;
        const double tol = 1e-9 * edge;
        if (w < -edge - tol || w >= edge - tol) return 0.0;
        if (kind == KernelKind::ideal_lowpass) return 1.0;
        return (static_cast<double>(p) / (2.0 * T)) * (1.0 + std::cos(T * w / static_cast<double>(p)));
    }

    /// s(t) evaluated analytically (inverse transform of response()).
    double time_value(double t) const {
        const double a = static_cast<double>(p) / T;
        if (kind == KernelKind::ideal_lowpass) return a * sinc(a * t);
        return (a * a / 2.0) *
               (sinc(a * t) + 0.5 * (sinc(a * t + 1.0) + sinc(a * t - 1.0)));
    }
};

inline SamplingKernel make_kernel(KernelKind kind, int p, double T, double sim_rate, int taps) {
    if (taps < 1 || taps % 2 == 0) throw StageError("sampler", "kernel taps must be odd");
    if (p <= 0 || p % 2 != 0) throw StageError("sampler", "p must be positive even");
    SamplingKernel k;
    k.kind = kind;
    k.p = p;
    k.T = T;
    k.sim_rate = sim_rate;
    k.taps.resize(static_cast<std::size_t>(taps));
    const int half = (taps - 1) / 2;
    for (int i = 0; i < taps; ++i)
        k.taps[static_cast<std::size_t>(i)] =
            cplx{k.time_value(static_cast<double>(i - half) / sim_rate), 0.0};
    return k;
}

/// Bank of rate-1/T streams. chan0 is the 1-based absolute channel index of
/// streams[0] (channels are always contiguous); n0 is the absolute probe
/// index of stream sample 0 (kept so later stages can align a_i[n] with the
/// probing sequence).
struct ChannelBank {
    enum class Kind { raw_c, corrected_d, b_domain };
    std::vector<std::vector<cplx>> streams;
    double T = 0.0;
    int p = 0;       // total channel count of the sampler
    int chan0 = 1;   // absolute channel of streams[0] (raw_c: always 1)
    long n0 = 0;     // absolute index of stream sample 0
    Kind kind = Kind::raw_c;

    long length() const { return streams.empty() ? 0 : static_cast<long>(streams[0].size()); }
};

/// c_l[n] = <y(t), s(t - nT - (l-1)T/p)> for l = 1..p, evaluated as dense
/// Riemann sums via one spectral multiplication on the simulation circle,
/// then decimated and serial-to-parallel split. capture_count = 0 keeps the
/// whole window; otherwise capture_count/p samples per stream are retained
/// from a window centered on the probe support.
inline ChannelBank acquire(const DenseSignal& y, const SamplingKernel& kernel,
                           const SamplerSpec& spec, const ProbeSpec& probe) {
    validate_signal(y);
    validate_sampler(spec, probe.p);
    if (kernel.p != probe.p) throw StageError("sampler", "kernel/probe channel count mismatch");
    const int p = probe.p;
    const double T = probe.T;
    const double q = y.sim_rate * T / static_cast<double>(p);
    if (std::abs(q - std::round(q)) > 1e-6)
        throw StageError("sampler", "sim_rate must be an integer multiple of p/T");
    const long Q = static_cast<long>(std::llround(q));
    const long dpt = Q * p;
    const long n_tot = static_cast<long>(y.samples.size());
    if (n_tot % dpt != 0) throw StageError("sampler", "window not an integer number of periods T");
    const long nper = n_tot / dpt;

    if (spec.capture_count % p != 0)
        throw StageError("sampler", "capture_count not divisible by p");
    const long n_probe = probe.n_pulses();
    long L, n_start;
    if (spec.capture_count == 0) {
        L = nper;
        n_start = y.n_lo;
    } else {
        L = spec.capture_count / p;
        n_start = static_cast<long>(std::floor(static_cast<double>(n_probe - L) / 2.0));
        if (n_start < y.n_lo || n_start + L > y.n_lo + nper)
            throw StageError("sampler", "capture window exceeds the simulated window "
                                        "(enlarge the simulation margin)");
    }

    // z = y filtered by the exactly band-limited kernel; c = z sampled.
    std::vector<cplx> spec_y = fft_fwd(y.samples);
    const double dt = y.dt();
    for (long k = 0; k < n_tot; ++k)
        spec_y[static_cast<std::size_t>(k)] *= kernel.response(bin_omega(k, n_tot, dt));
    std::vector<cplx> z = fft_inv(spec_y);

    ChannelBank bank;
    bank.T = T;
    bank.p = p;
    bank.chan0 = 1;
    bank.n0 = n_start;
    bank.kind = ChannelBank::Kind::raw_c;
    bank.streams.assign(static_cast<std::size_t>(p), std::vector<cplx>(static_cast<std::size_t>(L)));
    for (int l = 0; l < p; ++l)
        for (long r = 0; r < L; ++r) {
            long j = (n_start - y.n_lo + r) * dpt + static_cast<long>(l) * Q;
            bank.streams[static_cast<std::size_t>(l)][static_cast<std::size_t>(r)] =
                z[static_cast<std::size_t>(j)];
        }
    return bank;
}

/// Digital correction bank. In fir mode phi/psi hold the truncated,
/// Hann-windowed, causal filters; in dtft_exact mode the responses are
/// applied on the stream DFT grid directly (the untruncated path).
struct CorrectionBank {
    CorrectionMode mode = CorrectionMode::fir;
    int p = 0;
    double T = 0.0;
    int taps = 0;                      // fir mode filter length
    std::vector<int> active;           // 1-based contiguous channel indices
    std::vector<std::vector<cplx>> phi;  // per channel 1..p (fir mode)
    std::vector<std::vector<cplx>> psi;  // per active channel (fir mode)
    std::function<cplx(int, double)> phi_resp;  // (l, omega), l in 1..p
    std::function<cplx(int, double)> psi_resp;  // (m, omega), m active
};

namespace detail {

/// Truncated IDTFT: sample the response on a dense grid over one
/// [0, 2*pi/T) period, inverse DFT, keep the centered taps, apply a
/// symmetric Hann window, return causal taps (group delay (taps-1)/2).
inline std::vector<cplx> design_fir(const std::function<cplx(double)>& resp, double T, int taps,
                                    int grid) {
    std::vector<cplx> h_grid(static_cast<std::size_t>(grid));
    for (int k = 0; k < grid; ++k)
        h_grid[static_cast<std::size_t>(k)] =
            resp(2.0 * pi * static_cast<double>(k) / (static_cast<double>(grid) * T));
    std::vector<cplx> impulse = fft_inv(h_grid);  // index n mod grid
    const int half = (taps - 1) / 2;
    std::vector<cplx> fir(static_cast<std::size_t>(taps));
    for (int i = 0; i < taps; ++i) {
        int n = i - half;
        int idx = ((n % grid) + grid) % grid;
        double win = taps > 1 ? 0.5 * (1.0 - std::cos(2.0 * pi * static_cast<double>(i) /
                                                      static_cast<double>(taps - 1)))
                              : 1.0;
        fir[static_cast<std::size_t>(i)] = impulse[static_cast<std::size_t>(idx)] * win;
    }
    return fir;
}

}  // namespace detail

/// Builds the correction bank for a pulse/kernel pair.
/// Phi^-1_ll(omega) = (1/sqrt(p)) (-1)^(l-1) e^{-j omega (l-1) T / p}
/// Psi_mm(omega)    = (1/T) S*(omega + 2 pi m'/T) G(omega + 2 pi m'/T)
/// with G evaluated from the actual pulse taps, so correction inverts the
/// chain the acquisition really applied.
inline CorrectionBank design_correction(const PulseSpec& pulse, const SamplingKernel& kernel,
                                        const SamplerSpec& spec, const ProbeSpec& probe) {
    validate_sampler(spec, probe.p);
    const int p = probe.p;
    const double T = probe.T;
    CorrectionBank bank;
    bank.mode = spec.correction_mode;
    bank.p = p;
    bank.T = T;
    bank.taps = spec.correction_taps;
    bank.active = spec.resolved_channels(p);

    const std::vector<cplx> g_taps = pulse.taps;
    const double g_dt = 1.0 / pulse.sim_rate;
    auto psi_of = [kernel, g_taps, g_dt, T, p](int m, double w) -> cplx {
        const double wm = w + 2.0 * pi * static_cast<double>(m - p / 2 - 1) / T;
        return (1.0 / T) * kernel.response(wm) * centered_dtft(g_taps, wm, g_dt);
    };

    // Guard: |Psi_mm| must be bounded away from zero on every active band.
    const int grid = 64 * p;
    double mx = 0.0;
    std::vector<double> mins(bank.active.size(), 1e300);
    for (std::size_t a = 0; a < bank.active.size(); ++a)
        for (int k = 0; k < grid; ++k) {
            double w = 2.0 * pi * static_cast<double>(k) / (static_cast<double>(grid) * T);
            double mag = std::abs(psi_of(bank.active[a], w));
            mx = std::max(mx, mag);
            mins[a] = std::min(mins[a], mag);
        }
    for (std::size_t a = 0; a < bank.active.size(); ++a)
        if (mins[a] < 1e-6 * mx)
            throw StageError("sampler", "correction underdetermined: |Psi| vanishes on channel " +
                                            std::to_string(bank.active[a]) +
                                            " (exclude it or change the kernel)");

    bank.phi_resp = [p, T](int l, double w) -> cplx {
        double sign = (l - 1) % 2 == 0 ? 1.0 : -1.0;
        return (sign / std::sqrt(static_cast<double>(p))) *
               std::polar(1.0, -w * static_cast<double>(l - 1) * T / static_cast<double>(p));
    };
    bank.psi_resp = [psi_of](int m, double w) -> cplx { return 1.0 / psi_of(m, w); };

    if (bank.mode == CorrectionMode::fir) {
        bank.phi.resize(static_cast<std::size_t>(p));
        for (int l = 1; l <= p; ++l) {
            auto resp = [&bank, l](double w) { return bank.phi_resp(l, w); };
            bank.phi[static_cast<std::size_t>(l - 1)] =
                detail::design_fir(resp, T, bank.taps, grid);
        }
        bank.psi.resize(bank.active.size());
        for (std::size_t a = 0; a < bank.active.size(); ++a) {
            int m = bank.active[a];
            auto resp = [&bank, m](double w) { return bank.psi_resp(m, w); };
            bank.psi[a] = detail::design_fir(resp, T, bank.taps, grid);
        }
    }
    return bank;
}

/// Applies the three correction stages. Output streams keep the input index
/// range (group delay compensated); edge samples of the fir path lean on
/// zero-padding and are correspondingly less accurate — the finite-capture
/// behavior under study.
inline ChannelBank correct(const ChannelBank& c, const CorrectionBank& bank) {
    if (c.kind != ChannelBank::Kind::raw_c) throw StageError("sampler", "correct expects raw_c");
    if (c.p != bank.p || static_cast<int>(c.streams.size()) != bank.p || c.chan0 != 1)
        throw StageError("sampler", "bank/stream layout mismatch");
    const int p = bank.p;
    const long L = c.length();
    const double T = bank.T;
    const std::size_t n_act = bank.active.size();

    ChannelBank d;
    d.T = T;
    d.p = p;
    d.chan0 = bank.active.front();
    d.n0 = c.n0;
    d.kind = ChannelBank::Kind::corrected_d;
    d.streams.assign(n_act, std::vector<cplx>(static_cast<std::size_t>(L)));

    if (bank.mode == CorrectionMode::dtft_exact) {
        // All three stages as diagonal/blockwise multiplications on the
        // stream DFT grid omega_k = 2*pi*k/(L*T), k = 0..L-1.
        std::vector<std::vector<cplx>> spec(static_cast<std::size_t>(p));
        for (int l = 0; l < p; ++l) {
            spec[static_cast<std::size_t>(l)] = fft_fwd(c.streams[static_cast<std::size_t>(l)]);
            for (long k = 0; k < L; ++k) {
                double w = 2.0 * pi * static_cast<double>(k) / (static_cast<double>(L) * T);
                spec[static_cast<std::size_t>(l)][static_cast<std::size_t>(k)] *=
                    bank.phi_resp(l + 1, w);
            }
        }
        for (std::size_t a = 0; a < n_act; ++a) {
            const int m = bank.active[a];
            std::vector<cplx> acc(static_cast<std::size_t>(L), cplx{0.0, 0.0});
            for (int l = 0; l < p; ++l) {
                cplx f = std::polar(1.0 / std::sqrt(static_cast<double>(p)),
                                    -2.0 * pi * static_cast<double>((m - 1) * l) /
                                        static_cast<double>(p));
                for (long k = 0; k < L; ++k)
                    acc[static_cast<std::size_t>(k)] +=
                        f * spec[static_cast<std::size_t>(l)][static_cast<std::size_t>(k)];
            }
            for (long k = 0; k < L; ++k) {
                double w = 2.0 * pi * static_cast<double>(k) / (static_cast<double>(L) * T);
                acc[static_cast<std::size_t>(k)] *= bank.psi_resp(m, w);
            }
            d.streams[a] = fft_inv(acc);
        }
        return d;
    }

    // fir path: Phi filters, then the cross-channel DFT, then Psi filters.
    std::vector<std::vector<cplx>> stage1(static_cast<std::size_t>(p));
    for (int l = 0; l < p; ++l)
        stage1[static_cast<std::size_t>(l)] =
            fir_apply_aligned(c.streams[static_cast<std::size_t>(l)], bank.phi[static_cast<std::size_t>(l)]);
    for (std::size_t a = 0; a < n_act; ++a) {
        const int m = bank.active[a];
        std::vector<cplx> mixed(static_cast<std::size_t>(L), cplx{0.0, 0.0});
        for (int l = 0; l < p; ++l) {
            cplx f = std::polar(1.0 / std::sqrt(static_cast<double>(p)),
                                -2.0 * pi * static_cast<double>((m - 1) * l) /
                                    static_cast<double>(p));
            for (long k = 0; k < L; ++k)
                mixed[static_cast<std::size_t>(k)] +=
                    f * stage1[static_cast<std::size_t>(l)][static_cast<std::size_t>(k)];
        }
        d.streams[a] = fir_apply_aligned(mixed, bank.psi[a]);
    }
    return d;
}

/// Ground-truth d[n] = N(tau) b[n] computed directly in the DTFT domain on
/// a circle of length L (>= 8N by default), bypassing the analog chain.
/// a_seqs[i] holds a_i[n] for absolute n = 0..N-1; b_i is a_i filtered by
/// the pure delay e^{-j omega tau_i}; channel rows follow the m' map.
inline ChannelBank forward_oracle(const SystemSpec& sys, const ProbeSpec& probe,
                                  const std::vector<std::vector<cplx>>& a_seqs, long L = 0,
                                  long n0_in = std::numeric_limits<long>::min(), int chan0 = 1,
                                  int nchan = 0) {
    validate_system(sys);
    validate_probe(probe);
    const int p = probe.p;
    const double T = probe.T;
    const long n_probe = probe.n_pulses();
    if (static_cast<int>(a_seqs.size()) != sys.k_tau())
        throw StageError("sampler", "one a-sequence per delay group required");
    for (const auto& s : a_seqs)
        if (static_cast<long>(s.size()) != n_probe)
            throw StageError("sampler", "a-sequence length must equal N");
    if (nchan == 0) nchan = p;
    if (L == 0) L = 8 * n_probe;
    long n0 = n0_in == std::numeric_limits<long>::min()
                  ? static_cast<long>(std::floor(static_cast<double>(n_probe - L) / 2.0))
                  : n0_in;
    if (n0 > 0 || n0 + L < n_probe)
        throw StageError("sampler", "oracle window must cover 0..N-1");

    const int k_tau = sys.k_tau();
    // b_i on the circle: place a_i at rel = n - n0, delay spectrally.
    std::vector<std::vector<cplx>> b(static_cast<std::size_t>(k_tau));
    for (int i = 0; i < k_tau; ++i) {
        std::vector<cplx> seq(static_cast<std::size_t>(L), cplx{0.0, 0.0});
        for (long n = 0; n < n_probe; ++n)
            seq[static_cast<std::size_t>(n - n0)] = a_seqs[static_cast<std::size_t>(i)][static_cast<std::size_t>(n)];
        std::vector<cplx> spec = fft_fwd(seq);
        const double tau = sys.groups[static_cast<std::size_t>(i)].tau;
        for (long k = 0; k < L; ++k) {
            double w = 2.0 * pi * static_cast<double>(k) / (static_cast<double>(L) * T);
            spec[static_cast<std::size_t>(k)] *= std::polar(1.0, -w * tau);
        }
        b[static_cast<std::size_t>(i)] = fft_inv(spec);
    }

    ChannelBank d;
    d.T = T;
    d.p = p;
    d.chan0 = chan0;
    d.n0 = n0;
    d.kind = ChannelBank::Kind::corrected_d;
    d.streams.assign(static_cast<std::size_t>(nchan), std::vector<cplx>(static_cast<std::size_t>(L)));
    for (int a = 0; a < nchan; ++a) {
        const int mprime = (chan0 + a) - p / 2 - 1;
        for (int i = 0; i < k_tau; ++i) {
            const cplx n_mi = std::polar(
                1.0, -2.0 * pi * static_cast<double>(mprime) * sys.groups[static_cast<std::size_t>(i)].tau / T);
            for (long r = 0; r < L; ++r)
                d.streams[static_cast<std::size_t>(a)][static_cast<std::size_t>(r)] +=
                    n_mi * b[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)];
        }
    }
    return d;
}

}  // namespace ddident
