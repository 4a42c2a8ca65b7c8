// Classical comparison methods: the matched-filter ambiguity surface with
// peak picking, and the quantized-grid leakage model that shows how
// off-grid targets smear across delay-Doppler resolution cells.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ddident/common.hpp"
#include "ddident/fft.hpp"
#include "ddident/model.hpp"
#include "ddident/waveform.hpp"

namespace ddident {

/// Pulse-level ambiguity A_g(a, b) = int g(u) g*(u - a) e^{-j 2 pi b u} du,
/// evaluated as a Riemann sum over the stored taps with the shifted copy
/// evaluated analytically.
inline cplx pulse_ambiguity(const PulseSpec& pulse, double a, double b) {
    const double dt = pulse.dt();
    const long n = static_cast<long>(pulse.taps.size());
    const double c = 0.5 * static_cast<double>(n - 1);
    cplx acc{0.0, 0.0};
    for (long j = 0; j < n; ++j) {
        const double t = (static_cast<double>(j) - c) * dt;
        acc += pulse.taps[static_cast<std::size_t>(j)] * pulse.eval(t - a) *
               std::polar(1.0, -2.0 * pi * b * t);
    }
    return acc * dt;
}

/// Probe-train ambiguity A(tau, nu) = int x(t) x*(t - tau) e^{-j 2 pi nu t} dt
/// for x(t) = sum_n x_n g(t - n T). Expands into pulse-level terms:
/// A = sum_n sum_k x_n x*_{n-k} e^{-j 2 pi nu n T} A_g(tau - k T, nu);
/// only the few k with |tau - k T| inside the pulse support contribute.
inline cplx ambiguity(const ProbeSpec& probe, double tau, double nu) {
    validate_probe(probe);
    const long n_pulses = probe.n_pulses();
    const double T = probe.T;
    const double support = 2.0 * probe.pulse.half_support;
    const long k_lo = static_cast<long>(std::ceil((tau - support) / T));
    const long k_hi = static_cast<long>(std::floor((tau + support) / T));
    cplx acc{0.0, 0.0};
    for (long k = k_lo; k <= k_hi; ++k) {
        const cplx ag = pulse_ambiguity(probe.pulse, tau - static_cast<double>(k) * T, nu);
        if (std::abs(ag) == 0.0) continue;
        cplx inner{0.0, 0.0};
        for (long n = 0; n < n_pulses; ++n) {
            const long m = n - k;
            if (m < 0 || m >= n_pulses) continue;
            inner += probe.x_seq[static_cast<std::size_t>(n)] *
                     std::conj(probe.x_seq[static_cast<std::size_t>(m)]) *
                     std::polar(1.0, -2.0 * pi * nu * static_cast<double>(n) * T);
        }
        acc += inner * ag;
    }
    return acc;
}

/// Matched-filter output chi(tau, nu) = int y(t) x*(t - tau) e^{-j 2 pi nu t} dt
/// on a delay/Doppler grid, evaluated against the dense observation. For a
/// noiseless narrowband channel chi is the attenuation-weighted sum of
/// ambiguity translates, so its peaks sit near (tau_i, nu_ij) but merge
/// whenever two targets fall inside one resolution cell.
inline std::vector<std::vector<cplx>> mf_surface(const DenseSignal& y, const ProbeSpec& probe,
                                                 const std::vector<double>& tau_grid,
                                                 const std::vector<double>& nu_grid) {
    validate_signal(y);
    validate_probe(probe);
    const long n_tot = static_cast<long>(y.samples.size());
    const double dt = y.dt();
    const long dpt = static_cast<long>(std::llround(y.sim_rate * probe.T));
    if (dpt <= 0 || n_tot % dpt != 0)
        throw StageError("baseline", "window is not an integer number of periods T");
    DenseSignal x = synthesize_probe(probe, y.sim_rate, y.n_lo, y.n_lo + n_tot / dpt);
    if (static_cast<long>(x.samples.size()) != n_tot)
        throw StageError("baseline", "replica/observation length mismatch");

    std::vector<std::vector<cplx>> chi(tau_grid.size(),
                                       std::vector<cplx>(nu_grid.size(), cplx{0.0, 0.0}));
    std::vector<cplx> w(static_cast<std::size_t>(n_tot));
    for (std::size_t it = 0; it < tau_grid.size(); ++it) {
        std::vector<cplx> x_tau = circular_delay(x.samples, tau_grid[it], dt);
        for (long j = 0; j < n_tot; ++j)
            w[static_cast<std::size_t>(j)] =
                y.samples[static_cast<std::size_t>(j)] * std::conj(x_tau[static_cast<std::size_t>(j)]);
        for (std::size_t iv = 0; iv < nu_grid.size(); ++iv) {
            const double nu = nu_grid[iv];
            cplx acc{0.0, 0.0};
            for (long j = 0; j < n_tot; ++j) {
                const double t = y.t0 + static_cast<double>(j) * dt;
                acc += w[static_cast<std::size_t>(j)] * std::polar(1.0, -2.0 * pi * nu * t);
            }
            chi[it][iv] = acc * dt;
        }
    }
    return chi;
}

/// Grids at a quarter of the nominal resolution cells 1/W and 1/T_total.
inline std::vector<double> mf_tau_grid(double tau_max, double bandwidth_hz) {
    const double step = 1.0 / (4.0 * bandwidth_hz);
    std::vector<double> g;
    for (double t = 0.0; t <= tau_max + 0.5 * step; t += step) g.push_back(t);
    return g;
}

inline std::vector<double> mf_nu_grid(double nu_max, double duration_s) {
    const double step = 1.0 / (4.0 * duration_s);
    std::vector<double> g;
    for (double v = -0.5 * nu_max; v <= 0.5 * nu_max + 0.5 * step; v += step) g.push_back(v);
    return g;
}

struct MFPeak {
    double tau = 0.0;
    double nu = 0.0;
    cplx value{0.0, 0.0};
};

/// Strongest k local maxima of |surface| under 3x3 non-maximum
/// suppression. Throws when the surface has fewer local maxima than
/// requested — the characteristic failure when unresolved targets merge
/// into single lobes.
inline std::vector<MFPeak> extract_peaks(const std::vector<std::vector<cplx>>& surface,
                                         const std::vector<double>& tau_grid,
                                         const std::vector<double>& nu_grid, int k) {
    const long nt = static_cast<long>(tau_grid.size());
    const long nv = static_cast<long>(nu_grid.size());
    if (nt == 0 || nv == 0 || static_cast<long>(surface.size()) != nt)
        throw StageError("baseline", "surface/grid shape mismatch");
    std::vector<MFPeak> peaks;
    for (long i = 0; i < nt; ++i)
        for (long j = 0; j < nv; ++j) {
            const double mag = std::abs(surface[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
            bool is_peak = mag > 0.0;
            for (long di = -1; di <= 1 && is_peak; ++di)
                for (long dj = -1; dj <= 1 && is_peak; ++dj) {
                    if (di == 0 && dj == 0) continue;
                    const long a = i + di, b = j + dj;
                    if (a < 0 || a >= nt || b < 0 || b >= nv) continue;
                    if (std::abs(surface[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)]) > mag)
                        is_peak = false;
                }
            if (is_peak)
                peaks.push_back({tau_grid[static_cast<std::size_t>(i)], nu_grid[static_cast<std::size_t>(j)],
                                 surface[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]});
        }
    std::sort(peaks.begin(), peaks.end(), [](const MFPeak& a, const MFPeak& b) {
        return std::abs(a.value) > std::abs(b.value);
    });
    if (static_cast<int>(peaks.size()) < k)
        throw StageError("baseline", "only " + std::to_string(peaks.size()) +
                                         " local maxima for " + std::to_string(k) +
                                         " targets (unresolved returns merged)");
    peaks.resize(static_cast<std::size_t>(k));
    return peaks;
}

/// Effective coefficients seen by a delay-Doppler grid quantized to
/// (l / W, m / T_total):
///   alpha_tilde[l][m] = sum_ij alpha_ij e^{j pi (m - T_total nu_ij)}
///                        sinc(m - T_total nu_ij) sinc(l - W tau_i)
/// Off-grid targets contribute to many cells (leakage); the struct keeps
/// the axes so callers can locate cells in physical units.
struct LeakageGrid {
    double bandwidth_hz = 0.0;  // W
    double duration_s = 0.0;    // T_total
    int l_max = 0;              // rows: l = 0..l_max
    int m_max = 0;              // cols: m = -m_max..m_max
    std::vector<std::vector<cplx>> cells;  // [l][m + m_max]

    cplx cell(int l, int m) const {
        return cells[static_cast<std::size_t>(l)][static_cast<std::size_t>(m + m_max)];
    }
    double tau_of(int l) const { return static_cast<double>(l) / bandwidth_hz; }
    double nu_of(int m) const { return static_cast<double>(m) / duration_s; }
};

inline LeakageGrid quantized_leakage(const SystemSpec& sys, double bandwidth_hz,
                                     double duration_s) {
    validate_system(sys);
    if (bandwidth_hz <= 0.0 || duration_s <= 0.0)
        throw StageError("baseline", "bandwidth and duration must be positive");
    LeakageGrid grid;
    grid.bandwidth_hz = bandwidth_hz;
    grid.duration_s = duration_s;
    grid.l_max = static_cast<int>(std::ceil(bandwidth_hz * sys.tau_max));
    grid.m_max = static_cast<int>(std::ceil(duration_s * sys.nu_max / 2.0));
    grid.cells.assign(static_cast<std::size_t>(grid.l_max + 1),
                      std::vector<cplx>(static_cast<std::size_t>(2 * grid.m_max + 1), cplx{0.0, 0.0}));
    for (const auto& g : sys.groups)
        for (std::size_t j = 0; j < g.nus.size(); ++j)
            for (int l = 0; l <= grid.l_max; ++l) {
                const double dl = static_cast<double>(l) - bandwidth_hz * g.tau;
                const double wl = sinc(dl);
                if (wl == 0.0) continue;
                for (int m = -grid.m_max; m <= grid.m_max; ++m) {
                    const double dm = static_cast<double>(m) - duration_s * g.nus[j];
                    grid.cells[static_cast<std::size_t>(l)][static_cast<std::size_t>(m + grid.m_max)] +=
                        g.alphas[j] * std::polar(1.0, pi * dm) * sinc(dm) * wl;
                }
            }
    return grid;
}

}  // namespace ddident
