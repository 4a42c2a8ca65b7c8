// Thin FFT front end (Eigen/kissfft backend) plus the circular spectral
// primitives the simulation is built on: signed bin frequencies, fractional
// delays as phase ramps, and direct DTFT evaluation of short tap sets.
#pragma once

#include <unsupported/Eigen/FFT>

#include <vector>

#include "ddident/common.hpp"

namespace ddident {

inline std::vector<cplx> fft_fwd(const std::vector<cplx>& time) {
    Eigen::FFT<double> fft;
    std::vector<cplx> freq;
    fft.fwd(freq, time);
    return freq;
}

inline std::vector<cplx> fft_inv(const std::vector<cplx>& freq) {
    Eigen::FFT<double> fft;
    std::vector<cplx> time;
    fft.inv(time, freq);
    return time;
}

/// Signed frequency index for bin k of an n-point DFT: k in [0, n) maps to
/// k - n for k >= n/2 (negative half), so bin frequencies cover
/// [-n/2, n/2) * (2*pi / (n*dt)). The shared Nyquist point (n even) is
/// represented at the negative edge, matching the half-open-right band
/// convention used throughout: when the dense rate equals the full analysis
/// bandwidth, the edge bin must land where the band is closed, or one bin of
/// genuine signal would fall outside every sub-band.
inline long signed_bin(long k, long n) { return (2 * k >= n) ? k - n : k; }

/// Angular frequency of bin k for sample period dt (signed convention).
inline double bin_omega(long k, long n, double dt) {
    return 2.0 * pi * static_cast<double>(signed_bin(k, n)) / (static_cast<double>(n) * dt);
}

/// Circular fractional delay by tau seconds: multiply the spectrum by
/// e^{-j*omega*tau} with signed bin frequencies. Exact for the periodic
/// signal model; delay > 0 moves content toward larger indices.
inline std::vector<cplx> circular_delay(const std::vector<cplx>& x, double tau, double dt) {
    const long n = static_cast<long>(x.size());
    std::vector<cplx> spec = fft_fwd(x);
    for (long k = 0; k < n; ++k) {
        double w = bin_omega(k, n, dt);
        spec[k] *= std::polar(1.0, -w * tau);
    }
    return fft_inv(spec);
}

/// DTFT of a centered tap set at angular frequency w, including the sample
/// period as integration measure: sum_k taps[k] e^{-j*w*(k-c)*dt} * dt with
/// c = (len-1)/2. This is the continuous-transform surrogate of a dense-rate
/// FIR whose middle tap sits at t = 0.
inline cplx centered_dtft(const std::vector<cplx>& taps, double w, double dt) {
    const long n = static_cast<long>(taps.size());
    const double c = 0.5 * static_cast<double>(n - 1);
    cplx acc{0.0, 0.0};
    for (long k = 0; k < n; ++k)
        acc += taps[k] * std::polar(1.0, -w * (static_cast<double>(k) - c) * dt);
    return acc * dt;
}

/// Linear (non-circular) convolution of a stream with a causal FIR,
/// returning only the group-delay-aligned window: out[i] corresponds to
/// in[i] with the filter's (taps-1)/2 delay removed. Samples outside the
/// input are treated as zero, so edges are progressively less accurate —
/// that is deliberate (finite-capture behavior).
inline std::vector<cplx> fir_apply_aligned(const std::vector<cplx>& in,
                                           const std::vector<cplx>& fir) {
    const long n = static_cast<long>(in.size());
    const long m = static_cast<long>(fir.size());
    const long half = (m - 1) / 2;
    std::vector<cplx> out(in.size(), cplx{0.0, 0.0});
    for (long i = 0; i < n; ++i) {
        cplx acc{0.0, 0.0};
        const long full = i + half;  // index into the causal full convolution
        const long jlo = std::max<long>(0, full - n + 1);
        const long jhi = std::min<long>(m - 1, full);
        for (long j = jlo; j <= jhi; ++j) acc += fir[j] * in[full - j];
        out[i] = acc;
    }
    return out;
}

}  // namespace ddident
