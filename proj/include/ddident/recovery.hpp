// Two-step parametric recovery from the corrected streams:
//   step 1 — delays by spatial smoothing across channels + ESPRIT;
//   step 2 — per-delay Doppler/attenuation estimation from the recovered
//            a_i[n] sequences (matrix pencil, annihilating filter, or a
//            temporal ESPRIT variant).
#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ddident/common.hpp"
#include "ddident/fft.hpp"
#include "ddident/model.hpp"
#include "ddident/sampler.hpp"
#include "ddident/waveform.hpp"

namespace ddident {

/// R_bar = (1/(M L)) sum_{m=1}^{M} sum_n d_bar_m[n] d_bar_m[n]^H with
/// d_bar_m[n] = (d_m[n], ..., d_{m+M}[n])^T and M = floor(streams/2):
/// spatial smoothing over sliding channel windows, which restores rank
/// K_tau even though a single snapshot direction is observed.
inline Eigen::MatrixXcd smoothed_covariance(const ChannelBank& d) {
    if (d.kind == ChannelBank::Kind::raw_c)
        throw StageError("recovery", "smoothed_covariance expects corrected streams");
    const int n_str = static_cast<int>(d.streams.size());
    if (n_str < 2) throw StageError("recovery", "need at least two streams");
    const int M = n_str / 2;
    const long L = d.length();
    if (L < 1) throw StageError("recovery", "empty streams");

    Eigen::MatrixXcd R = Eigen::MatrixXcd::Zero(M + 1, M + 1);
    Eigen::VectorXcd v(M + 1);
    for (int m = 0; m < M; ++m)
        for (long n = 0; n < L; ++n) {
            for (int i = 0; i <= M; ++i)
                v(i) = d.streams[static_cast<std::size_t>(m + i)][static_cast<std::size_t>(n)];
            R.noalias() += v * v.adjoint();
        }
    R /= static_cast<double>(M) * static_cast<double>(L);
    return R;
}

/// Model-order estimate: number of singular values above threshold times
/// the largest one.
inline int estimate_num_delays(const Eigen::MatrixXcd& R, double threshold = 1e-3) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(R);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(0) <= 0.0) return 0;
    int k = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > threshold * s(0)) ++k;
    return k;
}

/// ESPRIT on the smoothed covariance. The signal subspace inherits the
/// rotational structure n_i(m'+1) = n_i(m') e^{-j 2 pi tau_i / T}, so the
/// eigenvalues of E_dn^+ E_up are e^{-j 2 pi tau_i / T}; delays are read
/// off the phases and mapped to [0, T). Returns them sorted ascending;
/// moduli_out (optional) receives |lambda_i| as a conditioning diagnostic.
inline std::vector<double> esprit_delays(const Eigen::MatrixXcd& R, int k_tau, double T,
                                         std::vector<double>* svals_out = nullptr,
                                         std::vector<double>* moduli_out = nullptr) {
    const int rows = static_cast<int>(R.rows());
    const int M = rows - 1;
    if (k_tau < 1) throw StageError("recovery", "k_tau must be positive");
    if (k_tau > M)
        throw IdentifiabilityError("recovery",
                                   "too few channels for " + std::to_string(k_tau) +
                                       " delays (need at least " + std::to_string(2 * k_tau) + ")");
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(R, Eigen::ComputeFullU);
    if (svals_out) {
        svals_out->resize(static_cast<std::size_t>(rows));
        for (int i = 0; i < rows; ++i) (*svals_out)[static_cast<std::size_t>(i)] = svd.singularValues()(i);
    }
    Eigen::MatrixXcd es = svd.matrixU().leftCols(k_tau);
    Eigen::MatrixXcd e_dn = es.topRows(M);     // drop last row
    Eigen::MatrixXcd e_up = es.bottomRows(M);  // drop first row

    Eigen::JacobiSVD<Eigen::MatrixXcd> psvd(e_dn, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = psvd.singularValues();
    if (sv(sv.size() - 1) < 1e-12 * sv(0))
        throw StageError("recovery", "delay subspace ill-conditioned (condition above 1e12)");
    Eigen::MatrixXcd phi = psvd.matrixV() * sv.cwiseInverse().asDiagonal() *
                           psvd.matrixU().adjoint() * e_up;

    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> eig(phi);
    if (eig.info() != Eigen::Success) throw StageError("recovery", "delay eigensolve failed");
    std::vector<double> taus(static_cast<std::size_t>(k_tau));
    std::vector<double> mods(static_cast<std::size_t>(k_tau));
    for (int i = 0; i < k_tau; ++i) {
        const cplx lam = eig.eigenvalues()(i);
        double tau = -T * std::arg(lam) / (2.0 * pi);
        if (tau < 0.0) tau += T;
        taus[static_cast<std::size_t>(i)] = tau;
        mods[static_cast<std::size_t>(i)] = std::abs(lam);
    }
    // Keep moduli paired with their sorted delays.
    std::vector<int> order(static_cast<std::size_t>(k_tau));
    for (int i = 0; i < k_tau; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(),
              [&taus](int a, int b) { return taus[static_cast<std::size_t>(a)] < taus[static_cast<std::size_t>(b)]; });
    std::vector<double> taus_sorted, mods_sorted;
    for (int idx : order) {
        taus_sorted.push_back(taus[static_cast<std::size_t>(idx)]);
        mods_sorted.push_back(mods[static_cast<std::size_t>(idx)]);
    }
    if (moduli_out) *moduli_out = mods_sorted;
    return taus_sorted;
}

/// Inverts d[n] = N(tau) b[n] by least squares per time index, then removes
/// each pure delay (b_i -> a_i) with e^{+j omega tau_i}: exactly on the
/// stream DFT grid in dtft_exact mode, or through a truncated advance
/// filter with the correction bank's tap budget in fir mode. Returns a
/// b_domain bank whose streams are the per-delay sequences a_i, index
/// range unchanged.
inline ChannelBank recover_a(const ChannelBank& d, const std::vector<double>& delays,
                             const CorrectionBank& bank) {
    if (d.kind != ChannelBank::Kind::corrected_d)
        throw StageError("recovery", "recover_a expects corrected streams");
    const int n_str = static_cast<int>(d.streams.size());
    const int k_tau = static_cast<int>(delays.size());
    if (k_tau < 1 || k_tau > n_str)
        throw StageError("recovery", "delay count must be in 1..streams");
    const long L = d.length();
    const double T = d.T;

    Eigen::MatrixXcd nm(n_str, k_tau);
    for (int a = 0; a < n_str; ++a) {
        const int mprime = (d.chan0 + a) - d.p / 2 - 1;
        for (int i = 0; i < k_tau; ++i)
            nm(a, i) = std::polar(1.0, -2.0 * pi * static_cast<double>(mprime) *
                                           delays[static_cast<std::size_t>(i)] / T);
    }
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(nm, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) < 1e-12 * sv(0))
        throw StageError("recovery", "delay steering matrix ill-conditioned (delays too close)");

    Eigen::MatrixXcd dmat(n_str, L);
    for (int a = 0; a < n_str; ++a)
        for (long n = 0; n < L; ++n)
            dmat(a, n) = d.streams[static_cast<std::size_t>(a)][static_cast<std::size_t>(n)];
    Eigen::MatrixXcd bmat = svd.solve(dmat);  // k_tau x L

    ChannelBank out;
    out.T = T;
    out.p = d.p;
    out.chan0 = 1;
    out.n0 = d.n0;
    out.kind = ChannelBank::Kind::b_domain;
    out.streams.assign(static_cast<std::size_t>(k_tau), std::vector<cplx>(static_cast<std::size_t>(L)));
    for (int i = 0; i < k_tau; ++i) {
        std::vector<cplx> b(static_cast<std::size_t>(L));
        for (long n = 0; n < L; ++n) b[static_cast<std::size_t>(n)] = bmat(i, n);
        const double tau = delays[static_cast<std::size_t>(i)];
        if (bank.mode == CorrectionMode::dtft_exact) {
            std::vector<cplx> spec = fft_fwd(b);
            for (long k = 0; k < L; ++k) {
                double w = 2.0 * pi * static_cast<double>(k) / (static_cast<double>(L) * T);
                spec[static_cast<std::size_t>(k)] *= std::polar(1.0, w * tau);
            }
            out.streams[static_cast<std::size_t>(i)] = fft_inv(spec);
        } else {
            auto resp = [tau](double w) { return std::polar(1.0, w * tau); };
            std::vector<cplx> fir = detail::design_fir(resp, T, bank.taps, 64 * bank.p);
            out.streams[static_cast<std::size_t>(i)] = fir_apply_aligned(b, fir);
        }
    }
    return out;
}

enum class DopplerMethod { matrix_pencil, annihilating_filter, esprit_temporal };

inline const char* to_string(DopplerMethod m) {
    switch (m) {
        case DopplerMethod::matrix_pencil: return "matrix_pencil";
        case DopplerMethod::annihilating_filter: return "annihilating_filter";
        case DopplerMethod::esprit_temporal: return "esprit_temporal";
    }
    return "?";
}

namespace detail {

/// Shift-invariance frequencies from an SVD subspace of the Hankel matrix
/// H[r][c] = seq[r+c] (rows length P+1). The right singular subspace spans
/// conjugated Vandermonde vectors, so the pencil eigenvalues come out
/// conjugated; callers receive z_j = e^{j 2 pi nu_j T} directly.
inline std::vector<cplx> hankel_subspace_roots(const std::vector<cplx>& seq, int k, int pencil) {
    const long n = static_cast<long>(seq.size());
    const long rows = n - pencil;
    Eigen::MatrixXcd h(rows, pencil + 1);
    for (long r = 0; r < rows; ++r)
        for (int c = 0; c <= pencil; ++c)
            h(r, c) = seq[static_cast<std::size_t>(r + c)];
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(h, Eigen::ComputeThinV);
    Eigen::MatrixXcd vs = svd.matrixV().leftCols(k);
    Eigen::MatrixXcd v_dn = vs.topRows(pencil);
    Eigen::MatrixXcd v_up = vs.bottomRows(pencil);
    Eigen::JacobiSVD<Eigen::MatrixXcd> psvd(v_dn, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = psvd.singularValues();
    if (sv(sv.size() - 1) < 1e-12 * sv(0))
        throw StageError("recovery", "Doppler subspace ill-conditioned");
    Eigen::MatrixXcd phi = psvd.matrixV() * sv.cwiseInverse().asDiagonal() *
                           psvd.matrixU().adjoint() * v_up;
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> eig(phi);
    if (eig.info() != Eigen::Success) throw StageError("recovery", "Doppler eigensolve failed");
    std::vector<cplx> z(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) z[static_cast<std::size_t>(i)] = std::conj(eig.eigenvalues()(i));
    return z;
}

/// Annihilating-filter roots: solve the (least-squares) Toeplitz system
/// sum_m h_m seq[n-m] = -seq[n], n = k..N-1, then take companion-matrix
/// roots of z^k + h_1 z^{k-1} + ... + h_k. Exact at N = 2k.
inline std::vector<cplx> annihilating_roots(const std::vector<cplx>& seq, int k) {
    const long n = static_cast<long>(seq.size());
    const long rows = n - k;
    Eigen::MatrixXcd a(rows, k);
    Eigen::VectorXcd rhs(rows);
    for (long r = 0; r < rows; ++r) {
        const long idx = k + r;
        for (int m = 1; m <= k; ++m) a(r, m - 1) = seq[static_cast<std::size_t>(idx - m)];
        rhs(r) = -seq[static_cast<std::size_t>(idx)];
    }
    Eigen::VectorXcd h = a.colPivHouseholderQr().solve(rhs);
    Eigen::MatrixXcd comp = Eigen::MatrixXcd::Zero(k, k);
    for (int i = 1; i < k; ++i) comp(i, i - 1) = 1.0;
    for (int i = 0; i < k; ++i) comp(i, k - 1) = -h(k - 1 - i);
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> eig(comp);
    if (eig.info() != Eigen::Success) throw StageError("recovery", "companion eigensolve failed");
    std::vector<cplx> z(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) z[static_cast<std::size_t>(i)] = eig.eigenvalues()(i);
    return z;
}

}  // namespace detail

/// Doppler shifts of one delay group from a_i[n], n = 0..N-1 (absolute
/// indices). The probing sequence is divided out first; frequencies are
/// returned sorted ascending in (-1/(2T), 1/(2T)].
inline std::vector<double> recover_dopplers(const std::vector<cplx>& a_seq,
                                            const std::vector<cplx>& x_seq, int k_nu, double T,
                                            DopplerMethod method = DopplerMethod::matrix_pencil) {
    const long n = static_cast<long>(x_seq.size());
    if (static_cast<long>(a_seq.size()) != n)
        throw StageError("recovery", "a-sequence/probe length mismatch");
    if (k_nu < 1) throw StageError("recovery", "k_nu must be positive");
    if (n < 2 * k_nu)
        throw IdentifiabilityError("recovery",
                                   "insufficient temporal degrees of freedom: N = " +
                                       std::to_string(n) + " < 2 k_nu = " + std::to_string(2 * k_nu));
    std::vector<cplx> seq(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i)
        seq[static_cast<std::size_t>(i)] = a_seq[static_cast<std::size_t>(i)] / x_seq[static_cast<std::size_t>(i)];

    std::vector<cplx> z;
    if (method == DopplerMethod::annihilating_filter) {
        z = detail::annihilating_roots(seq, k_nu);
    } else {
        int pencil = static_cast<int>(n / 3);
        pencil = std::max(pencil, k_nu);
        pencil = std::min(pencil, static_cast<int>(n) - k_nu);
        z = detail::hankel_subspace_roots(seq, k_nu, pencil);
    }
    std::vector<double> nus(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) nus[i] = std::arg(z[i]) / (2.0 * pi * T);
    std::sort(nus.begin(), nus.end());
    return nus;
}

/// Least-squares attenuations against the Vandermonde e^{j 2 pi nu n T}
/// (absolute n = 0..N-1). residual_out (optional) receives the relative
/// fit residual.
inline std::vector<cplx> recover_attenuations(const std::vector<cplx>& a_tilde,
                                              const std::vector<double>& nus, double T,
                                              double* residual_out = nullptr) {
    const long n = static_cast<long>(a_tilde.size());
    const int k = static_cast<int>(nus.size());
    if (k < 1 || n < k) throw StageError("recovery", "attenuation system underdetermined");
    Eigen::MatrixXcd vmat(n, k);
    Eigen::VectorXcd rhs(n);
    for (long r = 0; r < n; ++r) {
        rhs(r) = a_tilde[static_cast<std::size_t>(r)];
        for (int c = 0; c < k; ++c)
            vmat(r, c) = std::polar(1.0, 2.0 * pi * nus[static_cast<std::size_t>(c)] *
                                             static_cast<double>(r) * T);
    }
    Eigen::VectorXcd alpha = vmat.colPivHouseholderQr().solve(rhs);
    if (residual_out) {
        double num = (vmat * alpha - rhs).norm();
        double den = rhs.norm();
        *residual_out = den > 0.0 ? num / den : 0.0;
    }
    std::vector<cplx> out(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) out[static_cast<std::size_t>(i)] = alpha(i);
    return out;
}

/// One recovered delay group: tau with its Doppler/attenuation pairs, or a
/// failure record when the per-group step could not complete.
struct DopplerGroup {
    double tau = 0.0;
    std::vector<double> nus;
    std::vector<cplx> alphas;
    bool failed = false;
    std::string error;
    double fit_residual = 0.0;
};

struct RecoveryResult {
    std::vector<double> delays;            // sorted ascending
    std::vector<DopplerGroup> groups;      // aligned with delays
    std::vector<double> singular_values;   // smoothed-covariance spectrum
    std::vector<double> eigen_moduli;      // |lambda_i| of the delay rotation
    bool all_ok() const {
        for (const auto& g : groups)
            if (g.failed) return false;
        return !groups.empty();
    }
};

struct IdentifyOptions {
    DopplerMethod method = DopplerMethod::matrix_pencil;
    /// Run even when p < 2 k_tau or N < 2 max(k_nu); useful for studying
    /// deliberately undersized configurations (results then carry failed
    /// groups or biased estimates rather than an upfront error).
    bool override_identifiability = false;
    int kernel_taps = 33;  // inspection taps of the acquisition kernel
    /// Optional precomputed correction bank (it depends only on the
    /// pulse/kernel/sampler, so sweeps reuse one across trials).
    const CorrectionBank* correction = nullptr;
};

/// Full pipeline on one observation: acquire, correct, delays via ESPRIT,
/// per-delay sequences, Dopplers and attenuations per group. Group order
/// counts are caller-supplied (k_nu_list[i] pairs with the i-th smallest
/// recovered delay); a group failure is recorded, not thrown.
inline RecoveryResult identify(const DenseSignal& y, const ProbeSpec& probe,
                               const SamplerSpec& spec, int k_tau,
                               const std::vector<int>& k_nu_list,
                               const IdentifyOptions& options = {}) {
    validate_probe(probe);
    validate_sampler(spec, probe.p);
    if (static_cast<int>(k_nu_list.size()) != k_tau)
        throw StageError("recovery", "k_nu_list must have one entry per delay");
    int k_nu_max = 0;
    for (int k : k_nu_list) {
        if (k < 1) throw StageError("recovery", "k_nu entries must be positive");
        k_nu_max = std::max(k_nu_max, k);
    }
    const int n_act = static_cast<int>(spec.resolved_channels(probe.p).size());
    if (!options.override_identifiability) {
        if (n_act < 2 * k_tau)
            throw IdentifiabilityError("recovery",
                                       "need at least " + std::to_string(2 * k_tau) +
                                           " active channels for " + std::to_string(k_tau) +
                                           " delays, have " + std::to_string(n_act));
        if (probe.n_pulses() < 2 * k_nu_max)
            throw IdentifiabilityError("recovery",
                                       "insufficient temporal degrees of freedom: N = " +
                                           std::to_string(probe.n_pulses()) + " < 2 k_nu = " +
                                           std::to_string(2 * k_nu_max));
    }

    SamplingKernel kernel =
        make_kernel(spec.kernel_kind, probe.p, probe.T, y.sim_rate, options.kernel_taps);
    ChannelBank c = acquire(y, kernel, spec, probe);
    CorrectionBank corr_local;
    if (!options.correction) corr_local = design_correction(probe.pulse, kernel, spec, probe);
    const CorrectionBank& corr = options.correction ? *options.correction : corr_local;
    ChannelBank d = correct(c, corr);

    RecoveryResult res;
    Eigen::MatrixXcd cov = smoothed_covariance(d);
    res.delays = esprit_delays(cov, k_tau, probe.T, &res.singular_values, &res.eigen_moduli);
    ChannelBank a_bank = recover_a(d, res.delays, corr);

    const long n_probe = probe.n_pulses();
    if (a_bank.n0 > 0 || a_bank.n0 + a_bank.length() < n_probe)
        throw StageError("recovery", "capture window does not cover the probe support");

    res.groups.resize(static_cast<std::size_t>(k_tau));
    for (int i = 0; i < k_tau; ++i) {
        DopplerGroup& g = res.groups[static_cast<std::size_t>(i)];
        g.tau = res.delays[static_cast<std::size_t>(i)];
        std::vector<cplx> a_abs(static_cast<std::size_t>(n_probe));
        std::vector<cplx> a_tilde(static_cast<std::size_t>(n_probe));
        for (long n = 0; n < n_probe; ++n) {
            a_abs[static_cast<std::size_t>(n)] =
                a_bank.streams[static_cast<std::size_t>(i)][static_cast<std::size_t>(n - a_bank.n0)];
            a_tilde[static_cast<std::size_t>(n)] =
                a_abs[static_cast<std::size_t>(n)] / probe.x_seq[static_cast<std::size_t>(n)];
        }
        try {
            g.nus = recover_dopplers(a_abs, probe.x_seq, k_nu_list[static_cast<std::size_t>(i)],
                                     probe.T, options.method);
            g.alphas = recover_attenuations(a_tilde, g.nus, probe.T, &g.fit_residual);
        } catch (const StageError& e) {
            g.failed = true;
            g.error = e.what();
        }
    }
    return res;
}

}  // namespace ddident
