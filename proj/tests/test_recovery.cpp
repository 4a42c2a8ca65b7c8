#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "ddident/common.hpp"
#include "ddident/model.hpp"
#include "ddident/recovery.hpp"
#include "ddident/sampler.hpp"
#include "ddident/waveform.hpp"

using namespace ddident;

namespace {

constexpr double kT = 10e-6;

ProbeSpec make_probe(int n, int p, int oversample, int taps, std::uint64_t seed) {
    ProbeSpec probe;
    probe.T = kT;
    probe.p = p;
    probe.pulse = design_flat_pulse(p, kT, oversample * p / kT, taps);
    probe.x_seq.resize(static_cast<std::size_t>(n));
    std::mt19937_64 rng(seed);
    for (auto& x : probe.x_seq) x = (rng() & 1) ? cplx(1, 0) : cplx(-1, 0);
    return probe;
}

std::vector<std::vector<cplx>> make_a_seqs(const SystemSpec& sys, const ProbeSpec& probe) {
    std::vector<std::vector<cplx>> a(static_cast<std::size_t>(sys.k_tau()));
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i].resize(probe.x_seq.size());
        for (std::size_t n = 0; n < probe.x_seq.size(); ++n) {
            cplx s{0.0, 0.0};
            const auto& g = sys.groups[i];
            for (std::size_t j = 0; j < g.nus.size(); ++j)
                s += g.alphas[j] *
                     std::polar(1.0, 2.0 * pi * g.nus[j] * static_cast<double>(n) * probe.T);
            a[i][n] = s * probe.x_seq[n];
        }
    }
    return a;
}

}  // namespace

TEST_CASE("smoothed_covariance - single steering direction gives the analytic rank-1 form") {
    // d_m[n] = z^m with |z| = 1 and any n: every smoothing window reads
    // z^{m} (1, z, z^2)^T, so R = u u^H with u = (1, z, z^2).
    const cplx z = std::polar(1.0, 0.7);
    ChannelBank d;
    d.T = kT;
    d.p = 4;
    d.chan0 = 1;
    d.kind = ChannelBank::Kind::corrected_d;
    d.streams.resize(4);
    for (int m = 0; m < 4; ++m)
        d.streams[static_cast<std::size_t>(m)].assign(5, std::pow(z, m));

    Eigen::MatrixXcd r = smoothed_covariance(d);
    REQUIRE(r.rows() == 3);  // M = 4/2 = 2 -> windows of length M+1 = 3
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(std::abs(r(i, j) - std::pow(z, i - j)) < 1e-12);
    CHECK(estimate_num_delays(r) == 1);

    ChannelBank raw = d;
    raw.kind = ChannelBank::Kind::raw_c;
    CHECK_THROWS_AS(smoothed_covariance(raw), StageError);
    ChannelBank one = d;
    one.streams.resize(1);
    CHECK_THROWS_AS(smoothed_covariance(one), StageError);
}

TEST_CASE("esprit_delays - exact on forward-model streams") {
    ProbeSpec probe = make_probe(8, 4, 16, 65, 77);
    SystemSpec sys;
    sys.tau_max = kT;
    sys.nu_max = 10e3;
    sys.groups.push_back({1.3e-6, {-4.2e3, 2.6e3}, {cplx(0.7, 0.4), cplx(-0.2, 0.9)}});
    sys.groups.push_back({7.4e-6, {1.4e3}, {cplx(1.1, -0.3)}});
    ChannelBank d = forward_oracle(sys, probe, make_a_seqs(sys, probe));

    std::vector<double> svals, moduli;
    Eigen::MatrixXcd r = smoothed_covariance(d);
    auto taus = esprit_delays(r, 2, kT, &svals, &moduli);
    REQUIRE(taus.size() == 2);
    CHECK(taus[0] == Catch::Approx(1.3e-6).margin(1e-15));
    CHECK(taus[1] == Catch::Approx(7.4e-6).margin(1e-15));
    CHECK(estimate_num_delays(r) == 2);

    // Rank-2 spectrum and unit-modulus rotation eigenvalues.
    REQUIRE(svals.size() == 3);
    CHECK(svals[2] < 1e-10 * svals[0]);
    for (double m : moduli) CHECK(m == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("esprit_delays - identifiability and argument validation") {
    Eigen::MatrixXcd r = Eigen::MatrixXcd::Identity(3, 3);  // M = 2
    CHECK_THROWS_AS(esprit_delays(r, 3, kT), IdentifiabilityError);
    CHECK_THROWS_AS(esprit_delays(r, 0, kT), StageError);
    CHECK_NOTHROW(esprit_delays(r, 2, kT));
}

TEST_CASE("esprit_delays - delay near T stays inside [0, T)") {
    ProbeSpec probe = make_probe(8, 4, 16, 65, 78);
    SystemSpec sys;
    sys.tau_max = kT;
    sys.nu_max = 10e3;
    sys.groups.push_back({0.4e-6, {1.0e3}, {cplx(1, 0)}});
    sys.groups.push_back({9.7e-6, {-2.0e3}, {cplx(0, 1)}});
    ChannelBank d = forward_oracle(sys, probe, make_a_seqs(sys, probe));
    auto taus = esprit_delays(smoothed_covariance(d), 2, kT);
    CHECK(taus[0] == Catch::Approx(0.4e-6).margin(1e-14));
    CHECK(taus[1] == Catch::Approx(9.7e-6).margin(1e-14));
}

TEST_CASE("recover_a - inverts steering and removes the delays exactly") {
    ProbeSpec probe = make_probe(8, 4, 16, 65, 79);
    SystemSpec sys;
    sys.tau_max = kT;
    sys.nu_max = 10e3;
    sys.groups.push_back({1.3e-6, {-4.2e3, 2.6e3}, {cplx(0.7, 0.4), cplx(-0.2, 0.9)}});
    sys.groups.push_back({7.4e-6, {1.4e3}, {cplx(1.1, -0.3)}});
    auto a_seqs = make_a_seqs(sys, probe);
    ChannelBank d = forward_oracle(sys, probe, a_seqs);

    CorrectionBank cb;
    cb.mode = CorrectionMode::dtft_exact;
    cb.p = probe.p;
    cb.T = kT;
    ChannelBank a_bank = recover_a(d, {1.3e-6, 7.4e-6}, cb);
    CHECK(a_bank.kind == ChannelBank::Kind::b_domain);
    CHECK(a_bank.n0 == d.n0);
    REQUIRE(a_bank.streams.size() == 2);

    // On the probe support the streams equal a_i[n]; off it they vanish.
    for (int i = 0; i < 2; ++i)
        for (long r = 0; r < a_bank.length(); ++r) {
            long n_abs = a_bank.n0 + r;
            cplx want = (n_abs >= 0 && n_abs < 8)
                            ? a_seqs[static_cast<std::size_t>(i)][static_cast<std::size_t>(n_abs)]
                            : cplx{0.0, 0.0};
            REQUIRE(std::abs(a_bank.streams[static_cast<std::size_t>(i)]
                                           [static_cast<std::size_t>(r)] -
                             want) < 1e-10);
        }

    // Nearly coincident delays make the steering matrix uninvertible.
    CHECK_THROWS_AS(recover_a(d, {1.3e-6, 1.3e-6 + 1e-18}, cb), StageError);
    CHECK_THROWS_AS(recover_a(d, {}, cb), StageError);
}

TEST_CASE("recover_dopplers - positive shift comes back with a positive sign") {
    // Regression for the pencil's subspace conjugation: a lone
    // e^{j 2 pi nu n T} with nu = +1 kHz must not flip to -1 kHz.
    const long n = 16;
    std::vector<cplx> x_seq(n, cplx(1, 0)), a_seq(n);
    for (long i = 0; i < n; ++i)
        a_seq[static_cast<std::size_t>(i)] =
            std::polar(1.0, 2.0 * pi * 1.0e3 * static_cast<double>(i) * kT);
    for (auto method : {DopplerMethod::matrix_pencil, DopplerMethod::annihilating_filter,
                        DopplerMethod::esprit_temporal}) {
        auto nus = recover_dopplers(a_seq, x_seq, 1, kT, method);
        REQUIRE(nus.size() == 1);
        INFO(to_string(method));
        CHECK(nus[0] == Catch::Approx(1.0e3).margin(1e-6));
    }
}

TEST_CASE("recover_dopplers - three shifts, all methods, modulated probe") {
    const long n = 30;
    const std::vector<double> truth = {-4.2e3, -0.8e3, 2.6e3};
    const std::vector<cplx> amps = {cplx(0.8, 0.1), cplx(-0.4, 0.7), cplx(0.2, -0.9)};
    std::mt19937_64 rng(5);
    std::vector<cplx> x_seq(n), a_seq(n);
    for (long i = 0; i < n; ++i) {
        x_seq[static_cast<std::size_t>(i)] = (rng() & 1) ? cplx(1, 0) : cplx(-1, 0);
        cplx s{0, 0};
        for (std::size_t j = 0; j < truth.size(); ++j)
            s += amps[j] * std::polar(1.0, 2.0 * pi * truth[j] * static_cast<double>(i) * kT);
        a_seq[static_cast<std::size_t>(i)] = s * x_seq[static_cast<std::size_t>(i)];
    }
    for (auto method : {DopplerMethod::matrix_pencil, DopplerMethod::annihilating_filter,
                        DopplerMethod::esprit_temporal}) {
        auto nus = recover_dopplers(a_seq, x_seq, 3, kT, method);
        REQUIRE(nus.size() == 3);
        for (std::size_t j = 0; j < 3; ++j) {
            INFO(to_string(method) << " j=" << j);
            CHECK(nus[j] == Catch::Approx(truth[j]).margin(1e-6));
        }
    }
}

TEST_CASE("recover_dopplers - annihilating filter is exact at the N = 2K floor") {
    const int k = 3;
    const std::vector<double> truth = {-3.0e3, 0.5e3, 4.0e3};
    auto build = [&](long n) {
        std::vector<cplx> a(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i) {
            cplx s{0, 0};
            for (std::size_t j = 0; j < truth.size(); ++j)
                s += (1.0 + static_cast<double>(j)) *
                     std::polar(1.0, 2.0 * pi * truth[j] * static_cast<double>(i) * kT);
            a[static_cast<std::size_t>(i)] = s;
        }
        return a;
    };
    std::vector<cplx> ones6(6, cplx(1, 0)), ones5(5, cplx(1, 0));

    auto nus = recover_dopplers(build(6), ones6, k, kT, DopplerMethod::annihilating_filter);
    REQUIRE(nus.size() == 3);
    for (std::size_t j = 0; j < 3; ++j)
        CHECK(nus[j] == Catch::Approx(truth[j]).margin(1e-5));

    // One sample short of 2K: structural degrees-of-freedom error.
    CHECK_THROWS_AS(recover_dopplers(build(5), ones5, k, kT, DopplerMethod::annihilating_filter),
                    IdentifiabilityError);
    CHECK_THROWS_AS(recover_dopplers(build(6), ones5, k, kT), StageError);  // length mismatch
    CHECK_THROWS_AS(recover_dopplers(build(6), ones6, 0, kT), StageError);
}

TEST_CASE("recover_attenuations - least squares on the Doppler Vandermonde") {
    const std::vector<double> nus = {-3.1e3, 1.4e3, 4.4e3};
    const std::vector<cplx> truth = {cplx(0.9, -0.2), cplx(-0.5, 0.6), cplx(0.1, 1.0)};
    const long n = 12;
    std::vector<cplx> a_tilde(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        cplx s{0, 0};
        for (std::size_t j = 0; j < nus.size(); ++j)
            s += truth[j] * std::polar(1.0, 2.0 * pi * nus[j] * static_cast<double>(i) * kT);
        a_tilde[static_cast<std::size_t>(i)] = s;
    }
    double residual = 1.0;
    auto alphas = recover_attenuations(a_tilde, nus, kT, &residual);
    REQUIRE(alphas.size() == 3);
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(alphas[j] - truth[j]) < 1e-10);
    CHECK(residual < 1e-10);

    std::vector<cplx> too_short(2, cplx(1, 0));
    CHECK_THROWS_AS(recover_attenuations(too_short, nus, kT), StageError);
}

TEST_CASE("identify - noiseless narrowband reference scenario is machine-exact") {
    ProbeSpec probe = make_probe(30, 4, 16, 257, 7);
    SystemSpec sys;
    sys.tau_max = kT;
    sys.nu_max = 10e3;
    sys.groups.push_back({1.3e-6, {-4.2e3, -0.8e3, 2.6e3},
                          {cplx(0.8, 0.1), cplx(-0.4, 0.7), cplx(0.2, -0.9)}});
    sys.groups.push_back({7.4e-6, {-3.1e3, 1.4e3, 4.4e3},
                          {cplx(0.9, -0.2), cplx(-0.5, 0.6), cplx(0.1, 1.0)}});

    DenseSignal x = synthesize_probe(probe, probe.pulse.sim_rate);
    DenseSignal y = apply_system(x, sys, ChannelMode::narrowband);

    SamplerSpec spec;
    spec.correction_mode = CorrectionMode::dtft_exact;
    RecoveryResult res = identify(y, probe, spec, 2, {3, 3});
    REQUIRE(res.all_ok());
    REQUIRE(res.delays.size() == 2);
    CHECK(std::abs(res.delays[0] - 1.3e-6) < 1e-12 * kT);
    CHECK(std::abs(res.delays[1] - 7.4e-6) < 1e-12 * kT);
    for (int i = 0; i < 2; ++i) {
        const auto& g = res.groups[static_cast<std::size_t>(i)];
        REQUIRE(g.nus.size() == 3);
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(std::abs(g.nus[j] - sys.groups[static_cast<std::size_t>(i)].nus[j]) <
                  1e-6 * sys.nu_max);
            CHECK(std::abs(g.alphas[j] - sys.groups[static_cast<std::size_t>(i)].alphas[j]) <
                  1e-6);
        }
        CHECK(g.fit_residual < 1e-9);
    }
}

TEST_CASE("identify - structural gates and the override escape hatch") {
    ProbeSpec probe = make_probe(8, 2, 16, 65, 9);  // p = 2 < 2*k_tau
    DenseSignal x = synthesize_probe(probe, probe.pulse.sim_rate);
    SystemSpec sys;
    sys.tau_max = kT;
    sys.nu_max = 10e3;
    sys.groups.push_back({1.0e-6, {1.0e3}, {cplx(1, 0)}});
    sys.groups.push_back({6.0e-6, {-2.0e3}, {cplx(0, 1)}});
    DenseSignal y = apply_system(x, sys, ChannelMode::narrowband);

    SamplerSpec spec;
    spec.correction_mode = CorrectionMode::dtft_exact;
    CHECK_THROWS_AS(identify(y, probe, spec, 2, {1, 1}), IdentifiabilityError);

    // With the gate overridden the run proceeds until ESPRIT itself hits the
    // channel shortfall; the failure is still structural, just later.
    IdentifyOptions opts;
    opts.override_identifiability = true;
    CHECK_THROWS_AS(identify(y, probe, spec, 2, {1, 1}, opts), IdentifiabilityError);

    // Too few pulses for the requested Doppler order.
    ProbeSpec probe4 = make_probe(4, 4, 16, 65, 9);
    DenseSignal x4 = synthesize_probe(probe4, probe4.pulse.sim_rate);
    DenseSignal y4 = apply_system(x4, sys, ChannelMode::narrowband);
    CHECK_THROWS_AS(identify(y4, probe4, spec, 2, {3, 3}), IdentifiabilityError);

    CHECK_THROWS_AS(identify(y4, probe4, spec, 2, {1}), StageError);  // list size mismatch
}

TEST_CASE("identify - capture window must cover the probe support") {
    ProbeSpec probe = make_probe(8, 4, 16, 65, 13);
    DenseSignal x = synthesize_probe(probe, probe.pulse.sim_rate);
    SystemSpec sys;
    sys.tau_max = kT;
    sys.nu_max = 10e3;
    sys.groups.push_back({1.0e-6, {1.0e3}, {cplx(1, 0)}});
    sys.groups.push_back({6.0e-6, {-2.0e3}, {cplx(0, 1)}});
    DenseSignal y = apply_system(x, sys, ChannelMode::narrowband);

    SamplerSpec spec;
    spec.correction_mode = CorrectionMode::dtft_exact;
    spec.capture_count = 4 * 4;  // 4 stream samples < N = 8
    CHECK_THROWS_AS(identify(y, probe, spec, 2, {1, 1}), StageError);
}
