// Shared numeric helpers and error types used across the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ddident {

using cplx = std::complex<double>;

inline constexpr double pi = 3.141592653589793238462643383279502884;

/// Error with a pipeline-stage label so CLI failures say where they happened.
class StageError : public std::runtime_error {
  public:
    StageError(std::string stage, const std::string& msg)
        : std::runtime_error("[" + stage + "] " + msg), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

  private:
    std::string stage_;
};

/// Raised when a configuration is structurally unable to support recovery
/// (rank/DOF shortfalls such as p < 2*K_tau or N < 2*K_nu).
class IdentifiabilityError : public StageError {
  public:
    using StageError::StageError;
};

/// Normalized sinc: sin(pi*u)/(pi*u), sinc(0) = 1.
inline double sinc(double u) {
    if (std::abs(u) < 1e-12) {
        double v = pi * u;
        return 1.0 - v * v / 6.0;
    }
    return std::sin(pi * u) / (pi * u);
}

inline double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }
inline double lin_to_db(double lin) { return 10.0 * std::log10(lin); }

/// SplitMix64 step; used to derive independent per-trial seeds from
/// (master seed, snr index, trial index) so parallel schedules cannot
/// change the streams.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
    return mix64(mix64(master ^ 0xd1b54a32d192ed03ULL) ^ mix64(a) ^ (mix64(b) << 1));
}

/// Minimum-cost assignment on a square cost matrix (Hungarian algorithm,
/// O(n^3) shortest-augmenting-path form). Returns row -> column.
/// Small n only (target matching, n <= ~16).
inline std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
    int n = static_cast<int>(cost.size());
    if (n == 0) return {};
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> match(n + 1, 0);  // column -> row (1-based)
    for (int i = 1; i <= n; ++i) {
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        std::vector<int> way(n + 1, 0);
        int j0 = 0;
        match[0] = i;
        do {
            used[j0] = 1;
            int i0 = match[j0], j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) { minv[j] = cur; way[j] = j0; }
                if (minv[j] < delta) { delta = minv[j]; j1 = j; }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) { u[match[j]] += delta; v[j] -= delta; }
                else minv[j] -= delta;
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j)
        if (match[j] > 0) row_to_col[match[j] - 1] = j - 1;
    return row_to_col;
}

/// Spearman rank correlation of two equal-length series (ties broken by
/// average rank; series here are strictly ordered SNRs vs. noisy means,
/// so plain ranks suffice).
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<int> idx(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) idx[i] = static_cast<int>(i);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t k = 0; k < idx.size(); ++k) r[idx[k]] = static_cast<double>(k);
        return r;
    };
    auto rx = ranks(x), ry = ranks(y);
    double n = static_cast<double>(x.size());
    double mx = (n - 1) / 2.0;
    double num = 0, dx = 0, dy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += (rx[i] - mx) * (ry[i] - mx);
        dx += (rx[i] - mx) * (rx[i] - mx);
        dy += (ry[i] - mx) * (ry[i] - mx);
    }
    return num / std::sqrt(dx * dy);
}

}  // namespace ddident
