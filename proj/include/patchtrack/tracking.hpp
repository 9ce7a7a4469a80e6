#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "patchtrack/core.hpp"
#include "patchtrack/sparse.hpp"
#include "patchtrack/ulam.hpp"

namespace patchtrack {

/// (sum |u_i - v_i|^p)^(1/p); a quasi-norm distance for p < 1.
inline double quasi_norm(const std::vector<double>& u, const std::vector<double>& v, double p) {
    if (!(p > 0.0) || p > 2.0) throw ConfigError("quasi-norm exponent must lie in (0, 2]");
    if (u.size() != v.size()) throw ConfigError("quasi-norm requires equal-length vectors");
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += std::pow(std::fabs(u[i] - v[i]), p);
    return std::pow(s, 1.0 / p);
}

/// Two vectors on (possibly different) bin supports re-indexed onto the
/// sorted union, padded with zeros.
struct Lifted {
    std::vector<int> bins;
    std::vector<double> a;
    std::vector<double> b;
};

inline Lifted lift(const std::vector<int>& a_bins, const std::vector<double>& a_vals,
                   const std::vector<int>& b_bins, const std::vector<double>& b_vals) {
    if (a_bins.size() != a_vals.size() || b_bins.size() != b_vals.size())
        throw ConfigError("lift: bin list and value list lengths differ");
    Lifted out;
    out.bins.reserve(a_bins.size() + b_bins.size());
    std::set_union(a_bins.begin(), a_bins.end(), b_bins.begin(), b_bins.end(),
                   std::back_inserter(out.bins));
    out.a.assign(out.bins.size(), 0.0);
    out.b.assign(out.bins.size(), 0.0);
    for (std::size_t i = 0, k = 0; i < a_bins.size(); ++i) {
        k = std::lower_bound(out.bins.begin() + k, out.bins.end(), a_bins[i]) - out.bins.begin();
        out.a[k] = a_vals[i];
    }
    for (std::size_t i = 0, k = 0; i < b_bins.size(); ++i) {
        k = std::lower_bound(out.bins.begin() + k, out.bins.end(), b_bins[i]) - out.bins.begin();
        out.b[k] = b_vals[i];
    }
    return out;
}

/// Distance between a window's right vector and the next window's right
/// vector pushed one step forward. Returns +inf when the pushforward
/// vanishes; otherwise the pushforward is normalised to unit Euclidean
/// length and the smaller of the two sign alignments is reported.
inline double pushforward_compare(const std::vector<int>& vt_bins, const std::vector<double>& v_t,
                                  const TransitionMatrix& p_next, const std::vector<double>& v_next,
                                  double p) {
    auto w = p_next.matvec(v_next);
    double nw = 0.0;
    for (double x : w) nw += x * x;
    nw = std::sqrt(nw);
    if (nw == 0.0) return std::numeric_limits<double>::infinity();
    for (double& x : w) x /= nw;

    const Lifted l = lift(vt_bins, v_t, p_next.row_bins, w);
    std::vector<double> neg(l.b.size());
    for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -l.b[i];
    return std::min(quasi_norm(l.a, l.b, p), quasi_norm(l.a, neg, p));
}

/// Singular-value paths after mode pairing across consecutive windows.
/// Slot j holds the j-th path after re-sorting by time-averaged value;
/// slot_to_raw[t] maps slots back to raw SVD indices of window t.
struct TrackedPaths {
    std::vector<double> times;
    double p = 2.0;
    std::vector<int> u_bins;
    std::vector<std::vector<int>> v_bins;
    std::vector<std::vector<double>> sigma;
    std::vector<std::vector<std::vector<double>>> u;
    std::vector<std::vector<std::vector<double>>> v;
    std::vector<std::vector<int>> slot_to_raw;

    std::size_t n_steps() const { return times.size(); }
    std::size_t n_modes() const { return sigma.empty() ? 0 : sigma.front().size(); }
};

namespace detail {

// Greedy bijection between the modes of two consecutive windows: repeatedly
// take the globally smallest remaining distance, ties resolved toward the
// lexicographically smallest (j', j'') pair.
inline std::vector<int> greedy_pairing(const std::vector<std::vector<double>>& dist) {
    const std::size_t n = dist.size();
    std::vector<int> match(n, -1);
    std::vector<bool> row_done(n, false), col_done(n, false);
    for (std::size_t round = 0; round < n; ++round) {
        int bi = -1, bj = -1;
        double best = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (row_done[i]) continue;
            for (std::size_t j = 0; j < n; ++j) {
                if (col_done[j]) continue;
                if (bi < 0 || dist[i][j] < best) {
                    best = dist[i][j];
                    bi = static_cast<int>(i);
                    bj = static_cast<int>(j);
                }
            }
        }
        match[bi] = bj;
        row_done[bi] = true;
        col_done[bj] = true;
    }
    return match;
}

}  // namespace detail

/// Pairs modes across every consecutive window pair and orders the resulting
/// paths by descending time-averaged singular value.
inline TrackedPaths track_modes(const std::vector<ModeWindow>& windows, double p) {
    if (windows.empty()) throw ConfigError("tracking requires at least one window");
    const std::size_t n = windows.front().modes.count();
    if (n == 0) throw ConfigError("tracking requires at least one singular mode per window");
    for (const auto& w : windows) {
        if (w.modes.count() != n) throw ConfigError("windows disagree on mode count");
        if (w.composed.row_bins != windows.front().composed.row_bins)
            throw ConfigError("windows disagree on patch support");
    }
    const std::size_t steps = windows.size();
    if (steps > 1) {
        const double gap = windows[1].t_start - windows[0].t_start;
        for (std::size_t t = 1; t < steps; ++t)
            if (std::fabs(windows[t].t_start - windows[t - 1].t_start - gap) > 1e-9)
                throw ConfigError("window start times are not consecutive");
    }

    // Chain per-step pairings into slot -> raw maps, slots seeded from the
    // first window's raw order.
    std::vector<std::vector<int>> raw(steps, std::vector<int>(n));
    std::iota(raw[0].begin(), raw[0].end(), 0);
    for (std::size_t t = 0; t + 1 < steps; ++t) {
        const auto& cur = windows[t];
        const auto& nxt = windows[t + 1];
        const TransitionMatrix& pn = nxt.last_step();

        std::vector<std::vector<double>> dist(n, std::vector<double>(n));
        for (std::size_t j2 = 0; j2 < n; ++j2) {
            for (std::size_t j1 = 0; j1 < n; ++j1)
                dist[j1][j2] = pushforward_compare(cur.composed.col_bins, cur.modes.V[j1], pn,
                                                   nxt.modes.V[j2], p);
        }
        const auto match = detail::greedy_pairing(dist);
        for (std::size_t slot = 0; slot < n; ++slot) raw[t + 1][slot] = match[raw[t][slot]];
    }

    std::vector<double> mean(n, 0.0);
    for (std::size_t slot = 0; slot < n; ++slot) {
        for (std::size_t t = 0; t < steps; ++t) mean[slot] += windows[t].modes.sigma[raw[t][slot]];
        mean[slot] /= static_cast<double>(steps);
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return mean[a] > mean[b]; });

    TrackedPaths out;
    out.p = p;
    out.u_bins = windows.front().composed.row_bins;
    out.times.reserve(steps);
    out.v_bins.reserve(steps);
    out.sigma.assign(steps, std::vector<double>(n));
    out.u.resize(steps);
    out.v.resize(steps);
    out.slot_to_raw.assign(steps, std::vector<int>(n));
    for (std::size_t t = 0; t < steps; ++t) {
        out.times.push_back(windows[t].t_start);
        out.v_bins.push_back(windows[t].composed.col_bins);
        out.u[t].resize(n);
        out.v[t].resize(n);
        for (std::size_t s = 0; s < n; ++s) {
            const int r = raw[t][order[s]];
            out.slot_to_raw[t][s] = r;
            out.sigma[t][s] = windows[t].modes.sigma[r];
            out.u[t][s] = windows[t].modes.U[r];
            out.v[t][s] = windows[t].modes.V[r];
        }
    }
    return out;
}

}  // namespace patchtrack
