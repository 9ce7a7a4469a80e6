#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "patchtrack/core.hpp"
#include "patchtrack/sparse.hpp"
#include "patchtrack/tracking.hpp"
#include "patchtrack/ulam.hpp"

namespace patchtrack {

/// Mismatch thresholds. Defaults follow the chord-length construction:
/// conservative admits vectors within 45 degrees, the percentage variant
/// pairs absolute bounds with a relative-change cut.
struct Thresholds {
    enum class Mode { conservative, percentage };

    Mode mode = Mode::conservative;
    double conservative = std::numbers::sqrt2 * std::sin(std::numbers::pi / 8.0);
    double up = 1.0 - std::numbers::sqrt2 * std::sin(std::numbers::pi / 32.0);
    double down = std::numbers::sqrt2 * std::sin(std::numbers::pi / 32.0);
    double percent = 0.95;

    void validate() const {
        if (!(0.0 < down && down < conservative && conservative < up && up < 1.0))
            throw ConfigError("thresholds must satisfy 0 < down < conservative < up < 1");
        if (!(percent > 0.0 && percent <= 1.0))
            throw ConfigError("percent threshold must lie in (0, 1]");
    }
};

/// Normalised equivariance mismatch in [0, 1]: 0 for a perfectly pushed-
/// forward pair, 1 for orthogonal vectors or a vanishing pushforward.
inline double equivariance_mismatch(const std::vector<int>& vt_bins, const std::vector<double>& v_t,
                                    const TransitionMatrix& p_next,
                                    const std::vector<double>& v_next) {
    auto w = p_next.matvec(v_next);
    double nw = 0.0;
    for (double x : w) nw += x * x;
    nw = std::sqrt(nw);
    if (nw == 0.0) return 1.0;
    for (double& x : w) x /= nw;

    const Lifted l = lift(vt_bins, v_t, p_next.row_bins, w);
    double dm = 0.0, dp = 0.0;
    for (std::size_t i = 0; i < l.bins.size(); ++i) {
        const double m = l.a[i] - l.b[i];
        const double p = l.a[i] + l.b[i];
        dm += m * m;
        dp += p * p;
    }
    const double d = std::sqrt(std::min(dm, dp)) / std::numbers::sqrt2;
    return std::clamp(d, 0.0, 1.0);
}

/// Mismatch paths per tracked slot; entry [j][t] compares windows t and t+1,
/// so the time axis is one shorter than the window list.
inline std::vector<std::vector<double>> mismatch_paths(const std::vector<ModeWindow>& windows,
                                                       const TrackedPaths& tracked) {
    if (tracked.n_steps() != windows.size())
        throw ConfigError("tracked paths and window list disagree on length");
    const std::size_t n = tracked.n_modes();
    const std::size_t steps = windows.size();
    std::vector<std::vector<double>> out(n);
    for (std::size_t j = 0; j < n; ++j) {
        out[j].reserve(steps > 0 ? steps - 1 : 0);
        for (std::size_t t = 0; t + 1 < steps; ++t)
            out[j].push_back(equivariance_mismatch(tracked.v_bins[t], tracked.v[t][j],
                                                   windows[t + 1].last_step(),
                                                   tracked.v[t + 1][j]));
    }
    return out;
}

/// Maximal run of consecutive steps on which a tracked mode keeps its
/// identity under the active threshold rule.
struct Lifespan {
    int mode = 0;
    double z_alpha = 0.0;
    double z_omega = 0.0;
    std::size_t first = 0;
    std::size_t last = 0;
    std::vector<double> mismatch;
    std::vector<double> sigma;

    std::size_t age() const { return last - first + 1; }

    double mean_mismatch() const {
        double s = 0.0;
        for (double x : mismatch) s += x;
        return mismatch.empty() ? 0.0 : s / static_cast<double>(mismatch.size());
    }

    double sv_variance() const {
        if (sigma.size() < 2) return 0.0;
        double m = 0.0;
        for (double x : sigma) m += x;
        m /= static_cast<double>(sigma.size());
        double s = 0.0;
        for (double x : sigma) s += (x - m) * (x - m);
        return s / static_cast<double>(sigma.size() - 1);
    }
};

namespace detail {

inline bool step_exists(const std::vector<double>& path, std::size_t t, const Thresholds& th) {
    const double cur = path[t];
    if (th.mode == Thresholds::Mode::conservative) return cur < th.conservative;
    if (cur > th.up) return false;
    if (t + 1 >= path.size()) return true;  // no forward difference at the last step
    if (cur <= th.down) return true;
    const double nxt = path[t + 1];
    const double diff = std::fabs(cur - nxt);
    const double base = std::min(cur, nxt);
    const double rel = diff == 0.0 ? 0.0
                       : base == 0.0 ? std::numeric_limits<double>::infinity()
                                     : diff / base;
    return rel <= th.percent;
}

}  // namespace detail

/// Splits each mode's mismatch path into maximal surviving runs.
inline std::vector<Lifespan> detect_lifespans(const std::vector<std::vector<double>>& varsigma,
                                              const TrackedPaths& tracked, const Thresholds& th) {
    th.validate();
    if (varsigma.size() != tracked.n_modes())
        throw ConfigError("mismatch paths and tracked paths disagree on mode count");
    std::vector<Lifespan> out;
    for (std::size_t j = 0; j < varsigma.size(); ++j) {
        const auto& path = varsigma[j];
        std::size_t t = 0;
        while (t < path.size()) {
            if (!detail::step_exists(path, t, th)) {
                ++t;
                continue;
            }
            std::size_t end = t;
            while (end + 1 < path.size() && detail::step_exists(path, end + 1, th)) ++end;
            Lifespan span;
            span.mode = static_cast<int>(j);
            span.first = t;
            span.last = end;
            span.z_alpha = tracked.times[t];
            span.z_omega = tracked.times[end];
            span.mismatch.assign(path.begin() + t, path.begin() + end + 1);
            for (std::size_t k = t; k <= end; ++k) span.sigma.push_back(tracked.sigma[k][j]);
            out.push_back(std::move(span));
            t = end + 1;
        }
    }
    return out;
}

struct CharacteristicLifespans {
    std::optional<Lifespan> eldest;
    std::optional<Lifespan> min_eq;
    std::optional<Lifespan> max_var_sv;
};

namespace detail {

// Tie order shared by all three selectors: earlier birth, then lower mode.
inline bool tie_before(const Lifespan& a, const Lifespan& b) {
    if (a.z_alpha != b.z_alpha) return a.z_alpha < b.z_alpha;
    return a.mode < b.mode;
}

}  // namespace detail

/// Picks the longest span, the span with the lowest mean mismatch, and the
/// span with the largest singular-value variance (ages >= 2 only).
inline CharacteristicLifespans characteristic_lifespans(const std::vector<Lifespan>& spans) {
    CharacteristicLifespans out;
    for (const auto& s : spans) {
        if (!out.eldest || s.age() > out.eldest->age() ||
            (s.age() == out.eldest->age() && detail::tie_before(s, *out.eldest)))
            out.eldest = s;
        if (!out.min_eq || s.mean_mismatch() < out.min_eq->mean_mismatch() ||
            (s.mean_mismatch() == out.min_eq->mean_mismatch() && detail::tie_before(s, *out.min_eq)))
            out.min_eq = s;
        if (s.age() >= 2) {
            if (!out.max_var_sv || s.sv_variance() > out.max_var_sv->sv_variance() ||
                (s.sv_variance() == out.max_var_sv->sv_variance() &&
                 detail::tie_before(s, *out.max_var_sv)))
                out.max_var_sv = s;
        }
    }
    return out;
}

}  // namespace patchtrack
