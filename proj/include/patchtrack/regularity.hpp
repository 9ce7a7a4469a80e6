#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "patchtrack/core.hpp"
#include "patchtrack/geometry.hpp"
#include "patchtrack/lifespans.hpp"
#include "patchtrack/tracking.hpp"

namespace patchtrack {

/// Values interpolated from bin centres to bin corners. Periodic axes share
/// their seam corner, so they carry nx (or ny) corners instead of nx+1.
struct CornerField {
    int cx = 0;
    int cy = 0;
    std::vector<double> values;  // row-major, x fastest

    double at(int i, int j) const { return values[static_cast<std::size_t>(j) * cx + i]; }
};

/// Embeds a supported vector into the full grid (zero off support) and
/// averages the adjacent bin values onto each corner.
inline CornerField interpolate_to_corners(const Grid& grid, const std::vector<int>& bins,
                                          const std::vector<double>& vals) {
    if (bins.size() != vals.size())
        throw ConfigError("corner interpolation: bin list and value list lengths differ");
    std::vector<double> dense(static_cast<std::size_t>(grid.nx) * grid.ny, 0.0);
    for (std::size_t k = 0; k < bins.size(); ++k) {
        const int b = bins[k];
        if (b < 0 || b >= grid.nx * grid.ny)
            throw ConfigError("corner interpolation: bin id outside the grid");
        dense[static_cast<std::size_t>(b)] = vals[k];
    }

    CornerField out;
    out.cx = grid.domain.periodic_x ? grid.nx : grid.nx + 1;
    out.cy = grid.domain.periodic_y ? grid.ny : grid.ny + 1;
    out.values.assign(static_cast<std::size_t>(out.cx) * out.cy, 0.0);
    for (int j = 0; j < out.cy; ++j) {
        for (int i = 0; i < out.cx; ++i) {
            double sum = 0.0;
            int count = 0;
            for (int dy = -1; dy <= 0; ++dy) {
                for (int dx = -1; dx <= 0; ++dx) {
                    int bx = i + dx;
                    int by = j + dy;
                    if (grid.domain.periodic_x)
                        bx = (bx % grid.nx + grid.nx) % grid.nx;
                    else if (bx < 0 || bx >= grid.nx)
                        continue;
                    if (grid.domain.periodic_y)
                        by = (by % grid.ny + grid.ny) % grid.ny;
                    else if (by < 0 || by >= grid.ny)
                        continue;
                    sum += dense[static_cast<std::size_t>(by) * grid.nx + bx];
                    ++count;
                }
            }
            out.values[static_cast<std::size_t>(j) * out.cx + i] = count ? sum / count : 0.0;
        }
    }
    return out;
}

/// Three ascending thresholds splitting the value range into four classes
/// with maximal between-class variance (exhaustive multilevel Otsu over a
/// 64-bin histogram). Returns nothing for a constant field.
inline std::optional<std::array<double, 3>> multilevel_contours(const CornerField& field) {
    constexpr int kBins = 64;
    if (field.values.empty()) return std::nullopt;
    const auto [mn_it, mx_it] = std::minmax_element(field.values.begin(), field.values.end());
    const double mn = *mn_it, mx = *mx_it;
    if (!(mx > mn)) return std::nullopt;

    const double delta = (mx - mn) / kBins;
    std::array<double, kBins> weight{}, mass{};
    for (double x : field.values) {
        int k = static_cast<int>((x - mn) / delta);
        k = std::clamp(k, 0, kBins - 1);
        weight[k] += 1.0;
        mass[k] += mn + (k + 0.5) * delta;
    }
    std::array<double, kBins + 1> cw{}, cm{};
    for (int k = 0; k < kBins; ++k) {
        cw[k + 1] = cw[k] + weight[k];
        cm[k + 1] = cm[k] + mass[k];
    }
    // Between-class variance maximisation reduces to maximising
    // sum of (class mass)^2 / (class weight).
    auto score = [&](int lo, int hi) {
        const double w = cw[hi + 1] - cw[lo];
        if (w <= 0.0) return 0.0;
        const double m = cm[hi + 1] - cm[lo];
        return m * m / w;
    };
    double best = -1.0;
    std::array<int, 3> cut{};
    for (int k1 = 0; k1 + 2 < kBins - 1; ++k1) {
        const double s0 = score(0, k1);
        for (int k2 = k1 + 1; k2 + 1 < kBins - 1; ++k2) {
            const double s01 = s0 + score(k1 + 1, k2);
            for (int k3 = k2 + 1; k3 < kBins - 1; ++k3) {
                const double s = s01 + score(k2 + 1, k3) + score(k3 + 1, kBins - 1);
                if (s > best) {
                    best = s;
                    cut = {k1, k2, k3};
                }
            }
        }
    }
    return std::array<double, 3>{mn + (cut[0] + 1) * delta, mn + (cut[1] + 1) * delta,
                                 mn + (cut[2] + 1) * delta};
}

/// Corner mask selected either side of the outer contours, or beyond the
/// middle one when all contours share a sign.
inline std::vector<char> select_cells(const CornerField& field, const std::array<double, 3>& c) {
    auto sgn = [](double x) { return (x > 0.0) - (x < 0.0); };
    std::vector<char> mask(field.values.size(), 0);
    const bool split = sgn(c[0]) != sgn(c[2]);
    for (std::size_t i = 0; i < field.values.size(); ++i) {
        const double v = field.values[i];
        bool keep;
        if (split)
            keep = v < c[0] || v > c[2];
        else if (c[2] > 0.0)
            keep = v > c[1];
        else
            keep = v < c[1];
        mask[i] = keep ? 1 : 0;
    }
    return mask;
}

namespace detail {

struct IsoScan {
    double best = 0.0;
    int components = 0;
};

// Clockwise Moore neighbourhood starting north.
inline constexpr std::array<std::array<int, 2>, 8> kMoore = {
    {{0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1}, {-1, 0}, {-1, 1}}};

// Outer boundary polygon of one component, traced through corner-lattice
// positions. The trace is a deterministic walk over (position, backtrack)
// states; the polygon closes at the first repeated state, which also covers
// patterns where the plain return-to-start criterion never fires.
inline double component_ratio(const std::vector<char>& mask, int cx, int cy, int sx, int sy) {
    auto inside = [&](int x, int y) {
        return x >= 0 && x < cx && y >= 0 && y < cy && mask[static_cast<std::size_t>(y) * cx + x];
    };
    std::vector<int> first_seen(mask.size() * 8, -1);
    std::vector<std::array<int, 2>> path{{sx, sy}};
    int px = sx, py = sy;
    int bx = sx - 1, by = sy;  // the scan met sx first in its row, so west is clear
    std::size_t cycle_start = 0;
    while (true) {
        int dir = 0;
        for (int d = 0; d < 8; ++d)
            if (px + kMoore[d][0] == bx && py + kMoore[d][1] == by) dir = d;
        const std::size_t state = (static_cast<std::size_t>(py) * cx + px) * 8 + dir;
        if (first_seen[state] >= 0) {
            cycle_start = static_cast<std::size_t>(first_seen[state]);
            break;
        }
        first_seen[state] = static_cast<int>(path.size()) - 1;

        bool found = false;
        for (int s = 1; s <= 8; ++s) {
            const int d = (dir + s) % 8;
            const int qx = px + kMoore[d][0];
            const int qy = py + kMoore[d][1];
            if (inside(qx, qy)) {
                const int pd = (dir + s - 1) % 8;
                bx = px + kMoore[pd][0];
                by = py + kMoore[pd][1];
                px = qx;
                py = qy;
                found = true;
                break;
            }
        }
        if (!found) return 1.0;  // isolated corner
        path.push_back({px, py});
    }

    double length = 0.0, shoelace = 0.0;
    for (std::size_t i = cycle_start; i + 1 < path.size(); ++i) {
        const auto& a = path[i];
        const auto& b = path[i + 1];
        length += (a[0] != b[0] && a[1] != b[1]) ? std::numbers::sqrt2 : 1.0;
        shoelace += static_cast<double>(a[0]) * b[1] - static_cast<double>(b[0]) * a[1];
    }
    const double area = std::fabs(shoelace) / 2.0;
    if (area == 0.0 || length == 0.0) return 0.0;
    return std::clamp(4.0 * std::numbers::pi * area / (length * length), 0.0, 1.0);
}

inline IsoScan isoperimetric_scan(const std::vector<char>& mask, int cx, int cy) {
    IsoScan out;
    std::vector<char> seen(mask.size(), 0);
    std::vector<std::array<int, 2>> stack;
    for (int sy = 0; sy < cy; ++sy) {
        for (int sx = 0; sx < cx; ++sx) {
            const std::size_t s0 = static_cast<std::size_t>(sy) * cx + sx;
            if (!mask[s0] || seen[s0]) continue;
            ++out.components;
            int size = 0;
            stack.assign(1, {sx, sy});
            seen[s0] = 1;
            while (!stack.empty()) {
                const auto [x, y] = stack.back();
                stack.pop_back();
                ++size;
                for (const auto& d : kMoore) {
                    const int qx = x + d[0];
                    const int qy = y + d[1];
                    if (qx < 0 || qx >= cx || qy < 0 || qy >= cy) continue;
                    const std::size_t q = static_cast<std::size_t>(qy) * cx + qx;
                    if (mask[q] && !seen[q]) {
                        seen[q] = 1;
                        stack.push_back({qx, qy});
                    }
                }
            }
            // (sx, sy) is the raster-first pixel of this component.
            const double ratio = size == 1 ? 1.0 : component_ratio(mask, cx, cy, sx, sy);
            out.best = std::max(out.best, ratio);
        }
    }
    return out;
}

}  // namespace detail

/// Largest isoperimetric ratio over the 8-connected components of the mask;
/// single corners count as 1, degenerate (zero-area) boundaries as 0.
inline double isoperimetric_best(const std::vector<char>& mask, int cx, int cy) {
    if (static_cast<std::size_t>(cx) * cy != mask.size())
        throw ConfigError("isoperimetric mask size does not match corner counts");
    return detail::isoperimetric_scan(mask, cx, cy).best;
}

struct RegularityStep {
    int mode = 0;
    double t = 0.0;
    bool exists = false;
    double i_max = 0.0;
    int components = 0;
};

struct RegularityReport {
    double iso_thresh = 0.85;
    std::vector<RegularityStep> steps;
    std::vector<Lifespan> regularized;
};

/// Re-examines every step of the detected lifespans and keeps those whose
/// right singular vector shows a component rounder than iso_thresh.
inline RegularityReport regularize_lifespans(const std::vector<Lifespan>& spans,
                                             const TrackedPaths& tracked, const Grid& grid,
                                             double iso_thresh) {
    if (!(iso_thresh >= 0.0 && iso_thresh <= 1.0))
        throw ConfigError("isoperimetric threshold must lie in [0, 1]");
    RegularityReport report;
    report.iso_thresh = iso_thresh;
    for (const auto& span : spans) {
        std::vector<char> alive(span.age(), 0);
        for (std::size_t k = span.first; k <= span.last; ++k) {
            RegularityStep step;
            step.mode = span.mode;
            step.t = tracked.times[k];
            const CornerField corners = interpolate_to_corners(
                grid, tracked.v_bins[k], tracked.v[k][static_cast<std::size_t>(span.mode)]);
            if (const auto contours = multilevel_contours(corners)) {
                const auto mask = select_cells(corners, *contours);
                const auto scan = detail::isoperimetric_scan(mask, corners.cx, corners.cy);
                step.i_max = scan.best;
                step.components = scan.components;
                step.exists = scan.best > iso_thresh;
            }
            alive[k - span.first] = step.exists ? 1 : 0;
            report.steps.push_back(step);
        }
        std::size_t k = 0;
        while (k < alive.size()) {
            if (!alive[k]) {
                ++k;
                continue;
            }
            std::size_t end = k;
            while (end + 1 < alive.size() && alive[end + 1]) ++end;
            Lifespan out;
            out.mode = span.mode;
            out.first = span.first + k;
            out.last = span.first + end;
            out.z_alpha = tracked.times[out.first];
            out.z_omega = tracked.times[out.last];
            out.mismatch.assign(span.mismatch.begin() + k, span.mismatch.begin() + end + 1);
            out.sigma.assign(span.sigma.begin() + k, span.sigma.begin() + end + 1);
            report.regularized.push_back(std::move(out));
            k = end + 1;
        }
    }
    return report;
}

}  // namespace patchtrack
