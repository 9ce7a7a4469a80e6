#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "patchtrack/core.hpp"

namespace patchtrack {

/// Rectangular configuration space, optionally periodic per axis.
struct Domain {
    double x_min = 0.0;
    double x_max = 1.0;
    double y_min = 0.0;
    double y_max = 1.0;
    bool periodic_x = false;
    bool periodic_y = false;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }

    void validate() const {
        if (!(x_min < x_max) || !(y_min < y_max))
            throw ConfigError("degenerate domain: require x_min < x_max and y_min < y_max");
    }

    /// Wraps periodic coordinates into [min, max); non-periodic axes pass through.
    Vec2 wrap(Vec2 p) const {
        if (periodic_x) {
            p.x = x_min + std::fmod(p.x - x_min, width());
            if (p.x < x_min) p.x += width();
        }
        if (periodic_y) {
            p.y = y_min + std::fmod(p.y - y_min, height());
            if (p.y < y_min) p.y += height();
        }
        return p;
    }
};

/// Uniform partition of a Domain into nx*ny = 2^depth equal-area bins.
/// Bin ids are row-major with x fastest: id = iy*nx + ix.
struct Grid {
    Domain domain;
    int depth = 0;
    int nx = 0;
    int ny = 0;
    double bin_width = 0.0;
    double bin_height = 0.0;

    int num_bins() const { return nx * ny; }

    int bin_id(int ix, int iy) const { return iy * nx + ix; }
    int ix_of(int id) const { return id % nx; }
    int iy_of(int id) const { return id / nx; }

    Vec2 centre(int id) const {
        return {domain.x_min + (ix_of(id) + 0.5) * bin_width,
                domain.y_min + (iy_of(id) + 0.5) * bin_height};
    }

    /// Lower-left corner of a bin.
    Vec2 origin(int id) const {
        return {domain.x_min + ix_of(id) * bin_width, domain.y_min + iy_of(id) * bin_height};
    }
};

/// Circular or elliptical seeded region. A circle has a == b.
struct Patch {
    Vec2 centre;
    double semi_a = 1.0;
    double semi_b = 1.0;

    void validate() const {
        if (!(semi_a > 0.0) || !(semi_b > 0.0))
            throw ConfigError("patch semi-axes must be positive");
    }

    bool contains(const Vec2& p) const {
        const double dx = (p.x - centre.x) / semi_a;
        const double dy = (p.y - centre.y) / semi_b;
        return dx * dx + dy * dy <= 1.0;
    }
};

inline Grid build_grid(const Domain& domain, int depth) {
    domain.validate();
    if (depth < 2) throw ConfigError("grid depth must be at least 2");
    Grid g;
    g.domain = domain;
    g.depth = depth;
    // Odd depths split as 2^ceil(depth/2) x 2^floor(depth/2); bins stay equal-area.
    g.nx = 1 << ((depth + 1) / 2);
    g.ny = 1 << (depth / 2);
    g.bin_width = domain.width() / g.nx;
    g.bin_height = domain.height() / g.ny;
    return g;
}

/// Locates the bin containing a point. Periodic axes wrap first; on
/// non-periodic axes a coordinate outside the domain yields nullopt.
/// Cells are half-open, closed at the upper domain edge.
inline std::optional<int> bin_of(const Grid& g, Vec2 p) {
    p = g.domain.wrap(p);
    if (!g.domain.periodic_x && (p.x < g.domain.x_min || p.x > g.domain.x_max))
        return std::nullopt;
    if (!g.domain.periodic_y && (p.y < g.domain.y_min || p.y > g.domain.y_max))
        return std::nullopt;
    int ix = static_cast<int>(std::floor((p.x - g.domain.x_min) / g.bin_width));
    int iy = static_cast<int>(std::floor((p.y - g.domain.y_min) / g.bin_height));
    ix = std::clamp(ix, 0, g.nx - 1);
    iy = std::clamp(iy, 0, g.ny - 1);
    return g.bin_id(ix, iy);
}

/// Ids of all bins whose centres lie inside the patch, ascending.
inline std::vector<int> bins_in_patch(const Grid& g, const Patch& patch) {
    patch.validate();
    const Domain& d = g.domain;
    if (patch.centre.x < d.x_min || patch.centre.x > d.x_max || patch.centre.y < d.y_min ||
        patch.centre.y > d.y_max)
        throw ConfigError("patch centre lies outside the domain");
    std::vector<int> out;
    for (int id = 0; id < g.num_bins(); ++id)
        if (patch.contains(g.centre(id))) out.push_back(id);
    return out;
}

/// Deterministic sqrt(Q) x sqrt(Q) lattice of test points inside a bin,
/// at per-axis offsets ((k+1/2)/sqrt(Q)) of the bin extent.
inline std::vector<Vec2> seed_points(const Grid& g, int bin_id, int q) {
    if (q <= 0) throw ConfigError("Q must be positive");
    const int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(q))));
    if (r * r != q) throw ConfigError("Q must be a perfect square");
    const Vec2 o = g.origin(bin_id);
    std::vector<Vec2> pts;
    pts.reserve(q);
    for (int ky = 0; ky < r; ++ky)
        for (int kx = 0; kx < r; ++kx)
            pts.push_back({o.x + (kx + 0.5) / r * g.bin_width, o.y + (ky + 0.5) / r * g.bin_height});
    return pts;
}

}  // namespace patchtrack
