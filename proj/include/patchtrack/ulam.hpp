#pragma once

#include <algorithm>
#include <map>
#include <utility>
#include <vector>

#include "patchtrack/core.hpp"
#include "patchtrack/flow.hpp"
#include "patchtrack/geometry.hpp"
#include "patchtrack/sparse.hpp"
#include "patchtrack/svd.hpp"

namespace patchtrack {

/// Knobs shared by every window of a run.
struct WindowParams {
    int n_steps = 10;        // matrices composed per window
    int n_modes = 4;         // singular triples retained
    int seeds_per_bin = 16;  // perfect square
    FlowSpec flow{};

    void validate() const {
        if (n_steps < 1) throw ConfigError("window length must be at least 1");
        if (n_modes < 1) throw ConfigError("number of singular modes must be positive");
        flow.validate();
        const int k = static_cast<int>(std::lround(std::sqrt(double(seeds_per_bin))));
        if (seeds_per_bin < 1 || k * k != seeds_per_bin)
            throw ConfigError("seeds per bin must be a perfect square");
    }
};

/// One rolling window anchored at t_start: the per-step transition matrices,
/// their left-to-right product, and its leading singular triples.
struct ModeWindow {
    double t_start = 0.0;
    std::vector<TransitionMatrix> steps;
    TransitionMatrix composed;
    SvdModes modes;

    const TransitionMatrix& last_step() const { return steps.back(); }
};

/// Single Ulam step over one flow interval. Rows cover `support`; columns
/// cover exactly the bins hit by at least one seed. Seeds that leave a
/// non-periodic domain are dropped, so rows may sum to less than one.
template <typename Field>
TransitionMatrix ulam_step(const Grid& grid, const std::vector<int>& support, double t0,
                           const WindowParams& par, const Field& field) {
    const int q = par.seeds_per_bin;
    std::vector<std::map<int, int>> row_counts(support.size());
    std::vector<int> dest;

    for (std::size_t r = 0; r < support.size(); ++r) {
        for (const Vec2& seed : seed_points(grid, support[r], q)) {
            const Vec2 end = rk4_flow(field, seed, t0, par.flow, &grid.domain);
            const auto j = bin_of(grid, end);
            if (!j) continue;
            auto [it, fresh] = row_counts[r].try_emplace(*j, 0);
            if (fresh) dest.push_back(*j);
            ++it->second;
        }
    }
    std::sort(dest.begin(), dest.end());
    dest.erase(std::unique(dest.begin(), dest.end()), dest.end());

    TransitionMatrix out;
    out.row_bins = support;
    out.col_bins = dest;
    out.row_ptr.assign(support.size() + 1, 0);
    const double inv_q = 1.0 / q;
    for (std::size_t r = 0; r < support.size(); ++r) {
        for (const auto& [bin, count] : row_counts[r]) {
            const auto pos = std::lower_bound(dest.begin(), dest.end(), bin) - dest.begin();
            out.col_idx.push_back(static_cast<int>(pos));
            out.values.push_back(count * inv_q);
        }
        out.row_ptr[r + 1] = out.col_idx.size();
    }
    return out;
}

/// Builds the window anchored at t_start: n chained Ulam steps where each
/// step's column support seeds the next step's rows, then the composed
/// product and its truncated SVD.
template <typename Field>
ModeWindow build_window(const Grid& grid, const std::vector<int>& patch_bins, double t_start,
                        const WindowParams& par, const Field& field) {
    par.validate();
    if (patch_bins.empty()) throw ConfigError("patch covers no grid bins");

    ModeWindow w;
    w.t_start = t_start;
    w.steps.reserve(par.n_steps);
    std::vector<int> support = patch_bins;
    for (int s = 0; s < par.n_steps; ++s) {
        w.steps.push_back(ulam_step(grid, support, t_start + s * par.flow.tau, par, field));
        support = w.steps.back().col_bins;
        if (support.empty())
            throw NumericError("all seeded mass escaped the domain during window construction");
    }
    w.composed = compose(w.steps);
    w.modes = truncated_svd(w.composed, par.n_modes);
    return w;
}

}  // namespace patchtrack
