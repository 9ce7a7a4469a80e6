#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "patchtrack/core.hpp"
#include "patchtrack/geometry.hpp"

namespace patchtrack {

/// Writes a supported vector as an 8-bit binary graymap over the full grid.
/// Values map affinely from [min, max] to [0, 255] after embedding zeros off
/// support; image rows run top to bottom in decreasing y.
inline void render_vector(const Grid& grid, const std::vector<int>& bins,
                          const std::vector<double>& vals, const std::filesystem::path& out) {
    if (bins.size() != vals.size())
        throw ConfigError("render: bin list and value list lengths differ");
    std::vector<double> dense(static_cast<std::size_t>(grid.nx) * grid.ny, 0.0);
    for (std::size_t k = 0; k < bins.size(); ++k) {
        if (bins[k] < 0 || bins[k] >= grid.nx * grid.ny)
            throw ConfigError("render: bin id outside the grid");
        dense[static_cast<std::size_t>(bins[k])] = vals[k];
    }
    const auto [mn_it, mx_it] = std::minmax_element(dense.begin(), dense.end());
    const double mn = *mn_it;
    const double range = *mx_it - mn;

    std::vector<std::uint8_t> pixels;
    pixels.reserve(dense.size());
    for (int iy = grid.ny - 1; iy >= 0; --iy) {
        for (int ix = 0; ix < grid.nx; ++ix) {
            const double v = dense[static_cast<std::size_t>(iy) * grid.nx + ix];
            const double g = range > 0.0 ? 255.0 * (v - mn) / range : 0.0;
            pixels.push_back(static_cast<std::uint8_t>(std::clamp(std::lround(g), 0L, 255L)));
        }
    }

    std::ofstream f(out, std::ios::binary);
    if (!f) throw DataError("cannot open image file for writing: " + out.string());
    f << "P5\n" << grid.nx << " " << grid.ny << "\n255\n";
    f.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
    if (!f) throw DataError("failed while writing image file: " + out.string());
}

}  // namespace patchtrack
