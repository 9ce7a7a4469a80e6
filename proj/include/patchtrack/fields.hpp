#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "patchtrack/core.hpp"
#include "patchtrack/geometry.hpp"

namespace patchtrack {

/// Periodic forcing amplitude of the double-well model. Continuous, period 100,
/// range [0,1]: held at 1, ramped down by cos^2, held at 0, ramped back up.
inline double forcing_a(double t) {
    double tm = std::fmod(t, 100.0);
    if (tm < 0.0) tm += 100.0;
    constexpr double pi = std::numbers::pi;
    if (tm <= 10.0) return 1.0;
    if (tm <= 40.0) {
        const double c = std::cos((tm - 10.0) * pi / 60.0);
        return c * c;
    }
    if (tm <= 60.0) return 0.0;
    if (tm <= 90.0) {
        const double c = std::cos((tm - 30.0) * pi / 60.0);
        return c * c;
    }
    return 1.0;
}

/// xdot = y,  ydot = x (x/2 + a(t)) (a(t) - x/2).
inline Vec2 dwp_velocity(const Vec2& p, double t) {
    const double a = forcing_a(t);
    return {p.y, p.x * (0.5 * p.x + a) * (a - 0.5 * p.x)};
}

/// Periodically driven double-well velocity field; parameter-free.
struct DoubleWellField {
    Vec2 operator()(const Vec2& p, double t) const { return dwp_velocity(p, t); }
};

/// Node-sampled velocity snapshots on a uniform lattice. Non-periodic axes
/// carry nodes on both domain edges; periodic axes omit the right/top edge.
struct GriddedField {
    Domain domain;
    int nx = 0;
    int ny = 0;
    std::vector<double> times;
    std::vector<std::vector<double>> u;  // per time slice, nx*ny, row-major x fastest
    std::vector<std::vector<double>> v;

    double node_dx() const { return domain.width() / (domain.periodic_x ? nx : nx - 1); }
    double node_dy() const { return domain.height() / (domain.periodic_y ? ny : ny - 1); }

    Vec2 node(int ix, int iy) const {
        return {domain.x_min + ix * node_dx(), domain.y_min + iy * node_dy()};
    }
};

namespace detail {

struct AxisWeights {
    int i0, i1;
    double f;  // interpolation weight toward i1
};

inline AxisWeights axis_weights(double coord, double lo, double step, int n, bool periodic) {
    double s = (coord - lo) / step;
    if (periodic) {
        s = std::fmod(s, static_cast<double>(n));
        if (s < 0.0) s += n;
        int i0 = static_cast<int>(std::floor(s));
        if (i0 >= n) i0 = n - 1;  // s == n after rounding
        return {i0, (i0 + 1) % n, s - i0};
    }
    if (s <= 0.0) return {0, std::min(1, n - 1), 0.0};
    if (s >= n - 1) return {std::max(n - 2, 0), n - 1, 1.0};
    const int i0 = static_cast<int>(std::floor(s));
    return {i0, i0 + 1, s - i0};
}

inline double bilinear(const std::vector<double>& slice, int nx, const AxisWeights& wx,
                       const AxisWeights& wy) {
    const double v00 = slice[wy.i0 * nx + wx.i0];
    const double v10 = slice[wy.i0 * nx + wx.i1];
    const double v01 = slice[wy.i1 * nx + wx.i0];
    const double v11 = slice[wy.i1 * nx + wx.i1];
    const double a = v00 + wx.f * (v10 - v00);
    const double b = v01 + wx.f * (v11 - v01);
    return a + wy.f * (b - a);
}

}  // namespace detail

/// Bilinear in space, linear in time. Spatial queries beyond a non-periodic
/// edge clamp to the edge nodes; t must lie within the sampled range.
inline Vec2 sample_gridded(const GriddedField& f, const Vec2& p, double t) {
    const double t0 = f.times.front();
    const double t1 = f.times.back();
    const double slack = 1e-9 * std::max({1.0, std::fabs(t0), std::fabs(t1)});
    if (t < t0 - slack || t > t1 + slack)
        throw DataError("sample time outside dataset range");
    t = std::clamp(t, t0, t1);

    const auto wx = detail::axis_weights(p.x, f.domain.x_min, f.node_dx(), f.nx, f.domain.periodic_x);
    const auto wy = detail::axis_weights(p.y, f.domain.y_min, f.node_dy(), f.ny, f.domain.periodic_y);

    std::size_t k = 0;
    double ft = 0.0;
    if (f.times.size() > 1) {
        auto it = std::upper_bound(f.times.begin(), f.times.end(), t);
        k = static_cast<std::size_t>(std::distance(f.times.begin(), it));
        k = std::clamp<std::size_t>(k, 1, f.times.size() - 1) - 1;
        ft = (t - f.times[k]) / (f.times[k + 1] - f.times[k]);
    }

    const double u0 = detail::bilinear(f.u[k], f.nx, wx, wy);
    const double v0 = detail::bilinear(f.v[k], f.nx, wx, wy);
    if (f.times.size() == 1 || ft == 0.0) return {u0, v0};
    const double u1 = detail::bilinear(f.u[k + 1], f.nx, wx, wy);
    const double v1 = detail::bilinear(f.v[k + 1], f.nx, wx, wy);
    return {u0 + ft * (u1 - u0), v0 + ft * (v1 - v0)};
}

/// Adapts a GriddedField to the velocity-field call signature.
struct GriddedSampler {
    const GriddedField* field;
    Vec2 operator()(const Vec2& p, double t) const { return sample_gridded(*field, p, t); }
};

namespace detail {

inline void decode_f64_le(const char* bytes, std::size_t count, std::vector<double>& out) {
    out.resize(count);
    std::memcpy(out.data(), bytes, count * sizeof(double));
    if constexpr (std::endian::native == std::endian::big) {
        for (auto& x : out) {
            auto b = std::bit_cast<std::uint64_t>(x);
            b = __builtin_bswap64(b);
            x = std::bit_cast<double>(b);
        }
    }
}

inline void encode_f64_le(const std::vector<double>& in, std::ofstream& os) {
    if constexpr (std::endian::native == std::endian::big) {
        for (double x : in) {
            auto b = __builtin_bswap64(std::bit_cast<std::uint64_t>(x));
            os.write(reinterpret_cast<const char*>(&b), sizeof(b));
        }
    } else {
        os.write(reinterpret_cast<const char*>(in.data()),
                 static_cast<std::streamsize>(in.size() * sizeof(double)));
    }
}

}  // namespace detail

/// Loads a dataset directory: manifest.json plus one raw little-endian f64
/// slice file per sample time (u block then v block, row-major, x fastest).
inline GriddedField load_gridded_field(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    const fs::path manifest_path = dir / "manifest.json";
    std::ifstream mf(manifest_path);
    if (!mf) throw DataError("missing manifest: " + manifest_path.string());

    nlohmann::json j;
    try {
        mf >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed manifest: " + std::string(e.what()));
    }

    GriddedField f;
    try {
        f.nx = j.at("nx").get<int>();
        f.ny = j.at("ny").get<int>();
        f.domain.x_min = j.at("x_min").get<double>();
        f.domain.x_max = j.at("x_max").get<double>();
        f.domain.y_min = j.at("y_min").get<double>();
        f.domain.y_max = j.at("y_max").get<double>();
        f.domain.periodic_x = j.at("periodic_x").get<bool>();
        f.domain.periodic_y = j.at("periodic_y").get<bool>();
        f.times = j.at("times").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest missing field: " + std::string(e.what()));
    }
    const auto slice_files = j.value("slice_files", std::vector<std::string>{});

    f.domain.validate();
    if (f.nx < 2 || f.ny < 2) throw DataError("manifest: nx and ny must be at least 2");
    if (f.times.empty()) throw DataError("manifest: empty time list");
    if (slice_files.size() != f.times.size())
        throw DataError("manifest: slice_files and times lengths differ");
    for (std::size_t i = 1; i < f.times.size(); ++i)
        if (!(f.times[i - 1] < f.times[i])) throw DataError("manifest: times not strictly increasing");

    const std::size_t per_component = static_cast<std::size_t>(f.nx) * f.ny;
    const std::size_t slice_bytes = 2 * per_component * sizeof(double);
    std::vector<char> buf(slice_bytes);
    for (std::size_t s = 0; s < slice_files.size(); ++s) {
        const fs::path sp = dir / slice_files[s];
        std::ifstream in(sp, std::ios::binary);
        if (!in) throw DataError("cannot open slice file: " + sp.string());
        in.read(buf.data(), static_cast<std::streamsize>(slice_bytes));
        if (static_cast<std::size_t>(in.gcount()) != slice_bytes || in.peek() != EOF)
            throw DataError("slice size mismatch: " + sp.string());
        std::vector<double> us, vs;
        detail::decode_f64_le(buf.data(), per_component, us);
        detail::decode_f64_le(buf.data() + per_component * sizeof(double), per_component, vs);
        for (double x : us)
            if (!std::isfinite(x)) throw DataError("non-finite value in slice: " + sp.string());
        for (double x : vs)
            if (!std::isfinite(x)) throw DataError("non-finite value in slice: " + sp.string());
        f.u.push_back(std::move(us));
        f.v.push_back(std::move(vs));
    }
    return f;
}

/// Writes a dataset directory in the format load_gridded_field reads.
inline void save_gridded_field(const GriddedField& f, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    nlohmann::json j;
    j["nx"] = f.nx;
    j["ny"] = f.ny;
    j["x_min"] = f.domain.x_min;
    j["x_max"] = f.domain.x_max;
    j["y_min"] = f.domain.y_min;
    j["y_max"] = f.domain.y_max;
    j["periodic_x"] = f.domain.periodic_x;
    j["periodic_y"] = f.domain.periodic_y;
    j["times"] = f.times;
    std::vector<std::string> names;
    for (std::size_t s = 0; s < f.times.size(); ++s)
        names.push_back("slice_" + std::to_string(s) + ".bin");
    j["slice_files"] = names;

    std::ofstream mf(dir / "manifest.json");
    if (!mf) throw DataError("cannot write manifest in " + dir.string());
    mf << j.dump(2) << "\n";

    for (std::size_t s = 0; s < f.times.size(); ++s) {
        std::ofstream os(dir / names[s], std::ios::binary);
        if (!os) throw DataError("cannot write slice file in " + dir.string());
        detail::encode_f64_le(f.u[s], os);
        detail::encode_f64_le(f.v[s], os);
    }
}

}  // namespace patchtrack
