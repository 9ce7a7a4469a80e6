#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "patchtrack/fields.hpp"

using namespace patchtrack;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) : path(fs::path("tmp_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

GriddedField affine_field() {
    // u = 2x + 3y - 1, v = x - y + t: exactly representable by bilinear
    // interpolation in space and linear interpolation in time.
    GriddedField f;
    f.domain = {0.0, 2.0, -1.0, 1.0, false, false};
    f.nx = 5;
    f.ny = 4;
    f.times = {0.0, 1.0, 3.0};
    for (double t : f.times) {
        std::vector<double> u, v;
        for (int iy = 0; iy < f.ny; ++iy)
            for (int ix = 0; ix < f.nx; ++ix) {
                const Vec2 n = f.node(ix, iy);
                u.push_back(2.0 * n.x + 3.0 * n.y - 1.0);
                v.push_back(n.x - n.y + t);
            }
        f.u.push_back(std::move(u));
        f.v.push_back(std::move(v));
    }
    return f;
}

}  // namespace

TEST_CASE("forcing amplitude follows the piecewise schedule") {
    REQUIRE(forcing_a(0.0) == 1.0);
    REQUIRE(forcing_a(5.0) == 1.0);
    REQUIRE(forcing_a(10.0) == 1.0);
    REQUIRE(forcing_a(25.0) == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(forcing_a(40.0) == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(forcing_a(50.0) == 0.0);
    REQUIRE(forcing_a(60.0) == 0.0);
    REQUIRE(forcing_a(75.0) == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(forcing_a(90.0) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(forcing_a(95.0) == 1.0);
}

TEST_CASE("forcing amplitude is 100-periodic and continuous") {
    for (double t : {3.0, 17.5, 42.0, 88.0}) {
        REQUIRE(forcing_a(t + 100.0) == Catch::Approx(forcing_a(t)).margin(1e-12));
        REQUIRE(forcing_a(t - 100.0) == Catch::Approx(forcing_a(t)).margin(1e-12));
    }
    for (double knot : {10.0, 40.0, 60.0, 90.0, 100.0}) {
        const double lo = forcing_a(knot - 1e-8);
        const double hi = forcing_a(knot + 1e-8);
        REQUIRE(std::fabs(hi - lo) < 1e-6);
    }
    for (double t = 0.0; t < 100.0; t += 0.25) {
        REQUIRE(forcing_a(t) >= 0.0);
        REQUIRE(forcing_a(t) <= 1.0);
    }
    // Monotone decay on the ramp-down segment.
    for (double t = 10.0; t < 40.0; t += 1.0) {
        REQUIRE(forcing_a(t + 1.0) <= forcing_a(t) + 1e-12);
    }
}

TEST_CASE("double-well velocity at reference points") {
    const Vec2 v0 = dwp_velocity({0.0, 0.0}, 0.0);
    REQUIRE(v0.x == 0.0);
    REQUIRE(v0.y == 0.0);

    const Vec2 v1 = dwp_velocity({1.0, 1.0}, 0.0);
    REQUIRE(v1.x == Catch::Approx(1.0));
    REQUIRE(v1.y == Catch::Approx(0.75));

    // The well bottoms x = +-2a are equilibria of the y dynamic when a = 1.
    REQUIRE(dwp_velocity({2.0, 0.0}, 0.0).y == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(dwp_velocity({-2.0, 0.0}, 0.0).y == Catch::Approx(0.0).margin(1e-12));

    // With the forcing off, ydot = -x^3/4.
    const Vec2 v2 = dwp_velocity({2.0, 0.0}, 50.0);
    REQUIRE(v2.y == Catch::Approx(-2.0).margin(1e-12));
}

TEST_CASE("node lattice covers both edges on non-periodic axes") {
    GriddedField f;
    f.domain = {0.0, 2.0, 0.0, 1.0, false, false};
    f.nx = 5;
    f.ny = 3;
    REQUIRE(f.node(0, 0).x == 0.0);
    REQUIRE(f.node(4, 0).x == 2.0);
    REQUIRE(f.node(0, 2).y == 1.0);
    REQUIRE(f.node_dx() == Catch::Approx(0.5));

    f.domain.periodic_x = true;
    REQUIRE(f.node_dx() == Catch::Approx(0.4));
    REQUIRE(f.node(4, 0).x == Catch::Approx(1.6));
}

TEST_CASE("sampling reproduces affine fields exactly") {
    const GriddedField f = affine_field();
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> ux(0.0, 2.0), uy(-1.0, 1.0), ut(0.0, 3.0);
    for (int k = 0; k < 50; ++k) {
        const Vec2 p{ux(rng), uy(rng)};
        const double t = ut(rng);
        const Vec2 s = sample_gridded(f, p, t);
        REQUIRE(s.x == Catch::Approx(2.0 * p.x + 3.0 * p.y - 1.0).margin(1e-12));
        REQUIRE(s.y == Catch::Approx(p.x - p.y + t).margin(1e-12));
    }
}

TEST_CASE("sampling at nodes and sample times returns stored values") {
    const GriddedField f = affine_field();
    for (std::size_t s = 0; s < f.times.size(); ++s)
        for (int iy = 0; iy < f.ny; ++iy)
            for (int ix = 0; ix < f.nx; ++ix) {
                const Vec2 val = sample_gridded(f, f.node(ix, iy), f.times[s]);
                REQUIRE(val.x ==
                        Catch::Approx(f.u[s][static_cast<std::size_t>(iy) * f.nx + ix]).margin(1e-12));
                REQUIRE(val.y ==
                        Catch::Approx(f.v[s][static_cast<std::size_t>(iy) * f.nx + ix]).margin(1e-12));
            }
}

TEST_CASE("spatial queries beyond a non-periodic edge clamp") {
    const GriddedField f = affine_field();
    const Vec2 inside = sample_gridded(f, {2.0, 0.5}, 1.0);
    const Vec2 outside = sample_gridded(f, {2.7, 0.5}, 1.0);
    REQUIRE(outside.x == Catch::Approx(inside.x));
    REQUIRE(outside.y == Catch::Approx(inside.y));
}

TEST_CASE("periodic sampling wraps") {
    GriddedField f;
    f.domain = {0.0, 1.0, 0.0, 1.0, true, false};
    f.nx = 8;
    f.ny = 3;
    f.times = {0.0};
    std::vector<double> u, v;
    for (int iy = 0; iy < f.ny; ++iy)
        for (int ix = 0; ix < f.nx; ++ix) {
            u.push_back(std::sin(2.0 * std::numbers::pi * f.node(ix, iy).x));
            v.push_back(0.0);
        }
    f.u.push_back(u);
    f.v.push_back(v);
    for (double x : {0.13, 0.62, 0.97}) {
        const double a = sample_gridded(f, {x, 0.5}, 0.0).x;
        const double b = sample_gridded(f, {x + 1.0, 0.5}, 0.0).x;
        const double c = sample_gridded(f, {x - 1.0, 0.5}, 0.0).x;
        REQUIRE(b == Catch::Approx(a).margin(1e-12));
        REQUIRE(c == Catch::Approx(a).margin(1e-12));
    }
}

TEST_CASE("sampling outside the time range is a data error") {
    const GriddedField f = affine_field();
    REQUIRE_THROWS_AS(sample_gridded(f, {1.0, 0.0}, -0.5), DataError);
    REQUIRE_THROWS_AS(sample_gridded(f, {1.0, 0.0}, 3.5), DataError);
    REQUIRE_NOTHROW(sample_gridded(f, {1.0, 0.0}, 3.0));
}

TEST_CASE("dataset directory round-trips bit-exactly") {
    TempDir tmp("fields_roundtrip");
    GriddedField f;
    f.domain = {-1.0, 1.0, 0.0, 2.0, true, false};
    f.nx = 4;
    f.ny = 3;
    f.times = {0.0, 0.5};
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> val(-2.0, 2.0);
    for (std::size_t s = 0; s < f.times.size(); ++s) {
        std::vector<double> u(12), v(12);
        for (auto& x : u) x = val(rng);
        for (auto& x : v) x = val(rng);
        f.u.push_back(u);
        f.v.push_back(v);
    }
    save_gridded_field(f, tmp.path);
    const GriddedField g = load_gridded_field(tmp.path);
    REQUIRE(g.nx == f.nx);
    REQUIRE(g.ny == f.ny);
    REQUIRE(g.times == f.times);
    REQUIRE(g.domain.periodic_x == f.domain.periodic_x);
    REQUIRE(g.u == f.u);
    REQUIRE(g.v == f.v);
}

TEST_CASE("loader rejects broken datasets") {
    SECTION("missing manifest") {
        TempDir tmp("fields_missing");
        REQUIRE_THROWS_AS(load_gridded_field(tmp.path), DataError);
    }
    SECTION("malformed manifest") {
        TempDir tmp("fields_malformed");
        std::ofstream(tmp.path / "manifest.json") << "{ not json";
        REQUIRE_THROWS_AS(load_gridded_field(tmp.path), DataError);
    }
    SECTION("times not increasing") {
        TempDir tmp("fields_times");
        GriddedField f;
        f.domain = {0.0, 1.0, 0.0, 1.0, false, false};
        f.nx = 2;
        f.ny = 2;
        f.times = {0.0, 1.0};
        f.u.assign(2, std::vector<double>(4, 0.0));
        f.v.assign(2, std::vector<double>(4, 0.0));
        save_gridded_field(f, tmp.path);
        nlohmann::json j;
        std::ifstream(tmp.path / "manifest.json") >> j;
        j["times"] = {1.0, 0.0};
        std::ofstream(tmp.path / "manifest.json") << j.dump();
        REQUIRE_THROWS_AS(load_gridded_field(tmp.path), DataError);
    }
    SECTION("truncated slice") {
        TempDir tmp("fields_trunc");
        GriddedField f;
        f.domain = {0.0, 1.0, 0.0, 1.0, false, false};
        f.nx = 2;
        f.ny = 2;
        f.times = {0.0};
        f.u.assign(1, std::vector<double>(4, 0.0));
        f.v.assign(1, std::vector<double>(4, 0.0));
        save_gridded_field(f, tmp.path);
        std::ofstream(tmp.path / "slice_0.bin", std::ios::binary) << "short";
        REQUIRE_THROWS_AS(load_gridded_field(tmp.path), DataError);
    }
    SECTION("non-finite slice value") {
        TempDir tmp("fields_nan");
        GriddedField f;
        f.domain = {0.0, 1.0, 0.0, 1.0, false, false};
        f.nx = 2;
        f.ny = 2;
        f.times = {0.0};
        f.u.assign(1, std::vector<double>(4, 0.0));
        f.u[0][1] = std::numeric_limits<double>::quiet_NaN();
        f.v.assign(1, std::vector<double>(4, 0.0));
        save_gridded_field(f, tmp.path);
        REQUIRE_THROWS_AS(load_gridded_field(tmp.path), DataError);
    }
}
