#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "patchtrack/lifespans.hpp"

using namespace patchtrack;

namespace {

TransitionMatrix identity_over(const std::vector<int>& bins) {
    TransitionMatrix m;
    m.row_bins = bins;
    m.col_bins = bins;
    m.row_ptr.resize(bins.size() + 1);
    for (std::size_t r = 0; r < bins.size(); ++r) {
        m.row_ptr[r + 1] = r + 1;
        m.col_idx.push_back(static_cast<int>(r));
        m.values.push_back(1.0);
    }
    return m;
}

// Tracked paths whose mismatch values are irrelevant; used to feed
// detect_lifespans a times axis and singular values.
TrackedPaths paths_with(const std::vector<double>& times,
                        const std::vector<std::vector<double>>& sigma_per_mode) {
    TrackedPaths tr;
    tr.times = times;
    tr.sigma.assign(times.size(), std::vector<double>(sigma_per_mode.size()));
    for (std::size_t t = 0; t < times.size(); ++t)
        for (std::size_t j = 0; j < sigma_per_mode.size(); ++j)
            tr.sigma[t][j] = sigma_per_mode[j][t];
    return tr;
}

Lifespan span_at(int mode, double za, double zo, std::vector<double> mismatch,
                 std::vector<double> sigma) {
    Lifespan s;
    s.mode = mode;
    s.z_alpha = za;
    s.z_omega = zo;
    s.first = static_cast<std::size_t>(za);
    s.last = static_cast<std::size_t>(zo);
    s.mismatch = std::move(mismatch);
    s.sigma = std::move(sigma);
    return s;
}

}  // namespace

TEST_CASE("threshold validation") {
    Thresholds th;
    REQUIRE_NOTHROW(th.validate());
    REQUIRE(th.conservative == Catch::Approx(0.5411961001461971));
    REQUIRE(th.up == Catch::Approx(1.0 - std::numbers::sqrt2 * std::sin(std::numbers::pi / 32.0)));
    REQUIRE(th.down + th.up == Catch::Approx(1.0));

    Thresholds bad = th;
    bad.down = 0.9;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
    bad = th;
    bad.percent = 0.0;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("mismatch calibration against chord lengths") {
    const std::vector<int> bins = {0, 1};
    const TransitionMatrix eye = identity_over(bins);
    const std::vector<double> e1 = {1.0, 0.0};

    SECTION("identical pair gives zero") {
        REQUIRE(equivariance_mismatch(bins, e1, eye, e1) == 0.0);
        REQUIRE(equivariance_mismatch(bins, e1, eye, {-1.0, 0.0}) == 0.0);
    }
    SECTION("a 45 degree pair lands on the conservative threshold") {
        const double c = std::cos(std::numbers::pi / 4.0);
        const std::vector<double> v45 = {c, c};
        const double expect = std::numbers::sqrt2 * std::sin(std::numbers::pi / 8.0);
        REQUIRE(std::fabs(equivariance_mismatch(bins, e1, eye, v45) - expect) <= 1e-9);
    }
    SECTION("orthogonal pair gives one") {
        REQUIRE(equivariance_mismatch(bins, e1, eye, {0.0, 1.0}) == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("vanishing pushforward gives one") {
        TransitionMatrix zero;
        zero.row_bins = bins;
        zero.col_bins = bins;
        zero.row_ptr.assign(3, 0);
        REQUIRE(equivariance_mismatch(bins, e1, zero, e1) == 1.0);
    }
    SECTION("general angles follow sqrt2 sin(theta/2)") {
        for (double theta : {0.2, 0.7, 1.2, 1.5}) {
            const std::vector<double> v = {std::cos(theta), std::sin(theta)};
            REQUIRE(equivariance_mismatch(bins, e1, eye, v) ==
                    Catch::Approx(std::numbers::sqrt2 * std::sin(theta / 2.0)).margin(1e-12));
        }
    }
    SECTION("values stay within the unit interval for random unit pairs") {
        std::mt19937 rng(59);
        std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
        for (int k = 0; k < 50; ++k) {
            const double a = ang(rng), b = ang(rng);
            const std::vector<double> va = {std::cos(a), std::sin(a)};
            const std::vector<double> vb = {std::cos(b), std::sin(b)};
            const double m = equivariance_mismatch(bins, va, eye, vb);
            REQUIRE(m >= 0.0);
            REQUIRE(m <= 1.0);
        }
    }
}

TEST_CASE("conservative detection splits a path at the threshold") {
    Thresholds th;  // conservative mode by default
    const std::vector<double> path = {0.1, 0.2, 0.6, 0.3, 0.54};
    const TrackedPaths tr = paths_with({0, 1, 2, 3, 4, 5}, {{0.9, 0.8, 0.7, 0.6, 0.5, 0.4}});

    const auto spans = detect_lifespans({path}, tr, th);
    REQUIRE(spans.size() == 2);
    REQUIRE(spans[0].z_alpha == 0.0);
    REQUIRE(spans[0].z_omega == 1.0);
    REQUIRE(spans[0].age() == 2);
    REQUIRE(spans[0].mismatch == std::vector<double>{0.1, 0.2});
    REQUIRE(spans[0].sigma == std::vector<double>{0.9, 0.8});
    REQUIRE(spans[1].z_alpha == 3.0);
    REQUIRE(spans[1].z_omega == 4.0);
    REQUIRE(spans[1].sigma == std::vector<double>{0.6, 0.5});

    // Exactly at the threshold is not below it.
    const std::vector<double> edge = {th.conservative};
    REQUIRE(detect_lifespans({edge}, paths_with({0, 1}, {{1.0, 1.0}}), th).empty());
}

TEST_CASE("percentage detection combines absolute bounds with relative jumps") {
    Thresholds th;
    th.mode = Thresholds::Mode::percentage;

    SECTION("jump above the upper bound kills a step") {
        const std::vector<double> path = {0.2, 0.21, 0.9, 0.2};
        const TrackedPaths tr = paths_with({0, 1, 2, 3, 4}, {{1, 1, 1, 1, 1}});
        const auto spans = detect_lifespans({path}, tr, th);
        // Step 1 dies from the 0.21 -> 0.9 jump, step 2 from the absolute bound,
        // step 3 survives as the final step.
        REQUIRE(spans.size() == 2);
        REQUIRE(spans[0].z_alpha == 0.0);
        REQUIRE(spans[0].z_omega == 0.0);
        REQUIRE(spans[1].z_alpha == 3.0);
        REQUIRE(spans[1].z_omega == 3.0);
    }
    SECTION("small values are exempt from the relative rule") {
        const std::vector<double> path = {0.05, 0.5, 0.52};
        const TrackedPaths tr = paths_with({0, 1, 2, 3}, {{1, 1, 1, 1}});
        const auto spans = detect_lifespans({path}, tr, th);
        // 0.05 <= down survives its 10x jump; 0.5 -> 0.52 is a small change.
        REQUIRE(spans.size() == 1);
        REQUIRE(spans[0].z_alpha == 0.0);
        REQUIRE(spans[0].z_omega == 2.0);
    }
    SECTION("the final step only checks the absolute bounds") {
        const std::vector<double> path = {0.5, 0.85};
        const TrackedPaths tr = paths_with({0, 1, 2}, {{1, 1, 1}});
        const auto spans = detect_lifespans({path}, tr, th);
        // 0.5 -> 0.85 is a 70% change (below 95%), and 0.85 < up at the end.
        REQUIRE(spans.size() == 1);
        REQUIRE(spans[0].z_omega == 1.0);

        const std::vector<double> high = {0.5, 0.9};
        const auto spans2 = detect_lifespans({high}, tr, th);
        REQUIRE(spans2.size() == 1);
        REQUIRE(spans2[0].z_alpha == 0.0);
        REQUIRE(spans2[0].z_omega == 0.0);
    }
}

TEST_CASE("conservative spans never shrink when the threshold grows") {
    Thresholds tight;
    tight.conservative = 0.3;
    Thresholds loose;
    loose.conservative = 0.5;
    std::mt19937 rng(61);
    std::uniform_real_distribution<double> val(0.0, 1.0);
    std::vector<double> path(40);
    for (auto& x : path) x = val(rng);
    std::vector<double> times(41);
    for (std::size_t i = 0; i < times.size(); ++i) times[i] = static_cast<double>(i);
    const TrackedPaths tr = paths_with(times, {std::vector<double>(41, 1.0)});

    std::size_t tight_steps = 0, loose_steps = 0;
    for (const auto& s : detect_lifespans({path}, tr, tight)) tight_steps += s.age();
    for (const auto& s : detect_lifespans({path}, tr, loose)) loose_steps += s.age();
    REQUIRE(tight_steps <= loose_steps);
}

TEST_CASE("mode count disagreement is rejected") {
    Thresholds th;
    const TrackedPaths tr = paths_with({0, 1}, {{1, 1}, {1, 1}});
    REQUIRE_THROWS_AS(detect_lifespans({{0.1}}, tr, th), ConfigError);
}

TEST_CASE("span statistics") {
    const Lifespan s = span_at(0, 2.0, 5.0, {0.1, 0.2, 0.3, 0.2}, {1.0, 0.9, 0.8, 0.7});
    REQUIRE(s.age() == 4);
    REQUIRE(s.mean_mismatch() == Catch::Approx(0.2));
    // Sample variance of {1.0, 0.9, 0.8, 0.7} with divisor 3.
    REQUIRE(s.sv_variance() == Catch::Approx(0.05 / 3.0));

    const Lifespan one = span_at(0, 2.0, 2.0, {0.1}, {1.0});
    REQUIRE(one.age() == 1);
    REQUIRE(one.sv_variance() == 0.0);
}

TEST_CASE("characteristic selections and their tie rules") {
    const Lifespan a = span_at(0, 0.0, 3.0, {0.3, 0.3, 0.3, 0.3}, {0.9, 0.9, 0.9, 0.9});
    const Lifespan b = span_at(1, 5.0, 8.0, {0.1, 0.1, 0.1, 0.1}, {1.0, 0.5, 1.0, 0.5});
    const Lifespan c = span_at(2, 10.0, 11.0, {0.2, 0.2}, {0.9, 0.8});

    const auto chars = characteristic_lifespans({a, b, c});
    REQUIRE(chars.eldest.has_value());
    // Ages 4, 4, 2: the tie goes to the earlier birth.
    REQUIRE(chars.eldest->mode == 0);
    REQUIRE(chars.min_eq->mode == 1);
    REQUIRE(chars.max_var_sv->mode == 1);

    SECTION("equal age and birth fall back to the mode index") {
        Lifespan b2 = b;
        b2.z_alpha = 0.0;
        const auto tied = characteristic_lifespans({b2, a});
        REQUIRE(tied.eldest->mode == 0);
    }
    SECTION("age-one spans cannot carry the variance selection") {
        const Lifespan solo = span_at(0, 4.0, 4.0, {0.2}, {0.9});
        const auto only = characteristic_lifespans({solo});
        REQUIRE(only.eldest.has_value());
        REQUIRE(only.min_eq.has_value());
        REQUIRE_FALSE(only.max_var_sv.has_value());
    }
    SECTION("empty input clears all selections") {
        const auto none = characteristic_lifespans({});
        REQUIRE_FALSE(none.eldest.has_value());
        REQUIRE_FALSE(none.min_eq.has_value());
        REQUIRE_FALSE(none.max_var_sv.has_value());
    }
}
