#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "patchtrack/config.hpp"
#include "patchtrack/core.hpp"
#include "patchtrack/fields.hpp"
#include "patchtrack/geometry.hpp"
#include "patchtrack/lifespans.hpp"
#include "patchtrack/parallel.hpp"
#include "patchtrack/regularity.hpp"
#include "patchtrack/render.hpp"
#include "patchtrack/tracking.hpp"
#include "patchtrack/ulam.hpp"

namespace patchtrack {
namespace detail {

// Shortest round-trip decimal form; keeps CSV and JSON output byte-stable.
inline std::string fmt(double x) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

inline Domain default_dwp_domain() { return {-4.0, 4.0, -4.0, 4.0, false, false}; }

inline void check_domain_match(const Domain& a, const Domain& b) {
    auto near = [](double x, double y) {
        return std::fabs(x - y) <= 1e-9 * std::max({1.0, std::fabs(x), std::fabs(y)});
    };
    if (!near(a.x_min, b.x_min) || !near(a.x_max, b.x_max) || !near(a.y_min, b.y_min) ||
        !near(a.y_max, b.y_max) || a.periodic_x != b.periodic_x || a.periodic_y != b.periodic_y)
        throw ConfigError("config domain does not match the dataset manifest domain");
}

inline std::vector<double> window_start_times(const AnalysisConfig& c) {
    const double span = c.window_length * c.tau;
    const auto count =
        static_cast<long>(std::floor((c.t_final - span - c.t_initial) / c.tau + 1e-9)) + 1;
    std::vector<double> t(static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = c.t_initial + static_cast<double>(i) * c.tau;
    return t;
}

inline void validate_window(const ModeWindow& w) {
    auto check = [](const TransitionMatrix& m) {
        for (std::size_t r = 0; r < m.rows(); ++r) {
            const double s = m.row_sum(r);
            if (!(s >= -1e-12 && s <= 1.0 + 1e-12))
                throw NumericError("transition matrix row sum outside [0, 1]");
        }
    };
    for (const auto& step : w.steps) check(step);
    check(w.composed);
}

// Drops the pieces tracking never looks at: all step matrices except the
// last, and the composed entries (its bin lists stay).
inline void slim_window(ModeWindow& w) {
    if (w.steps.size() > 1) w.steps.erase(w.steps.begin(), w.steps.end() - 1);
    TransitionMatrix kept;
    kept.row_bins = std::move(w.composed.row_bins);
    kept.col_bins = std::move(w.composed.col_bins);
    w.composed = std::move(kept);
}

inline const char* mode_name(Thresholds::Mode m) {
    return m == Thresholds::Mode::conservative ? "conservative" : "percentage";
}

}  // namespace detail

template <typename Field>
std::vector<ModeWindow> build_windows(const Grid& grid, const std::vector<int>& patch_bins,
                                      const std::vector<double>& times, const WindowParams& par,
                                      const Field& field, int threads) {
    std::vector<ModeWindow> out(times.size());
    parallel_for(times.size(), threads, [&](std::size_t i) {
        ModeWindow w = build_window(grid, patch_bins, times[i], par, field);
        detail::validate_window(w);
        detail::slim_window(w);
        out[i] = std::move(w);
    });
    return out;
}

/// Grid, patch support, and the full slimmed window sequence for a config.
struct Prepared {
    Domain domain;
    Grid grid;
    std::vector<int> patch_bins;
    std::vector<double> times;
    std::vector<ModeWindow> windows;
};

inline Prepared prepare_windows(const AnalysisConfig& cfg) {
    cfg.validate();
    WindowParams par;
    par.n_steps = cfg.window_length;
    par.n_modes = cfg.n_modes;
    par.seeds_per_bin = cfg.seeds_per_bin;
    par.flow = FlowSpec{cfg.tau, cfg.effective_substeps()};
    par.validate();

    Prepared pr;
    if (cfg.field_type == AnalysisConfig::FieldType::double_well) {
        pr.domain = cfg.domain.value_or(detail::default_dwp_domain());
        pr.grid = build_grid(pr.domain, cfg.depth);
        pr.patch_bins = bins_in_patch(pr.grid, cfg.patch);
        if (pr.patch_bins.empty()) throw ConfigError("patch covers no grid bins");
        pr.times = detail::window_start_times(cfg);
        pr.windows =
            build_windows(pr.grid, pr.patch_bins, pr.times, par, DoubleWellField{}, cfg.threads);
    } else {
        const GriddedField gf = load_gridded_field(cfg.dataset_path);
        if (cfg.domain) detail::check_domain_match(*cfg.domain, gf.domain);
        if (gf.times.front() > cfg.t_initial + 1e-9 || gf.times.back() < cfg.t_final - 1e-9)
            throw DataError("dataset time range [" + detail::fmt(gf.times.front()) + ", " +
                            detail::fmt(gf.times.back()) + "] does not cover requested [" +
                            detail::fmt(cfg.t_initial) + ", " + detail::fmt(cfg.t_final) + "]");
        pr.domain = gf.domain;
        pr.grid = build_grid(pr.domain, cfg.depth);
        pr.patch_bins = bins_in_patch(pr.grid, cfg.patch);
        if (pr.patch_bins.empty()) throw ConfigError("patch covers no grid bins");
        pr.times = detail::window_start_times(cfg);
        pr.windows =
            build_windows(pr.grid, pr.patch_bins, pr.times, par, GriddedSampler{&gf}, cfg.threads);
    }
    return pr;
}

struct PipelineResult {
    Domain domain;
    Grid grid;
    double p = 0.0;
    Thresholds thresholds;
    std::vector<double> times;
    TrackedPaths tracked;
    std::vector<std::vector<double>> varsigma;  // [mode][t]
    std::vector<Lifespan> spans;
    CharacteristicLifespans characteristic;
    RegularityReport regularity;
};

/// Full analysis for a fixed p: windows, tracking, mismatch, lifespans,
/// characteristic selections, and the regularity layer.
inline PipelineResult run_pipeline(const AnalysisConfig& cfg) {
    if (!cfg.p) throw ConfigError("analysis requires a fixed \"p\"; run select-p to choose one");
    Prepared pr = prepare_windows(cfg);

    PipelineResult res;
    res.domain = pr.domain;
    res.grid = pr.grid;
    res.p = *cfg.p;
    res.thresholds = cfg.thresholds;
    res.times = pr.times;
    res.tracked = track_modes(pr.windows, *cfg.p);
    res.varsigma = mismatch_paths(pr.windows, res.tracked);
    res.spans = detect_lifespans(res.varsigma, res.tracked, cfg.thresholds);
    res.characteristic = characteristic_lifespans(res.spans);
    res.regularity = regularize_lifespans(res.spans, res.tracked, pr.grid, cfg.iso_thresh);
    return res;
}

namespace detail {

inline nlohmann::json span_to_json(const Lifespan& s) {
    return nlohmann::json{{"mode", s.mode + 1},
                          {"z_alpha", s.z_alpha},
                          {"z_omega", s.z_omega},
                          {"age", s.age()},
                          {"mean_mismatch", s.mean_mismatch()},
                          {"sv_variance", s.sv_variance()},
                          {"mismatch", s.mismatch},
                          {"singular_values", s.sigma}};
}

inline nlohmann::json domain_to_json(const Domain& d) {
    return nlohmann::json{{"x_min", d.x_min},         {"x_max", d.x_max},
                          {"y_min", d.y_min},         {"y_max", d.y_max},
                          {"periodic_x", d.periodic_x}, {"periodic_y", d.periodic_y}};
}

inline void put_u32(std::ofstream& os, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

inline void put_f64(std::ofstream& os, double x) {
    const auto v = std::bit_cast<std::uint64_t>(x);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}

inline std::uint32_t get_u32(std::ifstream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated run state file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline double get_f64(std::ifstream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw DataError("truncated run state file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(v);
}

constexpr char kModesMagic[8] = {'P', 'T', 'M', 'O', 'D', 'E', 'S', '1'};

inline void write_run_state(const PipelineResult& res, const std::filesystem::path& dir) {
    nlohmann::json meta{{"format", "patchtrack-run"},
                        {"version", 1},
                        {"domain", domain_to_json(res.domain)},
                        {"depth", res.grid.depth},
                        {"n_modes", res.tracked.n_modes()},
                        {"p", res.p},
                        {"threshold_mode", mode_name(res.thresholds.mode)},
                        {"times", res.times}};
    {
        std::ofstream f(dir / "run_meta.json", std::ios::binary);
        if (!f) throw DataError("cannot write run_meta.json in " + dir.string());
        f << meta.dump(2) << "\n";
    }

    std::ofstream f(dir / "modes.bin", std::ios::binary);
    if (!f) throw DataError("cannot write modes.bin in " + dir.string());
    f.write(kModesMagic, 8);
    const auto& tr = res.tracked;
    put_u32(f, static_cast<std::uint32_t>(tr.n_steps()));
    put_u32(f, static_cast<std::uint32_t>(tr.n_modes()));
    put_u32(f, static_cast<std::uint32_t>(tr.u_bins.size()));
    for (int b : tr.u_bins) put_u32(f, static_cast<std::uint32_t>(b));
    for (std::size_t t = 0; t < tr.n_steps(); ++t) {
        put_f64(f, tr.times[t]);
        put_u32(f, static_cast<std::uint32_t>(tr.v_bins[t].size()));
        for (int b : tr.v_bins[t]) put_u32(f, static_cast<std::uint32_t>(b));
        for (std::size_t j = 0; j < tr.n_modes(); ++j) put_f64(f, tr.sigma[t][j]);
        for (std::size_t j = 0; j < tr.n_modes(); ++j)
            for (double x : tr.u[t][j]) put_f64(f, x);
        for (std::size_t j = 0; j < tr.n_modes(); ++j)
            for (double x : tr.v[t][j]) put_f64(f, x);
    }
    if (!f) throw DataError("failed while writing modes.bin in " + dir.string());
}

}  // namespace detail

/// Everything the render subcommand needs from a finished run.
struct RunState {
    Grid grid;
    TrackedPaths tracked;
};

inline RunState load_run_state(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "run_meta.json");
    if (!mf) throw DataError("missing run_meta.json in " + dir.string());
    nlohmann::json meta;
    try {
        mf >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed run_meta.json: " + std::string(e.what()));
    }

    RunState rs;
    try {
        const auto& dj = meta.at("domain");
        Domain d;
        d.x_min = dj.at("x_min").get<double>();
        d.x_max = dj.at("x_max").get<double>();
        d.y_min = dj.at("y_min").get<double>();
        d.y_max = dj.at("y_max").get<double>();
        d.periodic_x = dj.at("periodic_x").get<bool>();
        d.periodic_y = dj.at("periodic_y").get<bool>();
        rs.grid = build_grid(d, meta.at("depth").get<int>());
        rs.tracked.p = meta.at("p").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("invalid run_meta.json: " + std::string(e.what()));
    }

    std::ifstream f(dir / "modes.bin", std::ios::binary);
    if (!f) throw DataError("missing modes.bin in " + dir.string());
    char magic[8];
    if (!f.read(magic, 8) || !std::equal(magic, magic + 8, detail::kModesMagic))
        throw DataError("modes.bin has an unrecognised header");
    const std::uint32_t steps = detail::get_u32(f);
    const std::uint32_t n = detail::get_u32(f);
    const std::uint32_t u_count = detail::get_u32(f);
    auto& tr = rs.tracked;
    tr.u_bins.resize(u_count);
    for (auto& b : tr.u_bins) b = static_cast<int>(detail::get_u32(f));
    tr.times.resize(steps);
    tr.v_bins.resize(steps);
    tr.sigma.assign(steps, std::vector<double>(n));
    tr.u.resize(steps);
    tr.v.resize(steps);
    for (std::uint32_t t = 0; t < steps; ++t) {
        tr.times[t] = detail::get_f64(f);
        const std::uint32_t v_count = detail::get_u32(f);
        tr.v_bins[t].resize(v_count);
        for (auto& b : tr.v_bins[t]) b = static_cast<int>(detail::get_u32(f));
        for (std::uint32_t j = 0; j < n; ++j) tr.sigma[t][j] = detail::get_f64(f);
        tr.u[t].assign(n, std::vector<double>(u_count));
        for (std::uint32_t j = 0; j < n; ++j)
            for (auto& x : tr.u[t][j]) x = detail::get_f64(f);
        tr.v[t].assign(n, std::vector<double>(v_count));
        for (std::uint32_t j = 0; j < n; ++j)
            for (auto& x : tr.v[t][j]) x = detail::get_f64(f);
    }
    return rs;
}

/// Writes every analysis artifact into the config's output directory.
inline void write_artifacts(const PipelineResult& res, const AnalysisConfig& cfg) {
    namespace fs = std::filesystem;
    if (cfg.output_dir.empty()) throw ConfigError("analysis requires \"output_dir\"");
    const fs::path dir = cfg.output_dir;
    std::error_code ec;
    fs::create_directories(dir, ec);

    {
        std::ofstream f(dir / "singular_paths.csv", std::ios::binary);
        if (!f) throw DataError("cannot write singular_paths.csv in " + dir.string());
        f << "t,mode,singular_value\n";
        for (std::size_t t = 0; t < res.tracked.n_steps(); ++t)
            for (std::size_t j = 0; j < res.tracked.n_modes(); ++j)
                f << detail::fmt(res.times[t]) << "," << j + 1 << ","
                  << detail::fmt(res.tracked.sigma[t][j]) << "\n";
    }
    {
        std::ofstream f(dir / "mismatch.csv", std::ios::binary);
        if (!f) throw DataError("cannot write mismatch.csv in " + dir.string());
        f << "t,mode,varsigma\n";
        const std::size_t m = res.varsigma.empty() ? 0 : res.varsigma.front().size();
        for (std::size_t t = 0; t < m; ++t)
            for (std::size_t j = 0; j < res.varsigma.size(); ++j)
                f << detail::fmt(res.times[t]) << "," << j + 1 << ","
                  << detail::fmt(res.varsigma[j][t]) << "\n";
    }
    {
        auto opt_span = [](const std::optional<Lifespan>& s) {
            return s ? detail::span_to_json(*s) : nlohmann::json(nullptr);
        };
        nlohmann::json spans = nlohmann::json::array();
        for (const auto& s : res.spans) spans.push_back(detail::span_to_json(s));
        nlohmann::json jl{{"p", res.p},
                          {"threshold_mode", detail::mode_name(res.thresholds.mode)},
                          {"spans", spans},
                          {"characteristic",
                           {{"eldest", opt_span(res.characteristic.eldest)},
                            {"min_eq", opt_span(res.characteristic.min_eq)},
                            {"max_var_sv", opt_span(res.characteristic.max_var_sv)}}}};
        std::ofstream f(dir / "lifespans.json", std::ios::binary);
        if (!f) throw DataError("cannot write lifespans.json in " + dir.string());
        f << jl.dump(2) << "\n";
    }
    {
        nlohmann::json steps = nlohmann::json::array();
        for (const auto& s : res.regularity.steps)
            steps.push_back(nlohmann::json{{"mode", s.mode + 1},
                                           {"t", s.t},
                                           {"exists", s.exists},
                                           {"i_max", s.i_max},
                                           {"components", s.components}});
        nlohmann::json spans = nlohmann::json::array();
        for (const auto& s : res.regularity.regularized) spans.push_back(detail::span_to_json(s));
        nlohmann::json jr{
            {"iso_thresh", res.regularity.iso_thresh}, {"steps", steps}, {"spans", spans}};
        std::ofstream f(dir / "regularity.json", std::ios::binary);
        if (!f) throw DataError("cannot write regularity.json in " + dir.string());
        f << jr.dump(2) << "\n";
    }

    auto render_characteristic = [&](const std::string& name, const std::optional<Lifespan>& s) {
        if (!s) return;
        const auto j = static_cast<std::size_t>(s->mode);
        render_vector(res.grid, res.tracked.u_bins, res.tracked.u[s->first][j],
                      dir / (name + "_zalpha_u.pgm"));
        render_vector(res.grid, res.tracked.v_bins[s->last], res.tracked.v[s->last][j],
                      dir / (name + "_zomega_v.pgm"));
    };
    render_characteristic("eldest", res.characteristic.eldest);
    render_characteristic("min_eq", res.characteristic.min_eq);
    render_characteristic("max_var_sv", res.characteristic.max_var_sv);

    detail::write_run_state(res, dir);
}

/// Renders one stored singular vector from a finished run directory.
inline void render_run(const std::filesystem::path& run_dir, int mode, double time,
                       const std::string& side, const std::filesystem::path& out) {
    const RunState rs = load_run_state(run_dir);
    if (mode < 1 || static_cast<std::size_t>(mode) > rs.tracked.n_modes())
        throw ConfigError("mode must lie in [1, " + std::to_string(rs.tracked.n_modes()) + "]");
    std::size_t k = rs.tracked.n_steps();
    for (std::size_t i = 0; i < rs.tracked.n_steps(); ++i)
        if (std::fabs(rs.tracked.times[i] - time) <= 1e-9) k = i;
    if (k == rs.tracked.n_steps())
        throw ConfigError("time " + detail::fmt(time) + " is not a window start of this run");
    const auto j = static_cast<std::size_t>(mode - 1);
    if (side == "u")
        render_vector(rs.grid, rs.tracked.u_bins, rs.tracked.u[k][j], out);
    else if (side == "v")
        render_vector(rs.grid, rs.tracked.v_bins[k], rs.tracked.v[k][j], out);
    else
        throw ConfigError("side must be \"u\" or \"v\"");
}

/// Mean-mismatch table over candidate p values and the selected one, if any.
struct PSelection {
    struct Entry {
        double p = 0.0;
        double mean_mismatch = 0.0;
        std::size_t span_count = 0;
        bool excluded = false;
    };
    std::vector<Entry> table;
    std::optional<double> selected;
};

/// Runs tracking and lifespan detection per candidate and picks the largest
/// p attaining the minimal mean mismatch over detected lifespans. Candidates
/// without any lifespan are excluded; all excluded yields no selection.
inline PSelection select_p_over(const std::vector<ModeWindow>& windows,
                                const std::vector<double>& candidates, const Thresholds& th) {
    std::vector<double> cand = candidates;
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());

    PSelection out;
    for (double p : cand) {
        const TrackedPaths tracked = track_modes(windows, p);
        const auto vs = mismatch_paths(windows, tracked);
        const auto spans = detect_lifespans(vs, tracked, th);
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& s : spans) {
            for (double x : s.mismatch) sum += x;
            count += s.mismatch.size();
        }
        PSelection::Entry e;
        e.p = p;
        e.span_count = spans.size();
        e.excluded = count == 0;
        e.mean_mismatch = count ? sum / static_cast<double>(count) : 0.0;
        out.table.push_back(e);
    }

    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : out.table)
        if (!e.excluded) best = std::min(best, e.mean_mismatch);
    if (std::isfinite(best)) {
        const double tol = 1e-12 * std::max(1.0, std::fabs(best));
        for (const auto& e : out.table)
            if (!e.excluded && e.mean_mismatch <= best + tol) out.selected = e.p;
    }
    return out;
}

inline PSelection select_p_run(const AnalysisConfig& cfg) {
    Prepared pr = prepare_windows(cfg);
    PSelection sel = select_p_over(pr.windows, cfg.p_candidates, cfg.thresholds);
    if (!cfg.output_dir.empty()) {
        namespace fs = std::filesystem;
        std::error_code ec;
        fs::create_directories(fs::path(cfg.output_dir), ec);
        nlohmann::json table = nlohmann::json::array();
        for (const auto& e : sel.table)
            table.push_back(nlohmann::json{{"p", e.p},
                                           {"mean_mismatch", e.mean_mismatch},
                                           {"span_count", e.span_count},
                                           {"excluded", e.excluded}});
        nlohmann::json j{{"table", table},
                         {"selected", sel.selected ? nlohmann::json(*sel.selected)
                                                   : nlohmann::json(nullptr)}};
        std::ofstream f(fs::path(cfg.output_dir) / "p_selection.json", std::ios::binary);
        if (!f) throw DataError("cannot write p_selection.json in " + cfg.output_dir);
        f << j.dump(2) << "\n";
    }
    return sel;
}

/// Samples the analytic double-well velocity onto a node lattice and writes
/// it in the dataset directory format.
inline void generate_dwp_dataset(int nx, int ny, double t0, double t1, double step,
                                 const std::filesystem::path& dir) {
    if (nx < 2 || ny < 2) throw ConfigError("gen-dwp requires nx and ny of at least 2");
    if (!(step > 0.0)) throw ConfigError("gen-dwp requires a positive step");
    if (t1 < t0) throw ConfigError("gen-dwp requires t1 >= t0");

    GriddedField f;
    f.domain = detail::default_dwp_domain();
    f.nx = nx;
    f.ny = ny;
    const auto count = static_cast<long>(std::floor((t1 - t0) / step + 1e-9)) + 1;
    f.times.resize(static_cast<std::size_t>(count));
    for (std::size_t s = 0; s < f.times.size(); ++s)
        f.times[s] = t0 + static_cast<double>(s) * step;

    const std::size_t per = static_cast<std::size_t>(nx) * ny;
    f.u.assign(f.times.size(), std::vector<double>(per));
    f.v.assign(f.times.size(), std::vector<double>(per));
    for (std::size_t s = 0; s < f.times.size(); ++s) {
        for (int iy = 0; iy < ny; ++iy) {
            for (int ix = 0; ix < nx; ++ix) {
                const Vec2 vel = dwp_velocity(f.node(ix, iy), f.times[s]);
                f.u[s][static_cast<std::size_t>(iy) * nx + ix] = vel.x;
                f.v[s][static_cast<std::size_t>(iy) * nx + ix] = vel.y;
            }
        }
    }
    save_gridded_field(f, dir);
}

}  // namespace patchtrack
