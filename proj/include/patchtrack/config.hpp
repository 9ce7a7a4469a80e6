#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "patchtrack/core.hpp"
#include "patchtrack/geometry.hpp"
#include "patchtrack/lifespans.hpp"

namespace patchtrack {

inline const std::vector<double> kDefaultPCandidates = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6,
                                                        0.7, 0.8, 0.9, 1.0, 2.0};

/// One experiment: field source, discretisation, window and threshold
/// settings, and the output location.
struct AnalysisConfig {
    enum class FieldType { double_well, dataset };

    FieldType field_type = FieldType::double_well;
    std::string dataset_path;
    std::optional<Domain> domain;  // double-well default and dataset manifests fill this in
    int depth = 12;
    int window_length = 10;
    int seeds_per_bin = 100;
    int n_modes = 4;
    double tau = 1.0;
    std::optional<int> substeps;  // defaults to 20 analytic, 10 gridded
    double t_initial = 0.0;
    double t_final = 0.0;
    Patch patch;
    std::optional<double> p;
    std::vector<double> p_candidates = kDefaultPCandidates;
    Thresholds thresholds;
    double iso_thresh = 0.85;
    std::string output_dir;
    int threads = 1;

    int effective_substeps() const {
        if (substeps) return *substeps;
        return field_type == FieldType::double_well ? 20 : 10;
    }

    void validate() const {
        if (depth < 2) throw ConfigError("depth must be at least 2");
        if (window_length < 1) throw ConfigError("window_length must be at least 1");
        if (seeds_per_bin < 1) throw ConfigError("seeds_per_bin must be positive");
        if (n_modes < 1) throw ConfigError("n_modes must be positive");
        if (!(tau > 0.0)) throw ConfigError("tau must be positive");
        if (substeps && *substeps < 1) throw ConfigError("substeps must be positive");
        if (t_initial > t_final - window_length * tau + 1e-9)
            throw ConfigError("time range too short: t_initial must not exceed t_final minus the window span");
        patch.validate();
        if (p && !(*p > 0.0 && *p <= 2.0)) throw ConfigError("p must lie in (0, 2]");
        if (p_candidates.empty()) throw ConfigError("p_candidates must not be empty");
        for (double c : p_candidates)
            if (!(c > 0.0 && c <= 2.0)) throw ConfigError("every p candidate must lie in (0, 2]");
        thresholds.validate();
        if (!(iso_thresh >= 0.0 && iso_thresh <= 1.0))
            throw ConfigError("iso_thresh must lie in [0, 1]");
        if (field_type == FieldType::dataset && dataset_path.empty())
            throw ConfigError("dataset field requires a path");
        if (threads < 1) throw ConfigError("threads must be positive");
        if (domain) domain->validate();
    }
};

namespace detail {

inline void require_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                         const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError("unknown key \"" + key + "\" in " + where);
}

inline double get_number(const nlohmann::json& j, const std::string& key) {
    if (!j.at(key).is_number()) throw ConfigError("\"" + key + "\" must be a number");
    return j.at(key).get<double>();
}

inline int get_int(const nlohmann::json& j, const std::string& key) {
    if (!j.at(key).is_number_integer()) throw ConfigError("\"" + key + "\" must be an integer");
    return j.at(key).get<int>();
}

inline Domain parse_domain(const nlohmann::json& j) {
    require_keys(j, {"x_min", "x_max", "y_min", "y_max", "periodic_x", "periodic_y"}, "\"domain\"");
    Domain d;
    d.x_min = get_number(j, "x_min");
    d.x_max = get_number(j, "x_max");
    d.y_min = get_number(j, "y_min");
    d.y_max = get_number(j, "y_max");
    if (j.contains("periodic_x")) {
        if (!j.at("periodic_x").is_boolean()) throw ConfigError("\"periodic_x\" must be a boolean");
        d.periodic_x = j.at("periodic_x").get<bool>();
    }
    if (j.contains("periodic_y")) {
        if (!j.at("periodic_y").is_boolean()) throw ConfigError("\"periodic_y\" must be a boolean");
        d.periodic_y = j.at("periodic_y").get<bool>();
    }
    d.validate();
    return d;
}

inline Patch parse_patch(const nlohmann::json& j) {
    require_keys(j, {"centre", "radius", "semi_axes"}, "\"patch\"");
    if (!j.contains("centre") || !j.at("centre").is_array() || j.at("centre").size() != 2)
        throw ConfigError("patch centre must be a two-element array");
    Patch p;
    p.centre = {j.at("centre")[0].get<double>(), j.at("centre")[1].get<double>()};
    const bool has_r = j.contains("radius");
    const bool has_ab = j.contains("semi_axes");
    if (has_r == has_ab)
        throw ConfigError("patch requires exactly one of \"radius\" or \"semi_axes\"");
    if (has_r) {
        p.semi_a = p.semi_b = get_number(j, "radius");
    } else {
        const auto& ab = j.at("semi_axes");
        if (!ab.is_array() || ab.size() != 2)
            throw ConfigError("patch semi_axes must be a two-element array");
        p.semi_a = ab[0].get<double>();
        p.semi_b = ab[1].get<double>();
    }
    p.validate();
    return p;
}

inline Thresholds parse_thresholds(const nlohmann::json& j) {
    require_keys(j, {"mode", "conservative", "up", "down", "percent"}, "\"thresholds\"");
    Thresholds t;
    if (j.contains("mode")) {
        const std::string m = j.at("mode").get<std::string>();
        if (m == "conservative")
            t.mode = Thresholds::Mode::conservative;
        else if (m == "percentage")
            t.mode = Thresholds::Mode::percentage;
        else
            throw ConfigError("threshold mode must be \"conservative\" or \"percentage\"");
    }
    if (j.contains("conservative")) t.conservative = get_number(j, "conservative");
    if (j.contains("up")) t.up = get_number(j, "up");
    if (j.contains("down")) t.down = get_number(j, "down");
    if (j.contains("percent")) t.percent = get_number(j, "percent");
    t.validate();
    return t;
}

}  // namespace detail

inline AnalysisConfig parse_config(const nlohmann::json& j) {
    detail::require_keys(j,
                         {"field", "domain", "depth", "window_length", "seeds_per_bin", "n_modes",
                          "flow", "t_initial", "t_final", "patch", "p", "p_candidates",
                          "thresholds", "iso_thresh", "output_dir", "threads"},
                         "config");
    AnalysisConfig c;

    if (!j.contains("field")) throw ConfigError("config requires a \"field\" object");
    const auto& f = j.at("field");
    detail::require_keys(f, {"type", "path"}, "\"field\"");
    const std::string type = f.at("type").get<std::string>();
    if (type == "double-well") {
        c.field_type = AnalysisConfig::FieldType::double_well;
        if (f.contains("path")) throw ConfigError("double-well field takes no \"path\"");
    } else if (type == "dataset") {
        c.field_type = AnalysisConfig::FieldType::dataset;
        if (!f.contains("path")) throw ConfigError("dataset field requires a \"path\"");
        c.dataset_path = f.at("path").get<std::string>();
    } else {
        throw ConfigError("field type must be \"double-well\" or \"dataset\"");
    }

    if (j.contains("domain")) c.domain = detail::parse_domain(j.at("domain"));
    if (!j.contains("depth")) throw ConfigError("config requires \"depth\"");
    c.depth = detail::get_int(j, "depth");
    if (j.contains("window_length")) c.window_length = detail::get_int(j, "window_length");
    if (j.contains("seeds_per_bin")) c.seeds_per_bin = detail::get_int(j, "seeds_per_bin");
    if (j.contains("n_modes")) c.n_modes = detail::get_int(j, "n_modes");
    if (j.contains("flow")) {
        detail::require_keys(j.at("flow"), {"tau", "substeps"}, "\"flow\"");
        if (j.at("flow").contains("tau")) c.tau = detail::get_number(j.at("flow"), "tau");
        if (j.at("flow").contains("substeps")) c.substeps = detail::get_int(j.at("flow"), "substeps");
    }
    if (j.contains("t_initial")) c.t_initial = detail::get_number(j, "t_initial");
    if (!j.contains("t_final")) throw ConfigError("config requires \"t_final\"");
    c.t_final = detail::get_number(j, "t_final");
    if (!j.contains("patch")) throw ConfigError("config requires a \"patch\" object");
    c.patch = detail::parse_patch(j.at("patch"));
    if (j.contains("p")) c.p = detail::get_number(j, "p");
    if (j.contains("p_candidates")) {
        if (!j.at("p_candidates").is_array()) throw ConfigError("\"p_candidates\" must be an array");
        c.p_candidates = j.at("p_candidates").get<std::vector<double>>();
    }
    if (j.contains("thresholds")) c.thresholds = detail::parse_thresholds(j.at("thresholds"));
    if (j.contains("iso_thresh")) c.iso_thresh = detail::get_number(j, "iso_thresh");
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("threads")) c.threads = detail::get_int(j, "threads");

    c.validate();
    return c;
}

inline AnalysisConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed config JSON in " + path.string() + ": " + e.what());
    }
    try {
        return parse_config(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid config in " + path.string() + ": " + e.what());
    }
}

}  // namespace patchtrack
