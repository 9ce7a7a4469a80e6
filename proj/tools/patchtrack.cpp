#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "patchtrack/config.hpp"
#include "patchtrack/pipeline.hpp"

namespace {

int run_analyze(const std::string& config_path) {
    const auto cfg = patchtrack::load_config(config_path);
    const auto res = patchtrack::run_pipeline(cfg);
    patchtrack::write_artifacts(res, cfg);
    std::cout << "p = " << res.p << ", windows = " << res.tracked.n_steps()
              << ", lifespans = " << res.spans.size()
              << ", regularized = " << res.regularity.regularized.size() << "\n"
              << "artifacts written to " << cfg.output_dir << "\n";
    return 0;
}

int run_select_p(const std::string& config_path) {
    const auto cfg = patchtrack::load_config(config_path);
    const auto sel = patchtrack::select_p_run(cfg);
    for (const auto& e : sel.table) {
        std::cout << "p = " << e.p << ": ";
        if (e.excluded)
            std::cout << "excluded (no lifespans)\n";
        else
            std::cout << "mean mismatch " << e.mean_mismatch << " over " << e.span_count
                      << " lifespan(s)\n";
    }
    if (sel.selected)
        std::cout << "selected p = " << *sel.selected << "\n";
    else
        std::cout << "no p selected: every candidate was excluded\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coherent-structure lifespans from localized transfer operators"};
    app.require_subcommand(1);

    std::string analyze_config;
    auto* analyze = app.add_subcommand("analyze", "run the full analysis described by a config");
    analyze->add_option("config", analyze_config, "JSON config file")->required();

    std::string select_config;
    auto* selp = app.add_subcommand("select-p", "score candidate quasi-norm exponents");
    selp->add_option("config", select_config, "JSON config file")->required();

    int nx = 0;
    int ny = 0;
    double t0 = 0.0;
    double t1 = 0.0;
    double step = 0.0;
    std::string gen_out;
    auto* gen = app.add_subcommand("gen-dwp", "sample the double-well field into a dataset");
    gen->add_option("--nx", nx, "nodes along x")->required();
    gen->add_option("--ny", ny, "nodes along y")->required();
    gen->add_option("--t0", t0, "first sample time")->required();
    gen->add_option("--t1", t1, "last sample time")->required();
    gen->add_option("--step", step, "time between samples")->required();
    gen->add_option("--out", gen_out, "dataset directory to create")->required();

    std::string run_dir;
    std::string side = "v";
    std::string render_out;
    int mode = 1;
    double rtime = 0.0;
    auto* render = app.add_subcommand("render", "write one stored mode as a PGM image");
    render->add_option("--run-dir", run_dir, "directory written by analyze")->required();
    render->add_option("--mode", mode, "mode index, starting at 1")->required();
    render->add_option("--time", rtime, "window start time")->required();
    render->add_option("--side", side, "u (initial) or v (final) vector");
    render->add_option("--out", render_out, "output PGM path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*analyze) return run_analyze(analyze_config);
        if (*selp) return run_select_p(select_config);
        if (*gen) {
            patchtrack::generate_dwp_dataset(nx, ny, t0, t1, step, gen_out);
            std::cout << "dataset written to " << gen_out << "\n";
            return 0;
        }
        if (*render) {
            patchtrack::render_run(run_dir, mode, rtime, side, render_out);
            std::cout << "image written to " << render_out << "\n";
            return 0;
        }
    } catch (const patchtrack::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const patchtrack::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const patchtrack::NumericError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
