// Experiment runner CLI: reproduces the desk-scale tables, curves, theory
// diagnostics, copycat comparisons, and ablation grids as CSV/JSON files.
//
// Exit codes: 0 = all hard invariants pass, 1 = usage error, 2 = invariant
// failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "primelab/experiments.hpp"

namespace fs = std::filesystem;
using namespace primelab;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;  // 0 = keep config default
    std::string format = "both";
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "JSON config file");
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--seed", opts.seed, "override the base seed");
    cmd->add_option("--format", opts.format, "csv, json, or both")
        ->check(CLI::IsMember({"csv", "json", "both"}));
}

json load_config(const CommonOpts& opts) {
    if (opts.config_path.empty()) return json::object();
    std::ifstream is(opts.config_path);
    if (!is.good()) throw CLI::ValidationError("--config", "cannot open " + opts.config_path);
    return json::parse(is);
}

template <typename T>
void maybe(const json& j, const char* key, T& target) {
    if (j.contains(key)) target = j.at(key).get<T>();
}

void emit(const CommonOpts& opts, const std::string& name, const std::string& csv,
          const json& jsn) {
    const fs::path dir(opts.out_dir);
    if ((opts.format == "csv" || opts.format == "both") && !csv.empty())
        write_file_atomic(dir / (name + ".csv"), csv);
    if (opts.format == "json" || opts.format == "both")
        write_file_atomic(dir / (name + ".json"), jsn.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"primelab: shortcut-avoidance priming and kernel-regime experiments"};
    app.require_subcommand(1);

    CommonOpts toy_opts, curves_opts, theory_opts, copycat_opts, ablate_opts;
    bool svg = false;

    auto* toy = app.add_subcommand("toy-table", "1-D regression RMSE table");
    add_common(toy, toy_opts);
    auto* curves = app.add_subcommand("curves", "learned-function curves over [0, 2]");
    add_common(curves, curves_opts);
    curves->add_flag("--svg", svg, "also render minimal SVG line charts");
    auto* theory = app.add_subcommand("theory", "kernel-regime diagnostics suite");
    add_common(theory, theory_opts);
    auto* copycat = app.add_subcommand("copycat", "copycat shortcut comparison suite");
    add_common(copycat, copycat_opts);
    auto* ablate = app.add_subcommand("ablate", "fusion/stop-gradient/depth ablation grid");
    add_common(ablate, ablate_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (toy->parsed()) {
            const json j = load_config(toy_opts);
            ToyConfig cfg;
            maybe(j, "n", cfg.n);
            maybe(j, "noise", cfg.noise);
            maybe(j, "grid", cfg.grid);
            maybe(j, "width", cfg.width);
            maybe(j, "init_scale", cfg.init_scale);
            maybe(j, "step_size", cfg.step_size);
            maybe(j, "steps", cfg.steps);
            maybe(j, "seed", cfg.seed);
            if (toy_opts.seed) cfg.seed = toy_opts.seed;
            const RmseTable table = run_toy_table(cfg);
            emit(toy_opts, "toy_table", rmse_table_csv(table), rmse_table_json(table));
            std::cout << rmse_table_csv(table);
        } else if (curves->parsed()) {
            const json j = load_config(curves_opts);
            CurvesConfig cfg;
            maybe(j, "n", cfg.n);
            maybe(j, "noise", cfg.noise);
            maybe(j, "width", cfg.width);
            maybe(j, "step_size", cfg.step_size);
            maybe(j, "grid", cfg.grid);
            maybe(j, "checkpoints", cfg.checkpoints);
            maybe(j, "seed", cfg.seed);
            if (curves_opts.seed) cfg.seed = curves_opts.seed;
            for (ZetaTeacher z : {ZetaTeacher::Zero, ZetaTeacher::X4, ZetaTeacher::X5}) {
                const CurveSet c = run_learned_curve(cfg, z);
                const std::string tag = z == ZetaTeacher::Zero ? "zeta0"
                                        : z == ZetaTeacher::X4 ? "zeta_x4"
                                                               : "zeta_x5";
                write_file_atomic(fs::path(curves_opts.out_dir) / ("curves_" + tag + ".csv"),
                                  curve_csv(c));
                if (svg)
                    write_file_atomic(fs::path(curves_opts.out_dir) / ("curves_" + tag + ".svg"),
                                      curve_svg(c));
            }
            std::cout << "curves written to " << curves_opts.out_dir << "\n";
        } else if (theory->parsed()) {
            const json j = load_config(theory_opts);
            TheoryConfig cfg;
            maybe(j, "gap_dims", cfg.gap_dims);
            maybe(j, "gap_n", cfg.gap_n);
            maybe(j, "gap_seeds", cfg.gap_seeds);
            maybe(j, "traj_instances", cfg.traj_instances);
            maybe(j, "thm_seeds", cfg.thm_seeds);
            maybe(j, "seed", cfg.seed);
            if (theory_opts.seed) cfg.seed = theory_opts.seed;
            const TheoryReport rep = run_theory_suite(cfg);
            emit(theory_opts, "theory_report", "", rep.details);
            std::cout << rep.details.dump(2) << "\n";
            if (!rep.all_pass) return 2;
        } else if (copycat->parsed()) {
            const json j = load_config(copycat_opts);
            CopycatConfig cfg;
            maybe(j, "train_episodes", cfg.train_episodes);
            maybe(j, "eval_episodes", cfg.eval_episodes);
            maybe(j, "T", cfg.T);
            maybe(j, "H", cfg.H);
            maybe(j, "obs_noise", cfg.obs_noise);
            maybe(j, "moving_threshold", cfg.moving_threshold);
            maybe(j, "steps", cfg.steps);
            maybe(j, "warm_steps", cfg.warm_steps);
            maybe(j, "seeds", cfg.seeds);
            maybe(j, "seed", cfg.seed);
            if (copycat_opts.seed) cfg.seed = copycat_opts.seed;
            const CopycatReport rep = run_copycat_suite(cfg);
            emit(copycat_opts, "copycat_report", copycat_report_csv(rep),
                 copycat_report_json(rep));
            std::cout << copycat_report_csv(rep);
            if (!rep.direction_pass) return 2;
        } else if (ablate->parsed()) {
            const json j = load_config(ablate_opts);
            AblationConfig cfg;
            maybe(j, "n", cfg.n);
            maybe(j, "noise", cfg.noise);
            maybe(j, "steps", cfg.steps);
            maybe(j, "step_size", cfg.step_size);
            maybe(j, "seeds", cfg.seeds);
            maybe(j, "seed", cfg.seed);
            if (ablate_opts.seed) cfg.seed = ablate_opts.seed;
            const auto cells = run_ablations(cfg);
            json meta = {{"note", "depth ablation maps the late/early feature choice to "
                                  "output vs first-hidden-layer priming variables"}};
            json jcells = json::array();
            for (const auto& c : cells)
                jcells.push_back({{"fusion", fusion_name(c.fusion)},
                                  {"stop_gradient", c.stop_gradient},
                                  {"zeta_source", c.zeta_from_output ? "output" : "hidden0"},
                                  {"median_iid_rmse", c.median_iid_rmse},
                                  {"median_ood_rmse", c.median_ood_rmse}});
            emit(ablate_opts, "ablation_grid", ablation_csv(cells),
                 json{{"metadata", meta}, {"cells", jcells}});
            std::cout << ablation_csv(cells);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
