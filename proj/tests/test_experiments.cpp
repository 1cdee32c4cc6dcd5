#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "primelab/experiments.hpp"

using namespace primelab;

TEST_CASE("output helpers") {
    CHECK(format_g(0.5) == "0.5");
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
    CHECK_THROWS_AS(median({}), std::invalid_argument);

    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "primelab_exp_test";
    const fs::path file = dir / "a.txt";
    write_file_atomic(file, "hello\n");
    std::ifstream is(file);
    std::string line;
    std::getline(is, line);
    CHECK(line == "hello");
    CHECK(!fs::exists(file.string() + ".tmp"));
    fs::remove_all(dir);
}

TEST_CASE("zeta teacher values") {
    CHECK(zeta_teacher_value(ZetaTeacher::Zero, 3.0) == 0.0);
    CHECK(zeta_teacher_value(ZetaTeacher::X4, 2.0) == 16.0);
    CHECK(zeta_teacher_value(ZetaTeacher::X5, 2.0) == 32.0);
}

TEST_CASE("toy_rmse against a hand-built exact model") {
    // linear read-out f(x, zeta) = 2 x + 1.5 zeta reproduces f1 exactly when
    // zeta carries x^5
    Mlp exact;
    MlpLayer layer;
    layer.W.resize(2, 1);
    layer.W << 2.0, 1.5;
    layer.b = Vector::Zero(1);
    layer.linear = true;
    exact.layers.push_back(layer);

    CHECK(toy_rmse(exact, ZetaTeacher::X5, ToyFunction::F1, 0.0, 1.0, 128) <= 1e-12);
    CHECK(toy_rmse(exact, ZetaTeacher::X5, ToyFunction::F1, 1.0, 2.0, 128) <= 1e-12);

    // against f2 the residual is 1.5 (x^5 - x^4); compare to a direct sum
    const int grid = 128;
    double acc = 0.0;
    for (int i = 0; i < grid; ++i) {
        const double x = 1.0 + (i + 0.5) / grid;
        const double r = 1.5 * (std::pow(x, 5) - std::pow(x, 4));
        acc += r * r;
    }
    const double oracle = std::sqrt(acc / grid);
    CHECK(toy_rmse(exact, ZetaTeacher::X5, ToyFunction::F2, 1.0, 2.0, grid) ==
          doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("toy table smoke run fits in-distribution") {
    ToyConfig cfg;
    cfg.n = 200;
    cfg.width = 64;
    cfg.steps = 3000;
    cfg.grid = 128;
    const RmseTable table = run_toy_table(cfg);
    REQUIRE(table.rows.size() == 3);
    for (const auto& r : table.rows) {
        CHECK(std::isfinite(r.iid_f1));
        CHECK(std::isfinite(r.ood_f1));
        CHECK(std::isfinite(r.ood_f2));
        CHECK(r.iid_f1 < 0.5);  // fits the training region coarsely
    }
    const std::string csv = rmse_table_csv(table);
    CHECK(csv.substr(0, 5) == "zeta,");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    const json j = rmse_table_json(table);
    CHECK(j["rows"].size() == 3);
}

TEST_CASE("learned curves start at exactly zero and track data later") {
    CurvesConfig cfg;
    cfg.n = 300;
    cfg.width = 128;
    cfg.checkpoints = {0, 500};
    cfg.grid = 51;
    const CurveSet c = run_learned_curve(cfg, ZetaTeacher::Zero);
    REQUIRE(c.curves.size() == 2);
    CHECK(c.curves[0].first == 0);
    CHECK(c.curves[0].second.cwiseAbs().maxCoeff() == 0.0);  // symmetric init
    CHECK(c.curves[1].second.cwiseAbs().maxCoeff() > 0.1);
    CHECK(c.xs(0) == 0.0);
    CHECK(c.xs(cfg.grid - 1) == doctest::Approx(2.0));

    const std::string csv = curve_csv(c);
    CHECK(csv.find("yhat_step500") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == cfg.grid + 1);
    const std::string svg = curve_svg(c);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
}

TEST_CASE("theory suite passes its analytic sections at reduced scale") {
    TheoryConfig cfg;
    cfg.traj_instances = 5;
    cfg.gap_dims = {16, 64};
    cfg.gap_n = 128;
    cfg.gap_seeds = 3;
    cfg.e_ts = {2, 20};
    cfg.conc_n = 2500;
    cfg.conc_d = 8;
    cfg.conc_trials = 5;
    cfg.thm_d = 16;
    cfg.thm_n = 256;
    cfg.thm_m = 64;
    cfg.thm_seeds = 1;
    const TheoryReport rep = run_theory_suite(cfg);
    CHECK(rep.details["trajectory_equivalence"]["pass"].get<bool>());
    CHECK(rep.details["e_lipschitz"]["pass"].get<bool>());
    CHECK(rep.details["xtx_concentration"]["pass"].get<bool>());
    CHECK(rep.details["kernel_gap_ladder"]["rows"].size() == 2);
    CHECK(rep.details.contains("theorem_direction"));
}

TEST_CASE("copycat single-seed smoke run") {
    CopycatConfig cfg;
    cfg.train_episodes = 6;
    cfg.eval_episodes = 3;
    cfg.T = 80;
    cfg.steps = 800;
    cfg.warm_steps = 500;
    cfg.batch = 128;
    const CopycatSeedResult r = run_copycat_once(cfg, 5);
    for (double v : {r.vanilla_flip, r.primenet_flip, r.keyonly_flip}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    for (double v : {r.vanilla_cp_mse, r.primenet_cp_mse, r.keyonly_cp_mse,
                     r.mean_zeta_effect_changepoints})
        CHECK(std::isfinite(v));
    CopycatReport rep;
    rep.per_seed.push_back(r);
    const std::string csv = copycat_report_csv(rep);
    CHECK(csv.find("vanilla_flip") != std::string::npos);
    CHECK(copycat_report_json(rep)["rows"].size() == 1);
}

TEST_CASE("ablation grid covers all twelve cells") {
    AblationConfig cfg;
    cfg.n = 128;
    cfg.steps = 300;
    cfg.seeds = 1;
    const auto cells = run_ablations(cfg);
    REQUIRE(cells.size() == 12);
    int penultimate = 0;
    for (const auto& c : cells) {
        CHECK(std::isfinite(c.median_iid_rmse));
        CHECK(std::isfinite(c.median_ood_rmse));
        if (c.fusion == Fusion::PenultimateConcat) ++penultimate;
    }
    CHECK(penultimate == 4);
    const std::string csv = ablation_csv(cells);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
}
