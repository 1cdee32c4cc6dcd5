#ifndef PRIMELAB_EXPERIMENTS_HPP
#define PRIMELAB_EXPERIMENTS_HPP

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "primelab/matrix.hpp"
#include "primelab/nnet.hpp"
#include "primelab/ntklin.hpp"
#include "primelab/priming.hpp"
#include "primelab/rng.hpp"
#include "primelab/synthdata.hpp"

namespace primelab {

using nlohmann::json;

// ---- output helpers ---------------------------------------------------

inline std::string format_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

// Write-temp-then-rename so partially written outputs are never observed.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        require(os.good(), "write_file_atomic: cannot open " + tmp.string());
        os << content;
    }
    std::filesystem::rename(tmp, path);
}

inline double median(std::vector<double> v) {
    require(!v.empty(), "median of empty vector");
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size() / 2;
    return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

// ---- toy 1-D regression table -----------------------------------------

enum class ZetaTeacher { Zero, X4, X5 };

inline const char* zeta_teacher_name(ZetaTeacher z) {
    switch (z) {
        case ZetaTeacher::Zero: return "0";
        case ZetaTeacher::X4: return "x^4";
        case ZetaTeacher::X5: return "x^5";
    }
    return "?";
}

inline double zeta_teacher_value(ZetaTeacher z, double x) {
    switch (z) {
        case ZetaTeacher::Zero: return 0.0;
        case ZetaTeacher::X4: return x * x * x * x;
        case ZetaTeacher::X5: return x * x * x * x * x;
    }
    return 0.0;
}

// Width / step size / step count / init scale reproduce the qualitative table
// at desk scale. The small initialization scale matters: it puts training in
// the rich (feature-learning) regime whose low-norm bias picks the sparse
// solution 1.5*zeta + 2x, which is what extrapolates out-of-distribution.
struct ToyConfig {
    int n = 1000;
    double noise = 0.1;
    double train_lo = 0.0, train_hi = 1.0;
    double ood_lo = 1.0, ood_hi = 2.0;
    int grid = 512;  // evaluation points per region
    int width = 256;
    Activation activation = Activation::Relu;
    double init_scale = 0.1;  // multiplier on the He initialization
    double step_size = 1e-2;
    long long steps = 3500;
    std::uint64_t seed = 2;
};

struct RmseRow {
    ZetaTeacher zeta;
    double iid_f1, iid_f2, ood_f1, ood_f2;
};

struct RmseTable {
    std::vector<RmseRow> rows;
};

// Trains one teacher-primed toy model on f1 data and returns it together
// with its loss trace.
inline Mlp train_toy_model(const ToyConfig& cfg, ZetaTeacher zeta, TrainTrace* trace = nullptr) {
    SyntheticDataset ds = gen_toy_regression(cfg.n, cfg.train_lo, cfg.train_hi, ToyFunction::F1,
                                             cfg.noise, cfg.seed);
    Matrix X(cfg.n, 2);
    Matrix Y(cfg.n, 1);
    for (int i = 0; i < cfg.n; ++i) {
        X(i, 0) = ds.inputs(i, 0);
        X(i, 1) = zeta_teacher_value(zeta, ds.inputs(i, 0));
        Y(i, 0) = ds.targets(i);
    }
    Mlp mlp = make_mlp({2, cfg.width, 1}, cfg.activation, cfg.seed + 100 * (1 + static_cast<int>(zeta)));
    for (auto& layer : mlp.layers) layer.W *= cfg.init_scale;
    TrainConfig tc;
    tc.step_size = cfg.step_size;
    tc.steps = cfg.steps;
    tc.seed = cfg.seed;
    TrainTrace t = train_sgd(mlp, X, Y, tc);
    if (trace) *trace = std::move(t);
    return mlp;
}

// RMSE of the trained model against a reference curve on a dense uniform grid
// over [lo, hi]; at evaluation the priming input carries the same teacher
// function of x that training used. The reference functions are defined with
// their additive observation noise, so a seeded draw is added to the
// reference values when noise > 0 (pass noise = 0 for the noise-free curve).
inline double toy_rmse(const Mlp& mlp, ZetaTeacher zeta, ToyFunction ref, double lo, double hi,
                       int grid, double noise = 0.0, std::uint64_t eval_seed = 0) {
    Matrix X(grid, 2);
    for (int i = 0; i < grid; ++i) {
        const double x = lo + (hi - lo) * (i + 0.5) / grid;
        X(i, 0) = x;
        X(i, 1) = zeta_teacher_value(zeta, x);
    }
    const Matrix Yhat = mlp_forward(mlp, X);
    SplitRng rng(eval_seed, 15);
    double acc = 0.0;
    for (int i = 0; i < grid; ++i) {
        const double eps = noise > 0.0 ? noise * rng.normal() : 0.0;
        const double r = Yhat(i, 0) - (toy_reference(ref, X(i, 0)) + eps);
        acc += r * r;
    }
    return std::sqrt(acc / grid);
}

inline RmseTable run_toy_table(const ToyConfig& cfg) {
    RmseTable table;
    int cell = 0;
    for (ZetaTeacher z : {ZetaTeacher::Zero, ZetaTeacher::X4, ZetaTeacher::X5}) {
        const Mlp mlp = train_toy_model(cfg, z);
        auto cell_rmse = [&](ToyFunction ref, double lo, double hi) {
            return toy_rmse(mlp, z, ref, lo, hi, cfg.grid, cfg.noise, cfg.seed * 64 + cell++);
        };
        RmseRow row;
        row.zeta = z;
        row.iid_f1 = cell_rmse(ToyFunction::F1, cfg.train_lo, cfg.train_hi);
        row.iid_f2 = cell_rmse(ToyFunction::F2, cfg.train_lo, cfg.train_hi);
        row.ood_f1 = cell_rmse(ToyFunction::F1, cfg.ood_lo, cfg.ood_hi);
        row.ood_f2 = cell_rmse(ToyFunction::F2, cfg.ood_lo, cfg.ood_hi);
        table.rows.push_back(row);
    }
    return table;
}

inline std::string rmse_table_csv(const RmseTable& table) {
    std::ostringstream os;
    os << "zeta,iid_f1,iid_f2,ood_f1,ood_f2\n";
    for (const auto& r : table.rows)
        os << zeta_teacher_name(r.zeta) << "," << format_g(r.iid_f1) << "," << format_g(r.iid_f2)
           << "," << format_g(r.ood_f1) << "," << format_g(r.ood_f2) << "\n";
    return os.str();
}

inline json rmse_table_json(const RmseTable& table) {
    json rows = json::array();
    for (const auto& r : table.rows)
        rows.push_back({{"zeta", zeta_teacher_name(r.zeta)},
                        {"iid_f1", r.iid_f1},
                        {"iid_f2", r.iid_f2},
                        {"ood_f1", r.ood_f1},
                        {"ood_f2", r.ood_f2}});
    return {{"table", "toy_rmse"}, {"rows", rows}};
}

// ---- learned-function curves ------------------------------------------

struct CurvesConfig {
    int n = 1000;
    double noise = 0.1;
    int width = 512;  // two-layer model width (symmetric init)
    double step_size = 0.5;
    std::vector<long long> checkpoints = {0, 200, 2000, 20000};
    int grid = 201;  // over [0, 2], endpoints included
    std::uint64_t seed = 1;
};

struct CurveSet {
    ZetaTeacher zeta;
    Vector xs;
    std::vector<std::pair<long long, Vector>> curves;  // per checkpoint
};

inline CurveSet run_learned_curve(const CurvesConfig& cfg, ZetaTeacher zeta) {
    SyntheticDataset ds =
        gen_toy_regression(cfg.n, 0.0, 1.0, ToyFunction::F1, cfg.noise, cfg.seed);
    Matrix X(cfg.n, 2);
    Vector y(cfg.n);
    for (int i = 0; i < cfg.n; ++i) {
        X(i, 0) = ds.inputs(i, 0);
        X(i, 1) = zeta_teacher_value(zeta, ds.inputs(i, 0));
        y(i) = ds.targets(i);
    }
    TwoLayerNet net = symmetric_init(2, cfg.width, cfg.seed + 7);
    CurveSet out;
    out.zeta = zeta;
    out.xs.resize(cfg.grid);
    Matrix G(cfg.grid, 2);
    for (int i = 0; i < cfg.grid; ++i) {
        const double x = 2.0 * i / (cfg.grid - 1);
        out.xs(i) = x;
        G(i, 0) = x;
        G(i, 1) = zeta_teacher_value(zeta, x);
    }
    long long done = 0;
    for (long long cp : cfg.checkpoints) {
        require(cp >= done, "run_learned_curve: checkpoints must be non-decreasing");
        if (cp > done) {
            TrainConfig tc;
            tc.step_size = cfg.step_size;
            tc.steps = cp - done;
            tc.seed = cfg.seed;
            train_sgd(net, X, y, tc);
            done = cp;
        }
        out.curves.emplace_back(cp, forward_batch(net, G));
    }
    return out;
}

inline std::string curve_csv(const CurveSet& c) {
    std::ostringstream os;
    os << "x";
    for (const auto& [cp, _] : c.curves) os << ",yhat_step" << cp;
    os << ",f1,f2\n";
    for (int i = 0; i < c.xs.size(); ++i) {
        os << format_g(c.xs(i));
        for (const auto& [_, v] : c.curves) os << "," << format_g(v(i));
        os << "," << format_g(toy_reference(ToyFunction::F1, c.xs(i))) << ","
           << format_g(toy_reference(ToyFunction::F2, c.xs(i))) << "\n";
    }
    return os.str();
}

// Minimal line chart for a curve set; final checkpoint plus references.
inline std::string curve_svg(const CurveSet& c) {
    const double w = 640, h = 400, pad = 40;
    double ymin = 0, ymax = 1;
    auto upd = [&](double v) { ymin = std::min(ymin, v); ymax = std::max(ymax, v); };
    for (int i = 0; i < c.xs.size(); ++i) {
        upd(c.curves.back().second(i));
        upd(toy_reference(ToyFunction::F1, c.xs(i)));
        upd(toy_reference(ToyFunction::F2, c.xs(i)));
    }
    auto px = [&](double x) { return pad + (w - 2 * pad) * x / 2.0; };
    auto py = [&](double y) { return h - pad - (h - 2 * pad) * (y - ymin) / (ymax - ymin); };
    auto polyline = [&](auto f, const char* color) {
        std::ostringstream os;
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
        for (int i = 0; i < c.xs.size(); ++i)
            os << px(c.xs(i)) << "," << py(f(i)) << " ";
        os << "\"/>\n";
        return os.str();
    };
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << polyline([&](int i) { return toy_reference(ToyFunction::F1, c.xs(i)); }, "#888888");
    os << polyline([&](int i) { return toy_reference(ToyFunction::F2, c.xs(i)); }, "#bbbbbb");
    os << polyline([&](int i) { return c.curves.back().second(i); }, "#cc3333");
    os << "<text x=\"" << pad << "\" y=\"20\">zeta=" << zeta_teacher_name(c.zeta)
       << " (red: trained model, grays: references)</text>\n</svg>\n";
    return os.str();
}

// ---- theory suite ------------------------------------------------------

struct TheoryConfig {
    // trajectory equivalence
    int traj_instances = 50;
    std::vector<long long> traj_steps = {1, 7, 64, 1000};
    // kernel-gap ladder
    std::vector<int> gap_dims = {32, 64, 128, 256};
    int gap_n = 512;
    int gap_seeds = 5;
    double gap_alpha = 0.2;  // m = ceil(d^1.2), rounded up to even
    // e(x) bound
    std::vector<long long> e_ts = {2, 5, 20, 100};
    int e_grid = 20000;
    // concentration
    int conc_n = 4000, conc_d = 20, conc_trials = 20;
    // theorem direction
    int thm_d = 32, thm_n = 2048, thm_m = 1024, thm_seeds = 5;
    double thm_alpha = 0.2;
    std::uint64_t seed = 1;
};

struct TheoryReport {
    json details;
    bool all_pass = true;
};

// Iterative full-batch GD oracle used for trajectory comparison.
inline Vector iterative_gd(const Matrix& X, const Vector& Y, double step, long long t) {
    Vector theta = Vector::Zero(X.cols());
    const double s = step / static_cast<double>(X.rows());
    for (long long k = 0; k < t; ++k) theta += s * (X.transpose() * (Y - X * theta));
    return theta;
}

inline TheoryReport run_theory_suite(const TheoryConfig& cfg) {
    TheoryReport rep;
    json& out = rep.details;

    // trajectory-formula equivalence against explicit GD
    {
        double worst = 0.0;
        SplitRng rng(cfg.seed, 30);
        for (int inst = 0; inst < cfg.traj_instances; ++inst) {
            for (Regime regime : {Regime::Overparam, Regime::Underparam}) {
                const int n = regime == Regime::Overparam ? 6 + inst % 5 : 20 + inst % 9;
                const int p = regime == Regime::Overparam ? 14 + inst % 7 : 4 + inst % 5;
                Matrix X(n, p);
                Vector Y(n);
                for (int i = 0; i < n; ++i) {
                    for (int j = 0; j < p; ++j) X(i, j) = rng.normal();
                    Y(i) = rng.normal();
                }
                const double lam_max = spectral_norm(X * X.transpose() / static_cast<double>(n));
                TrajectoryConfig tc;
                tc.regime = regime;
                tc.step_size = 0.9 / lam_max;
                for (long long t : cfg.traj_steps) {
                    tc.steps = t;
                    const Vector closed = gd_trajectory_params(X, Y, tc);
                    const Vector iter = iterative_gd(X, Y, tc.step_size, t);
                    const double rel = (closed - iter).norm() / std::max(1e-300, iter.norm());
                    worst = std::max(worst, rel);
                }
            }
        }
        const bool pass = worst <= 1e-8;
        out["trajectory_equivalence"] = {{"max_relative_deviation", worst}, {"pass", pass}};
        rep.all_pass = rep.all_pass && pass;
    }

    // kernel-gap scaling ladder
    {
        const ActivationMoments mom = activation_moments(Activation::Relu, 0, 0);
        json ladder = json::array();
        std::vector<double> medians;
        for (int d : cfg.gap_dims) {
            int m = static_cast<int>(std::ceil(std::pow(d, 1.0 + cfg.gap_alpha)));
            if (m % 2) ++m;
            std::vector<double> gaps, cross;
            for (int s = 0; s < cfg.gap_seeds; ++s) {
                const std::uint64_t seed = cfg.seed * 1000 + 17 * d + s;
                LinearGroundTruth truth;
                truth.beta_star = Vector::Zero(d);
                truth.covariance = Matrix::Identity(d, d);
                const SyntheticDataset dsx = gen_subgaussian_linear(cfg.gap_n, d, truth, seed);
                const SyntheticDataset dsz = gen_subgaussian_linear(cfg.gap_n, d, truth, seed + 991);
                const TwoLayerNet net = symmetric_init(d, m, seed + 5);
                const KernelGap gap =
                    kernel_gap(net, dsx.inputs, dsz.inputs, mom, truth.covariance);
                gaps.push_back(gap.train_gap / cfg.gap_n);
                cross.push_back(gap.cross_gap / cfg.gap_n);
            }
            medians.push_back(median(gaps));
            ladder.push_back({{"d", d},
                              {"m", m},
                              {"median_train_gap_per_n", median(gaps)},
                              {"median_cross_gap_per_n", median(cross)},
                              {"train_gaps_per_n", gaps}});
        }
        bool pass = true;
        for (std::size_t i = 1; i < medians.size(); ++i) pass = pass && medians[i] < medians[i - 1];
        out["kernel_gap_ladder"] = {{"rows", ladder}, {"strictly_decreasing", pass}, {"pass", pass}};
        rep.all_pass = rep.all_pass && pass;
    }

    // e(x) Lipschitz bound
    {
        json rows = json::array();
        bool pass = true;
        for (long long t : cfg.e_ts) {
            const double slope = e_lipschitz_check(t, cfg.e_grid);
            const double bound = static_cast<double>(t) * static_cast<double>(t - 1) * (1.0 + 1e-6);
            const bool ok = slope <= bound;
            rows.push_back({{"t", t}, {"max_slope", slope}, {"bound", bound}, {"pass", ok}});
            pass = pass && ok;
        }
        out["e_lipschitz"] = {{"rows", rows}, {"pass", pass}};
        rep.all_pass = rep.all_pass && pass;
    }

    // eigenvalue concentration of X^T X / n
    {
        const ConcentrationReport conc = xtx_concentration_check(
            cfg.conc_n, cfg.conc_d, Matrix::Identity(cfg.conc_d, cfg.conc_d), cfg.conc_trials,
            cfg.seed + 3);
        bool pass = true;
        for (std::size_t i = 0; i < conc.min_eigs.size(); ++i)
            pass = pass && conc.min_eigs[i] >= 0.8 && conc.max_eigs[i] <= 1.2;
        out["xtx_concentration"] = {{"min_eigs", conc.min_eigs},
                                    {"max_eigs", conc.max_eigs},
                                    {"fraction_within", conc.fraction_within},
                                    {"pass", pass}};
        rep.all_pass = rep.all_pass && pass;
    }

    // theorem direction at desk scale
    {
        json rows = json::array();
        int good_direction = 0;
        bool train_ok = true;
        for (int s = 0; s < cfg.thm_seeds; ++s) {
            const TheoremReport t =
                theorem_c1c2_check(cfg.thm_d, cfg.thm_n, cfg.thm_m, cfg.thm_alpha, cfg.seed + s);
            const bool dir = t.dist_h < 0.5 * t.dist_s;
            const bool c1 = t.train_residual < 2.0 * t.noise + 0.1;
            good_direction += dir ? 1 : 0;
            train_ok = train_ok && c1;
            rows.push_back({{"seed", cfg.seed + s},
                            {"train_residual", t.train_residual},
                            {"dist_h", t.dist_h},
                            {"dist_s", t.dist_s},
                            {"s_separation", t.s_separation},
                            {"t", t.t},
                            {"c1_pass", c1},
                            {"c2_direction", dir}});
        }
        const bool pass = train_ok && good_direction >= cfg.thm_seeds - 1;
        out["theorem_direction"] = {{"rows", rows},
                                    {"c2_direction_seeds", good_direction},
                                    {"pass", pass}};
        rep.all_pass = rep.all_pass && pass;
    }

    out["all_pass"] = rep.all_pass;
    return rep;
}

// ---- copycat suite -----------------------------------------------------

struct CopycatConfig {
    int train_episodes = 24;
    int eval_episodes = 12;
    int T = 160;
    int H = 8;
    double obs_noise = 0.1;
    double moving_threshold = 0.2;
    long long steps = 400;        // joint phase is early-stopped before the
                                  // main network can recover the cue parity
    long long warm_steps = 4000;  // priming-only phase before joint training
    int batch = 256;
    double step_size = 0.05;
    int seeds = 5;
    std::uint64_t seed = 1;
};

struct CopycatSeedResult {
    std::uint64_t seed;
    double vanilla_flip, primenet_flip, keyonly_flip;
    double vanilla_cp_mse, primenet_cp_mse, keyonly_cp_mse;
    double mean_zeta_effect_changepoints;
};

struct CopycatReport {
    std::vector<CopycatSeedResult> per_seed;
    bool direction_pass = true;  // primenet < vanilla at every seed, keyonly = 0
};

inline double subset_mse(const Vector& pred, const Vector& target, const std::vector<char>& mask) {
    double acc = 0.0;
    int cnt = 0;
    for (int i = 0; i < pred.size(); ++i)
        if (mask[i]) {
            const double r = pred(i) - target(i);
            acc += r * r;
            ++cnt;
        }
    return cnt ? acc / cnt : 0.0;
}

inline CopycatSeedResult run_copycat_once(const CopycatConfig& cfg, std::uint64_t seed) {
    const int d_obs = kCopycatObsDim;
    const SequenceDataset train_seq =
        gen_copycat_sequences(cfg.train_episodes, cfg.T, cfg.H, cfg.obs_noise, seed);
    const SequenceDataset eval_seq =
        gen_copycat_sequences(cfg.eval_episodes, cfg.T, cfg.H, cfg.obs_noise, seed + 7919);
    const HistoryDataset train = make_history_dataset(train_seq, cfg.H);
    const HistoryDataset eval = make_history_dataset(eval_seq, cfg.H);
    const Matrix Ytrain = train.targets;

    TrainConfig tc;
    tc.step_size = cfg.step_size;
    tc.steps = cfg.steps;
    tc.batch = cfg.batch;
    tc.seed = seed;

    // vanilla history BC
    Mlp vanilla = make_mlp({cfg.H * d_obs, 64, 64, 1}, Activation::Relu, seed + 1);
    train_sgd(vanilla, train.inputs, Ytrain, tc);

    // key-input-only (most recent frame)
    KeyInputSpec key;
    key.kind = KeyInputSpec::Kind::LastFrame;
    key.history = cfg.H;
    key.frame_dim = d_obs;
    Mlp keyonly = make_mlp({d_obs, 32, 1}, Activation::Relu, seed + 2);
    train_sgd(keyonly, extract_key_batch(key, train.inputs), Ytrain, tc);

    // PrimeNet: priming on the last frame, penultimate fusion, stop-gradient
    PrimeNetModel primenet = make_primenet(cfg.H * d_obs, key, {64}, {64, 64}, 1,
                                           Fusion::PenultimateConcat, true, Activation::Relu,
                                           seed + 3, {}, /*zeta_passthrough=*/true);
    // warm up the priming module alone so the priming variable is already
    // predictive when the main network starts fitting; the main network then
    // latches onto it instead of the cross-frame motion shortcut
    if (cfg.warm_steps > 0) {
        TrainConfig warm = tc;
        warm.steps = cfg.warm_steps;
        train_primenet(primenet, train.inputs, Ytrain, warm, 1.0, 1.0, /*train_main=*/false);
    }
    train_primenet(primenet, train.inputs, Ytrain, tc);

    CopycatSeedResult res;
    res.seed = seed;
    auto vanilla_pred = [&](const Matrix& X) { return Vector(mlp_forward(vanilla, X).col(0)); };
    auto keyonly_pred = [&](const Matrix& X) {
        return Vector(mlp_forward(keyonly, extract_key_batch(key, X)).col(0));
    };
    auto prime_pred = [&](const Matrix& X) {
        return Vector(forward_primed_batch(primenet, X).first.col(0));
    };
    res.vanilla_flip = flip_rate(vanilla_pred, eval.inputs, cfg.H, cfg.moving_threshold).flip_rate;
    res.keyonly_flip = flip_rate(keyonly_pred, eval.inputs, cfg.H, cfg.moving_threshold).flip_rate;
    res.primenet_flip = flip_rate(prime_pred, eval.inputs, cfg.H, cfg.moving_threshold).flip_rate;
    res.vanilla_cp_mse = subset_mse(vanilla_pred(eval.inputs), eval.targets, eval.changepoint);
    res.keyonly_cp_mse = subset_mse(keyonly_pred(eval.inputs), eval.targets, eval.changepoint);
    res.primenet_cp_mse = subset_mse(prime_pred(eval.inputs), eval.targets, eval.changepoint);

    // do(zeta) effect over {0, max action in training data} on change points
    const double zeta_hi = Ytrain.maxCoeff();
    const InterventionReport eff = zeta_effect(primenet, eval.inputs, 0.0, zeta_hi);
    double acc = 0.0;
    int cnt = 0;
    for (int i = 0; i < eff.effect_values.size(); ++i)
        if (eval.changepoint[i]) {
            acc += eff.effect_values(i);
            ++cnt;
        }
    res.mean_zeta_effect_changepoints = cnt ? acc / cnt : 0.0;
    return res;
}

inline CopycatReport run_copycat_suite(const CopycatConfig& cfg) {
    CopycatReport rep;
    for (int s = 0; s < cfg.seeds; ++s) {
        CopycatSeedResult r = run_copycat_once(cfg, cfg.seed + s);
        rep.direction_pass = rep.direction_pass && r.primenet_flip < r.vanilla_flip &&
                             r.keyonly_flip == 0.0;
        rep.per_seed.push_back(r);
    }
    return rep;
}

inline json copycat_report_json(const CopycatReport& rep) {
    json rows = json::array();
    for (const auto& r : rep.per_seed)
        rows.push_back({{"seed", r.seed},
                        {"vanilla_flip", r.vanilla_flip},
                        {"primenet_flip", r.primenet_flip},
                        {"keyonly_flip", r.keyonly_flip},
                        {"vanilla_changepoint_mse", r.vanilla_cp_mse},
                        {"primenet_changepoint_mse", r.primenet_cp_mse},
                        {"keyonly_changepoint_mse", r.keyonly_cp_mse},
                        {"mean_zeta_effect_changepoints", r.mean_zeta_effect_changepoints}});
    return {{"suite", "copycat"}, {"rows", rows}, {"direction_pass", rep.direction_pass}};
}

inline std::string copycat_report_csv(const CopycatReport& rep) {
    std::ostringstream os;
    os << "seed,vanilla_flip,primenet_flip,keyonly_flip,vanilla_cp_mse,primenet_cp_mse,"
          "keyonly_cp_mse,mean_zeta_effect_changepoints\n";
    for (const auto& r : rep.per_seed)
        os << r.seed << "," << format_g(r.vanilla_flip) << "," << format_g(r.primenet_flip) << ","
           << format_g(r.keyonly_flip) << "," << format_g(r.vanilla_cp_mse) << ","
           << format_g(r.primenet_cp_mse) << "," << format_g(r.keyonly_cp_mse) << ","
           << format_g(r.mean_zeta_effect_changepoints) << "\n";
    return os.str();
}

// ---- ablations ---------------------------------------------------------

struct AblationConfig {
    int n = 1000;
    double noise = 0.1;
    long long steps = 8000;
    double step_size = 5e-3;
    int seeds = 3;
    std::uint64_t seed = 1;
};

struct AblationCell {
    Fusion fusion;
    bool stop_gradient;
    bool zeta_from_output;
    double median_iid_rmse;
    double median_ood_rmse;
};

inline const char* fusion_name(Fusion f) {
    switch (f) {
        case Fusion::InputConcat: return "input_concat";
        case Fusion::MiddleConcat: return "middle_concat";
        case Fusion::PenultimateConcat: return "penultimate_concat";
    }
    return "?";
}

// Toy-scale ablation grid: the 1-D regression task with a *learned* priming
// module (key input = x itself). The ResNet-depth ablation maps to taking the
// priming variable from a hidden layer instead of the module output; that
// mapping is recorded in the report metadata.
inline std::vector<AblationCell> run_ablations(const AblationConfig& cfg) {
    std::vector<AblationCell> cells;
    for (Fusion fusion : {Fusion::InputConcat, Fusion::MiddleConcat, Fusion::PenultimateConcat}) {
        for (bool sg : {true, false}) {
            for (bool from_output : {true, false}) {
                std::vector<double> iid, ood;
                for (int s = 0; s < cfg.seeds; ++s) {
                    const std::uint64_t seed = cfg.seed + 31 * s;
                    SyntheticDataset ds =
                        gen_toy_regression(cfg.n, 0.0, 1.0, ToyFunction::F1, cfg.noise, seed);
                    Matrix X = ds.inputs;
                    Matrix Y = ds.targets;
                    ZetaSource src;
                    src.from_output = from_output;
                    src.hidden_layer = 0;
                    PrimeNetModel model =
                        make_primenet(1, KeyInputSpec{}, {16, 16}, {64, 64}, 1, fusion, sg,
                                      Activation::Relu, seed + 5, src);
                    TrainConfig tc;
                    tc.step_size = cfg.step_size;
                    tc.steps = cfg.steps;
                    tc.seed = seed;
                    train_primenet(model, X, Y, tc);
                    auto rmse_region = [&](double lo, double hi) {
                        const int grid = 256;
                        Matrix G(grid, 1);
                        for (int i = 0; i < grid; ++i) G(i, 0) = lo + (hi - lo) * (i + 0.5) / grid;
                        const Matrix P = forward_primed_batch(model, G).first;
                        double acc = 0.0;
                        for (int i = 0; i < grid; ++i) {
                            const double r = P(i, 0) - toy_reference(ToyFunction::F1, G(i, 0));
                            acc += r * r;
                        }
                        return std::sqrt(acc / grid);
                    };
                    iid.push_back(rmse_region(0.0, 1.0));
                    ood.push_back(rmse_region(1.0, 2.0));
                }
                cells.push_back({fusion, sg, from_output, median(iid), median(ood)});
            }
        }
    }
    return cells;
}

inline std::string ablation_csv(const std::vector<AblationCell>& cells) {
    std::ostringstream os;
    os << "fusion,stop_gradient,zeta_source,median_iid_rmse,median_ood_rmse\n";
    for (const auto& c : cells)
        os << fusion_name(c.fusion) << "," << (c.stop_gradient ? "on" : "off") << ","
           << (c.zeta_from_output ? "output" : "hidden0") << "," << format_g(c.median_iid_rmse)
           << "," << format_g(c.median_ood_rmse) << "\n";
    return os.str();
}

}  // namespace primelab

#endif  // PRIMELAB_EXPERIMENTS_HPP
