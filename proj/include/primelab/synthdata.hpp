#ifndef PRIMELAB_SYNTHDATA_HPP
#define PRIMELAB_SYNTHDATA_HPP

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "primelab/matrix.hpp"
#include "primelab/rng.hpp"

namespace primelab {

enum class Region { InDistribution, OutOfDistribution };
enum class GeneratorId { ToyRegression, SubgaussianLinear, ShortcutClassification, CopycatSequences };
enum class ToyFunction { F1, F2 };

struct SyntheticDataset {
    Matrix inputs;   // n x d
    Vector targets;  // n
    Region region = Region::InDistribution;
    GeneratorId generator = GeneratorId::ToyRegression;
    std::uint64_t seed = 0;
};

struct LinearGroundTruth {
    Vector beta_star;
    Matrix covariance;  // d x d, symmetric PSD, Tr = d
    double noise_scale = 0.0;
};

struct SequenceDataset {
    std::vector<Matrix> observations;  // per episode, T x d_obs
    std::vector<Matrix> actions;       // per episode, T x d_act
    int history_length = 1;
    double obs_noise = 0.0;
};

// The two reference polynomials of the 1-D toy task.
inline double toy_reference(ToyFunction fn, double x) {
    const double x2 = x * x;
    const double x4 = x2 * x2;
    return (fn == ToyFunction::F1 ? 1.5 * x4 * x : 1.5 * x4) + 2.0 * x;
}

inline SyntheticDataset gen_toy_regression(int n, double lo, double hi, ToyFunction fn,
                                           double noise, std::uint64_t seed,
                                           Region region = Region::InDistribution) {
    require(n > 0, "gen_toy_regression: empty dataset requested");
    require(std::isfinite(lo) && std::isfinite(hi) && lo < hi,
            "gen_toy_regression: region must be a finite interval");
    require(noise >= 0.0, "gen_toy_regression: negative noise");
    SplitRng rng(seed, 1);
    SyntheticDataset ds;
    ds.inputs.resize(n, 1);
    ds.targets.resize(n);
    for (int i = 0; i < n; ++i) {
        const double x = rng.uniform(lo, hi);
        ds.inputs(i, 0) = x;
        ds.targets(i) = toy_reference(fn, x) + (noise > 0.0 ? noise * rng.normal() : 0.0);
    }
    ds.region = region;
    ds.generator = GeneratorId::ToyRegression;
    ds.seed = seed;
    return ds;
}

// Symmetric PSD square root via the eigenbasis; throws if not PSD.
inline Matrix psd_sqrt(const Matrix& cov) {
    const SymmetricEigen eig = sym_eigen(cov);
    const double lam_max = std::max(1.0, eig.eigenvalues(0));
    require(eig.eigenvalues.minCoeff() >= -1e-10 * lam_max, "covariance not positive semidefinite");
    Vector root = eig.eigenvalues.cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors * root.asDiagonal() * eig.eigenvectors.transpose();
}

inline SyntheticDataset gen_subgaussian_linear(int n, int d, const LinearGroundTruth& truth,
                                               std::uint64_t seed,
                                               Region region = Region::InDistribution) {
    require(n >= 1 && d >= 1, "gen_subgaussian_linear: n and d must be positive");
    require(truth.beta_star.size() == d, "gen_subgaussian_linear: beta dimension mismatch");
    require(truth.covariance.rows() == d && truth.covariance.cols() == d,
            "gen_subgaussian_linear: covariance dimension mismatch");
    const Matrix root = psd_sqrt(truth.covariance);
    SplitRng rng(seed, 2);
    SyntheticDataset ds;
    ds.inputs.resize(n, d);
    ds.targets.resize(n);
    Vector u(d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) u(j) = rng.normal();
        ds.inputs.row(i) = (root * u).transpose();
        double eps = truth.noise_scale > 0.0 ? truth.noise_scale * rng.normal() : 0.0;
        ds.targets(i) = ds.inputs.row(i).dot(truth.beta_star) + eps;
    }
    ds.region = region;
    ds.generator = GeneratorId::SubgaussianLinear;
    ds.seed = seed;
    return ds;
}

// Inputs are [core block | spurious block]; the label is carried by the core
// block, the spurious block matches a label-aligned pattern with probability
// spurious_corr in distribution and 0.5 out of distribution.
inline constexpr int kShortcutCoreDim = 4;
inline constexpr int kShortcutSpuriousDim = 4;

inline SyntheticDataset gen_shortcut_classification(int n, double spurious_corr, Region region,
                                                    std::uint64_t seed) {
    require(n > 0, "gen_shortcut_classification: empty dataset requested");
    require(spurious_corr >= 0.0 && spurious_corr <= 1.0,
            "gen_shortcut_classification: spurious_corr must be a probability");
    SplitRng rng(seed, 3);
    const int d = kShortcutCoreDim + kShortcutSpuriousDim;
    SyntheticDataset ds;
    ds.inputs.resize(n, d);
    ds.targets.resize(n);
    const double p_align = (region == Region::InDistribution) ? spurious_corr : 0.5;
    for (int i = 0; i < n; ++i) {
        const double y = rng.uniform() < 0.5 ? -1.0 : 1.0;
        for (int j = 0; j < kShortcutCoreDim; ++j)
            ds.inputs(i, j) = y + 0.3 * rng.normal();
        const double align = rng.uniform() < p_align ? y : -y;
        for (int j = 0; j < kShortcutSpuriousDim; ++j)
            ds.inputs(i, kShortcutCoreDim + j) = align;
        ds.targets(i) = y;
    }
    ds.region = region;
    ds.generator = GeneratorId::ShortcutClassification;
    ds.seed = seed;
    return ds;
}

// Copycat sequences. A three-way command m_t in {-1, 0, +1} (drive
// backward, stop, drive forward) switches rarely and the signed expert
// action ramps toward it,
//   u_t = rho * u_{t-1} + (1 - rho) * level * m_t.
// The observation frame is o_t = (p_t, c1_t, c2_t): a position p_t that
// advances by step * u_t per tick, plus a two-channel cue that encodes the
// command as a signed parity, c1 = s, c2 = s * m_t, where the random sign s
// refreshes on command switches and occasionally in between. The speed is
// then a *linear* function of cross-frame displacement -- the easiest
// feature gradient descent can find -- and it
// collapses to zero when the newest frame is repeated through the whole
// history, making the input resemble a genuinely stopped segment (the
// copycat shortcut). The command cue is causally right under that
// intervention but hidden behind the c1 * c2 parity, so a jointly trained
// network starves its gradient in favor of the motion shortcut; a
// dedicated single-frame priming module is forced to extract it.
inline constexpr double kCopycatRho = 0.9;
inline constexpr double kCopycatSwitchRate = 0.03;
inline constexpr double kCopycatMovingLevel = 0.8;
inline constexpr double kCopycatStep = 0.04;
inline constexpr double kCopycatPosNoiseRatio = 0.05;  // position noise = ratio * obs_noise
inline constexpr double kCopycatCueNoiseRatio = 2.5;  // cue noise = ratio * obs_noise
inline constexpr double kCopycatSignRefreshRate = 0.1;
inline constexpr int kCopycatObsDim = 3;

inline SequenceDataset gen_copycat_sequences(int episodes, int T, int H, double obs_noise,
                                             std::uint64_t seed) {
    require(episodes > 0 && T > 0, "gen_copycat_sequences: empty dataset requested");
    require(T > H && H >= 1, "gen_copycat_sequences: requires T > H >= 1");
    require(obs_noise >= 0.0, "gen_copycat_sequences: negative noise");
    SequenceDataset out;
    out.history_length = H;
    out.obs_noise = obs_noise;
    SplitRng base(seed, 4);
    for (int e = 0; e < episodes; ++e) {
        SplitRng rng = base.split(static_cast<std::uint64_t>(e));
        Matrix obs(T, kCopycatObsDim);
        Matrix act(T, 1);
        int m = static_cast<int>(rng.uniform_int(3)) - 1;
        double u = kCopycatMovingLevel * m;
        double p = 2.0 * rng.uniform() - 1.0;
        double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        for (int t = 0; t < T; ++t) {
            const bool switched = rng.uniform() < kCopycatSwitchRate;
            if (switched) {
                // moving segments stop; stopped segments pick a direction
                m = (m != 0) ? 0 : (rng.uniform() < 0.5 ? -1 : 1);
            }
            if (switched || rng.uniform() < kCopycatSignRefreshRate)
                sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
            u = kCopycatRho * u + (1.0 - kCopycatRho) * kCopycatMovingLevel * m;
            // the position is observed before the current action takes
            // effect, so cross-frame motion reveals only past speeds; the
            // innovation toward the new command is visible in the cue alone
            obs(t, 0) =
                p + (obs_noise > 0.0 ? kCopycatPosNoiseRatio * obs_noise * rng.normal() : 0.0);
            p += kCopycatStep * u;
            obs(t, 1) = sign + (obs_noise > 0.0 ? kCopycatCueNoiseRatio * obs_noise * rng.normal() : 0.0);
            obs(t, 2) = sign * m + (obs_noise > 0.0 ? kCopycatCueNoiseRatio * obs_noise * rng.normal() : 0.0);
            act(t, 0) = u;
        }
        out.observations.push_back(std::move(obs));
        out.actions.push_back(std::move(act));
    }
    return out;
}

// Expert ramp update as a closed-form function of the previous action and a
// noise-free cue observation: the signed command is the product of the two
// cue channels.
inline double copycat_expert_update(double u_prev, double cue1_obs, double cue2_obs) {
    const double m = std::clamp(cue1_obs * cue2_obs, -1.0, 1.0);
    return kCopycatRho * u_prev + (1.0 - kCopycatRho) * kCopycatMovingLevel * m;
}

// Supervised view of a sequence dataset: rows stack H frames (oldest first)
// and the target is the action at the newest frame.
struct HistoryDataset {
    Matrix inputs;   // rows x (H * d_obs)
    Vector targets;  // action at the newest frame
    Vector prev_actions;
    std::vector<char> changepoint;  // |a_t - a_{t-1}| above threshold
};

inline HistoryDataset make_history_dataset(const SequenceDataset& seq, int H,
                                           double changepoint_delta = 0.02) {
    require(H >= 1, "make_history_dataset: H must be >= 1");
    int rows = 0;
    for (const auto& o : seq.observations) rows += std::max<int>(0, static_cast<int>(o.rows()) - H);
    require(rows > 0, "make_history_dataset: no usable rows");
    const int d_obs = static_cast<int>(seq.observations.front().cols());
    HistoryDataset ds;
    ds.inputs.resize(rows, H * d_obs);
    ds.targets.resize(rows);
    ds.prev_actions.resize(rows);
    ds.changepoint.resize(rows);
    int r = 0;
    for (std::size_t e = 0; e < seq.observations.size(); ++e) {
        const Matrix& obs = seq.observations[e];
        const Matrix& act = seq.actions[e];
        for (int t = H; t < obs.rows(); ++t) {
            for (int k = 0; k < H; ++k)
                ds.inputs.block(r, k * d_obs, 1, d_obs) = obs.row(t - H + 1 + k);
            ds.targets(r) = act(t, 0);
            ds.prev_actions(r) = act(t - 1, 0);
            ds.changepoint[r] = std::abs(act(t, 0) - act(t - 1, 0)) > changepoint_delta ? 1 : 0;
            ++r;
        }
    }
    return ds;
}

// ---- serialization ----------------------------------------------------

inline const char* region_name(Region r) {
    return r == Region::InDistribution ? "in_distribution" : "out_of_distribution";
}

inline void write_dataset_csv(const SyntheticDataset& ds, std::ostream& os) {
    for (int j = 0; j < ds.inputs.cols(); ++j) os << "x" << j << ",";
    os << "target,region\n";
    char buf[32];
    for (int i = 0; i < ds.inputs.rows(); ++i) {
        for (int j = 0; j < ds.inputs.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", ds.inputs(i, j));
            os << buf << ",";
        }
        std::snprintf(buf, sizeof(buf), "%.17g", ds.targets(i));
        os << buf << "," << region_name(ds.region) << "\n";
    }
}

inline SyntheticDataset read_dataset_csv(std::istream& is) {
    std::string line;
    require(static_cast<bool>(std::getline(is, line)), "read_dataset_csv: missing header");
    int cols = 0;
    for (char c : line)
        if (c == ',') ++cols;
    cols -= 1;  // header is x0..x{d-1},target,region
    require(cols >= 1, "read_dataset_csv: malformed header");
    std::vector<double> values;
    Region region = Region::InDistribution;
    int rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        for (int j = 0; j < cols + 1; ++j) {
            require(static_cast<bool>(std::getline(ss, cell, ',')), "read_dataset_csv: short row");
            values.push_back(std::stod(cell));
        }
        require(static_cast<bool>(std::getline(ss, cell, ',')), "read_dataset_csv: missing region");
        region = (cell == "out_of_distribution") ? Region::OutOfDistribution : Region::InDistribution;
        ++rows;
    }
    SyntheticDataset ds;
    ds.inputs.resize(rows, cols);
    ds.targets.resize(rows);
    ds.region = region;
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) ds.inputs(i, j) = values[i * (cols + 1) + j];
        ds.targets(i) = values[i * (cols + 1) + cols];
    }
    return ds;
}

inline void write_dataset_snapshot(const SyntheticDataset& ds, std::ostream& os) {
    const char magic[8] = {'P', 'L', 'D', 'S', '0', '0', '0', '1'};
    os.write(magic, 8);
    const std::int64_t rows = ds.inputs.rows(), cols = ds.inputs.cols();
    const std::int64_t region = static_cast<std::int64_t>(ds.region);
    const std::int64_t gen = static_cast<std::int64_t>(ds.generator);
    const std::int64_t seed = static_cast<std::int64_t>(ds.seed);
    os.write(reinterpret_cast<const char*>(&rows), 8);
    os.write(reinterpret_cast<const char*>(&cols), 8);
    os.write(reinterpret_cast<const char*>(&region), 8);
    os.write(reinterpret_cast<const char*>(&gen), 8);
    os.write(reinterpret_cast<const char*>(&seed), 8);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            const double v = ds.inputs(i, j);
            os.write(reinterpret_cast<const char*>(&v), 8);
        }
    for (int i = 0; i < rows; ++i) {
        const double v = ds.targets(i);
        os.write(reinterpret_cast<const char*>(&v), 8);
    }
}

inline SyntheticDataset read_dataset_snapshot(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    require(is.good() && std::string(magic, 4) == "PLDS", "read_dataset_snapshot: bad magic");
    std::int64_t rows, cols, region, gen, seed;
    is.read(reinterpret_cast<char*>(&rows), 8);
    is.read(reinterpret_cast<char*>(&cols), 8);
    is.read(reinterpret_cast<char*>(&region), 8);
    is.read(reinterpret_cast<char*>(&gen), 8);
    is.read(reinterpret_cast<char*>(&seed), 8);
    require(is.good() && rows >= 0 && cols >= 0, "read_dataset_snapshot: bad header");
    SyntheticDataset ds;
    ds.inputs.resize(rows, cols);
    ds.targets.resize(rows);
    ds.region = static_cast<Region>(region);
    ds.generator = static_cast<GeneratorId>(gen);
    ds.seed = static_cast<std::uint64_t>(seed);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) is.read(reinterpret_cast<char*>(&ds.inputs(i, j)), 8);
    for (int i = 0; i < rows; ++i) is.read(reinterpret_cast<char*>(&ds.targets(i)), 8);
    require(is.good(), "read_dataset_snapshot: truncated file");
    return ds;
}

}  // namespace primelab

#endif  // PRIMELAB_SYNTHDATA_HPP
