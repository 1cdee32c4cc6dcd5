#ifndef PRIMELAB_NTKLIN_HPP
#define PRIMELAB_NTKLIN_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "primelab/matrix.hpp"
#include "primelab/nnet.hpp"
#include "primelab/rng.hpp"

namespace primelab {

// ---- feature maps -----------------------------------------------------

enum class FeatureKind { Ntk, Lin };

struct FeatureMatrix {
    FeatureKind kind = FeatureKind::Lin;
    Matrix data;        // n x dims
    int input_dim = 0;  // d of the underlying samples
};

// zeta = E[sigma'(g)], nu_raw = E[g sigma'(g)] for g ~ N(0,1). The
// per-dataset factor sqrt(Tr(Sigma^2)/d) is applied in phi_lin.
struct ActivationMoments {
    double zeta = 0.0;
    double nu_raw = 0.0;
    Activation activation = Activation::Relu;
};

inline ActivationMoments activation_moments(Activation act, long long mc_samples,
                                            std::uint64_t seed) {
    ActivationMoments mom;
    mom.activation = act;
    if (act == Activation::Relu) {
        // sigma'(g) = 1{g>0}: E = 1/2 by symmetry, E[g 1{g>0}] = 1/sqrt(2 pi).
        mom.zeta = 0.5;
        mom.nu_raw = 0.3989422804014326779;
        return mom;
    }
    require(mc_samples >= 100000, "activation_moments: need >= 1e5 Monte Carlo samples");
    SplitRng rng(seed, 20);
    double sz = 0.0, sn = 0.0;
    for (long long i = 0; i < mc_samples; ++i) {
        const double g = rng.normal();
        const double dv = activate_deriv(act, g);
        sz += dv;
        sn += g * dv;
    }
    mom.zeta = sz / static_cast<double>(mc_samples);
    mom.nu_raw = sn / static_cast<double>(mc_samples);
    return mom;
}

// Scale factor sqrt(Tr(Sigma^2)/d) for the constant feature coordinate.
inline double nu_for_covariance(const ActivationMoments& mom, const Matrix& covariance) {
    const double tr2 = (covariance * covariance).trace();
    return mom.nu_raw * std::sqrt(tr2 / static_cast<double>(covariance.rows()));
}

// phi_lin(x) = (1/sqrt(d)) [zeta x ; nu], dims = d + 1.
inline FeatureMatrix phi_lin(const Matrix& X, const ActivationMoments& mom,
                             const Matrix& covariance) {
    require(X.cols() == covariance.rows() && covariance.rows() == covariance.cols(),
            "phi_lin: covariance shape mismatch");
    const int d = static_cast<int>(X.cols());
    const double inv_sd = 1.0 / std::sqrt(static_cast<double>(d));
    const double nu = nu_for_covariance(mom, covariance);
    FeatureMatrix f;
    f.kind = FeatureKind::Lin;
    f.input_dim = d;
    f.data.resize(X.rows(), d + 1);
    f.data.leftCols(d) = (mom.zeta * inv_sd) * X;
    f.data.col(d).setConstant(nu * inv_sd);
    return f;
}

// phi_ntk rows are the parameter gradients of the network at initialization
// (the lazy-regime surrogate), dims = m*d.
inline FeatureMatrix phi_ntk(const TwoLayerNet& net, const Matrix& X) {
    require(X.cols() == net.d, "phi_ntk: input dimension mismatch");
    FeatureMatrix f;
    f.kind = FeatureKind::Ntk;
    f.input_dim = net.d;
    f.data.resize(X.rows(), net.m * net.d);
    for (int i = 0; i < X.rows(); ++i)
        f.data.row(i) = grad_params(net, X.row(i).transpose()).transpose();
    return f;
}

inline Matrix gram(const FeatureMatrix& a, const FeatureMatrix& b) {
    require(a.data.cols() == b.data.cols(), "gram: feature dimension mismatch");
    require(a.kind == b.kind, "gram: feature kind mismatch");
    return a.data * b.data.transpose();
}

// NTK Gram computed from the kernel formula without materializing the m*d
// feature matrix: K(a, b) = (a.b/d) * (1/m) sum_r sigma'(w_r.a/sqrt(d)) sigma'(w_r.b/sqrt(d)).
inline Matrix ntk_gram(const TwoLayerNet& net, const Matrix& A, const Matrix& B) {
    require(A.cols() == net.d && B.cols() == net.d, "ntk_gram: input dimension mismatch");
    const double inv_sd = 1.0 / std::sqrt(static_cast<double>(net.d));
    auto slopes = [&](const Matrix& X) {
        Matrix pre = X * net.W.transpose() * inv_sd;  // n x m
        for (int i = 0; i < pre.rows(); ++i)
            for (int r = 0; r < pre.cols(); ++r)
                pre(i, r) = activate_deriv(net.activation, pre(i, r));
        return pre;
    };
    const Matrix Sa = slopes(A), Sb = slopes(B);
    const Matrix dots = A * B.transpose() / static_cast<double>(net.d);
    const Matrix cnt = Sa * Sb.transpose() / static_cast<double>(net.m);
    return dots.cwiseProduct(cnt);
}

// Linear-kernel Gram by the closed formula (zeta^2/d) A B^T + (nu^2/d) 1 1^T.
inline Matrix lin_gram(const Matrix& A, const Matrix& B, const ActivationMoments& mom,
                       const Matrix& covariance) {
    require(A.cols() == B.cols(), "lin_gram: input dimension mismatch");
    const double d = static_cast<double>(A.cols());
    const double nu = nu_for_covariance(mom, covariance);
    Matrix K = (mom.zeta * mom.zeta / d) * (A * B.transpose());
    K.array() += nu * nu / d;
    return K;
}

// ---- closed-form gradient-descent trajectories ------------------------

enum class Regime { Overparam, Underparam };

struct TrajectoryConfig {
    double step_size = 1.0;  // lambda; the update uses lambda/n
    long long steps = 0;
    Regime regime = Regime::Overparam;
};

inline constexpr double kRankTolerance = 1e-10;

// g_t(s) = (1 - (1 - scale*s)^t) / s, extended by its series value scale*t at
// s = 0; this is the per-eigenvalue factor of [I - (I-scale*K)^t] K^{-1}.
inline double trajectory_factor(double sigma, long long t, double scale) {
    const double x = scale * sigma;
    if (std::abs(x) < 1e-12) {
        const double td = static_cast<double>(t);
        return scale * td * (1.0 - 0.5 * (td - 1.0) * x);
    }
    return one_minus_pow(x, t) / sigma;
}

// Train-region prediction [I - (I - (lambda/n) K)^t] Y.
inline Vector predict_train(const Matrix& K, const Vector& Y, const TrajectoryConfig& cfg) {
    require(K.rows() == K.cols() && K.rows() == Y.size(), "predict_train: shape mismatch");
    const double scale = cfg.step_size / static_cast<double>(K.rows());
    return poly_step_apply(K, cfg.steps, scale, Y);
}

// Closed-form parameters after t full-batch GD steps from theta = 0 on the
// half-mean-square loss, step lambda. Both regimes reduce to applying
// g_t(sigma) in the eigenbasis of the sample Gram (n <= p) or the feature
// second-moment matrix (n > p).
inline Vector gd_trajectory_params(const Matrix& X, const Vector& Y, const TrajectoryConfig& cfg) {
    const int n = static_cast<int>(X.rows());
    const int p = static_cast<int>(X.cols());
    require(n > 0 && p > 0 && Y.size() == n, "gd_trajectory_params: shape mismatch");
    if (cfg.regime == Regime::Overparam)
        require(n < p, "gd_trajectory_params: overparam regime requires n < p");
    else
        require(n > p, "gd_trajectory_params: underparam regime requires n > p");
    const double scale = cfg.step_size / static_cast<double>(n);
    if (n <= p) {
        const Matrix K = X * X.transpose();
        const SymmetricEigen eig = sym_eigen(K);
        require(scale * eig.eigenvalues(0) <= 1.0 + 1e-12,
                "gd_trajectory_params: step size violates stability");
        Vector c = eig.eigenvectors.transpose() * Y;
        for (int i = 0; i < n; ++i) c(i) *= trajectory_factor(eig.eigenvalues(i), cfg.steps, scale);
        return X.transpose() * (eig.eigenvectors * c);
    }
    const Matrix B = X.transpose() * X;
    const SymmetricEigen eig = sym_eigen(B);
    require(scale * eig.eigenvalues(0) <= 1.0 + 1e-12,
            "gd_trajectory_params: step size violates stability");
    Vector c = eig.eigenvectors.transpose() * (X.transpose() * Y);
    for (int i = 0; i < p; ++i) c(i) *= trajectory_factor(eig.eigenvalues(i), cfg.steps, scale);
    return eig.eigenvectors * c;
}

// Test-region prediction. Overparameterized: K_cross [I - (I-(lambda/n)K)^t] K^{-1} Y
// in the eigenbasis of K_train. Underparameterized: the parameter-space
// trajectory on the training features, predicted through the cross Gram.
inline Vector predict_test(const Matrix& K_cross, const Matrix& K_train,
                           const FeatureMatrix& features_train, const Vector& Y,
                           const TrajectoryConfig& cfg) {
    const int n = static_cast<int>(K_train.rows());
    require(K_train.cols() == n && Y.size() == n, "predict_test: train Gram shape mismatch");
    require(K_cross.cols() == n, "predict_test: cross Gram shape mismatch");
    const double scale = cfg.step_size / static_cast<double>(n);
    if (cfg.regime == Regime::Overparam) {
        const SymmetricEigen eig = sym_eigen(K_train);
        const double lam_max = eig.eigenvalues(0);
        const double lam_min = eig.eigenvalues(n - 1);
        if (lam_min <= kRankTolerance * lam_max)
            throw std::runtime_error("predict_test: train Gram singular, smallest eigenvalue " +
                                     std::to_string(lam_min));
        require(scale * lam_max <= 1.0 + 1e-12, "predict_test: step size violates stability");
        Vector c = eig.eigenvectors.transpose() * Y;
        for (int i = 0; i < n; ++i) c(i) *= trajectory_factor(eig.eigenvalues(i), cfg.steps, scale);
        return K_cross * (eig.eigenvectors * c);
    }
    const int p = static_cast<int>(features_train.data.cols());
    require(p < n, "predict_test: underparam regime requires feature dims < n");
    TrajectoryConfig pcfg = cfg;
    pcfg.regime = Regime::Underparam;
    const Vector theta = gd_trajectory_params(features_train.data, Y, pcfg);
    // theta lies in the row space of the features: theta = Phi^T c with
    // c = Phi (Phi^T Phi)^{-1} ... ; prediction = phi(Z) theta = K_cross c.
    // Solve Phi^T c = theta in least squares via the feature Gram.
    const Matrix B = features_train.data.transpose() * features_train.data;
    const SymmetricEigen eig = sym_eigen(B);
    const double lam_max = eig.eigenvalues(0);
    Vector w = eig.eigenvectors.transpose() * theta;
    for (int i = 0; i < p; ++i) {
        if (eig.eigenvalues(i) > kRankTolerance * lam_max)
            w(i) /= eig.eigenvalues(i);
        else
            w(i) = 0.0;  // pseudo-inverse semantics for the rank-deficient part
    }
    const Vector c = features_train.data * (eig.eigenvectors * w);
    return K_cross * c;
}

// ---- diagnostics ------------------------------------------------------

struct KernelGap {
    double train_gap = 0.0;  // || K_ntk(X,X) - K_lin(X,X) ||  (spectral)
    double cross_gap = 0.0;  // || K_ntk(Z,X) - K_lin(Z,X) ||
};

inline KernelGap kernel_gap(const TwoLayerNet& net, const Matrix& X, const Matrix& Z,
                            const ActivationMoments& mom, const Matrix& covariance) {
    require(X.cols() == net.d && Z.cols() == net.d, "kernel_gap: dimension mismatch");
    KernelGap gap;
    gap.train_gap = spectral_norm(ntk_gram(net, X, X) - lin_gram(X, X, mom, covariance));
    gap.cross_gap = spectral_norm(ntk_gram(net, Z, X) - lin_gram(Z, X, mom, covariance));
    return gap;
}

// e(x) = (1 - (1-x)^t)/x on (0, 1], with the removable limit t at x -> 0.
inline double e_func(double x, long long t) {
    require(t >= 1, "e_func: t must be >= 1");
    if (!(x > 0.0 && x <= 1.0)) throw std::domain_error("e_func: x must lie in (0, 1]");
    if (x < 1e-9) {
        const double td = static_cast<double>(t);
        // series t - C(t,2) x + C(t,3) x^2
        return td - 0.5 * td * (td - 1.0) * x + td * (td - 1.0) * (td - 2.0) / 6.0 * x * x;
    }
    return one_minus_pow(x, t) / x;
}

// Max finite-difference slope of e over a uniform grid on (0, 1]. The proof
// bound is |e'| <= t(t-1)/2 at the left edge, so t(t-1) dominates everywhere.
inline double e_lipschitz_check(long long t, int grid) {
    require(grid >= 2, "e_lipschitz_check: grid too small");
    double max_slope = 0.0;
    double prev = e_func(1.0 / grid, t);
    const double h = 1.0 / grid;
    for (int i = 2; i <= grid; ++i) {
        const double cur = e_func(i * h, t);
        max_slope = std::max(max_slope, std::abs(cur - prev) / h);
        prev = cur;
    }
    return max_slope;
}

struct ConcentrationReport {
    std::vector<double> min_eigs;  // of X^T X / n per trial
    std::vector<double> max_eigs;
    double fraction_within = 0.0;  // trials inside [0.5 sigma_min, 2 sigma_max]
};

inline ConcentrationReport xtx_concentration_check(int n, int d, const Matrix& covariance,
                                                   int trials, std::uint64_t seed) {
    require(n >= 20 * d, "xtx_concentration_check: requires n >= 20*d");
    require(trials >= 1, "xtx_concentration_check: trials must be positive");
    const SymmetricEigen cov_eig = sym_eigen(covariance);
    const double cov_max = cov_eig.eigenvalues(0);
    const double cov_min = cov_eig.eigenvalues(cov_eig.eigenvalues.size() - 1);
    const Matrix root = psd_sqrt(covariance);
    ConcentrationReport rep;
    int inside = 0;
    SplitRng base(seed, 21);
    for (int trial = 0; trial < trials; ++trial) {
        SplitRng rng = base.split(trial);
        Matrix X(n, d);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) X(i, j) = rng.normal();
        X = X * root;
        const Matrix S = X.transpose() * X / static_cast<double>(n);
        const SymmetricEigen eig = sym_eigen(S);
        const double mx = eig.eigenvalues(0);
        const double mn = eig.eigenvalues(d - 1);
        rep.max_eigs.push_back(mx);
        rep.min_eigs.push_back(mn);
        if (mn >= 0.5 * cov_min && mx <= 2.0 * cov_max) ++inside;
    }
    rep.fraction_within = static_cast<double>(inside) / trials;
    return rep;
}

// ---- end-to-end direction check for the kernel-regime conclusions -----
//
// Builds a linear teacher h(x) = x.beta and an alternative s = h + bump that
// matches h on the training support (a truncated Gaussian ball) and separates
// from it on the test support (a shell at larger radius), trains the NTK
// predictor for t steps, and reports the training residual and the distances
// to h and s on the shell samples.

struct TheoremReport {
    double train_residual = 0.0;  // RMS of f - y on the training set
    double dist_h = 0.0;          // RMS of f - h on the shell samples
    double dist_s = 0.0;
    double s_separation = 0.0;  // RMS of s - h on the shell samples
    long long t = 0;
    double step_size = 0.0;
    double noise = 0.0;
};

namespace detail {

inline Vector sample_ball_gaussian(int d, double radius_cap, SplitRng& rng) {
    // rejection from N(0, I); the cap is far enough out that this rarely loops
    for (;;) {
        Vector x(d);
        for (int j = 0; j < d; ++j) x(j) = rng.normal();
        if (x.norm() <= radius_cap) return x;
    }
}

inline Vector sample_shell(int d, double r_lo, double r_hi, SplitRng& rng) {
    Vector u(d);
    for (int j = 0; j < d; ++j) u(j) = rng.normal();
    u.normalize();
    return rng.uniform(r_lo, r_hi) * u;
}

inline double radial_bump(double r, double r_mid, double width) {
    return 1.0 / (1.0 + std::exp(-(r - r_mid) / width));
}

}  // namespace detail

inline TheoremReport theorem_c1c2_check(int d, int n, int m, double alpha, std::uint64_t seed,
                                        int n_test = 512, double noise = 0.1) {
    require(alpha > 0.0 && alpha < 0.25, "theorem_c1c2_check: alpha must lie in (0, 1/4)");
    require(static_cast<double>(m) >= std::pow(static_cast<double>(d), 1.0 + alpha),
            "theorem_c1c2_check: width below d^(1+alpha)");
    require(n > d && m % 2 == 0, "theorem_c1c2_check: bad sizes");
    const double sd = std::sqrt(static_cast<double>(d));
    const double r_in = 1.2 * sd, r_out_lo = 1.5 * sd, r_out_hi = 1.7 * sd;
    const double r_mid = 1.35 * sd, width = 0.05 * sd;
    const double bump_scale = 1.5;

    SplitRng rng(seed, 22);
    Vector beta(d);
    for (int j = 0; j < d; ++j) beta(j) = rng.normal();
    beta.normalize();

    Matrix X(n, d), Z(n_test, d);
    Vector y(n);
    for (int i = 0; i < n; ++i) {
        X.row(i) = detail::sample_ball_gaussian(d, r_in, rng).transpose();
        y(i) = X.row(i).dot(beta) + noise * rng.normal();
    }
    for (int i = 0; i < n_test; ++i)
        Z.row(i) = detail::sample_shell(d, r_out_lo, r_out_hi, rng).transpose();

    const TwoLayerNet net = symmetric_init(d, m, rng.next_u64());
    const Matrix K = ntk_gram(net, X, X);
    const Matrix K_cross = ntk_gram(net, Z, X);

    const SymmetricEigen eig = sym_eigen(K);
    TrajectoryConfig cfg;
    cfg.regime = Regime::Overparam;
    cfg.steps = static_cast<long long>(std::ceil(std::pow(d, 1.0 + alpha / 3.0)));
    cfg.step_size = 0.9 * static_cast<double>(n) / eig.eigenvalues(0);

    const Vector f_train = predict_train(K, y, cfg);
    FeatureMatrix unused;  // overparam path ignores the feature matrix
    const Vector f_test = predict_test(K_cross, K, unused, y, cfg);

    TheoremReport rep;
    rep.t = cfg.steps;
    rep.step_size = cfg.step_size;
    rep.noise = noise;
    rep.train_residual = std::sqrt((f_train - y).squaredNorm() / n);
    Vector h_z(n_test), s_z(n_test);
    for (int i = 0; i < n_test; ++i) {
        h_z(i) = Z.row(i).dot(beta);
        s_z(i) = h_z(i) + bump_scale * detail::radial_bump(Z.row(i).norm(), r_mid, width);
    }
    rep.dist_h = std::sqrt((f_test - h_z).squaredNorm() / n_test);
    rep.dist_s = std::sqrt((f_test - s_z).squaredNorm() / n_test);
    rep.s_separation = std::sqrt((s_z - h_z).squaredNorm() / n_test);
    return rep;
}

}  // namespace primelab

#endif  // PRIMELAB_NTKLIN_HPP
