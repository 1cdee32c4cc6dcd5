#include <doctest.h>

#include "primelab/ntklin.hpp"
#include "primelab/rng.hpp"

using namespace primelab;

namespace {

Matrix random_matrix(int r, int c, SplitRng& rng) {
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
    return m;
}

// Quadrature oracle for E[sigma'(g)] and E[g sigma'(g)], g ~ N(0,1).
void gauss_moments(Activation act, double* zeta, double* nu) {
    const int n = 20001;
    const double lo = -10.0, hi = 10.0;
    const double h = (hi - lo) / (n - 1);
    double sz = 0.0, sn = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g = lo + i * h;
        const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
        const double p = std::exp(-0.5 * g * g) / std::sqrt(2.0 * M_PI);
        const double dv = activate_deriv(act, g);
        sz += w * p * dv;
        sn += w * p * g * dv;
    }
    *zeta = sz * h;
    *nu = sn * h;
}

}  // namespace

TEST_CASE("activation moments: relu closed form") {
    const auto mom = activation_moments(Activation::Relu, 0, 0);
    CHECK(mom.zeta == doctest::Approx(0.5));
    CHECK(mom.nu_raw == doctest::Approx(1.0 / std::sqrt(2.0 * M_PI)).epsilon(1e-12));
}

TEST_CASE("activation moments: Monte Carlo matches quadrature for tanh and erf") {
    for (Activation a : {Activation::Tanh, Activation::Erf}) {
        double zq, nq;
        gauss_moments(a, &zq, &nq);
        const auto mom = activation_moments(a, 400000, 31);
        CHECK(mom.zeta == doctest::Approx(zq).epsilon(0.01));
        CHECK(mom.nu_raw == doctest::Approx(nq).scale(1.0).epsilon(0.05));
    }
    CHECK_THROWS_AS(activation_moments(Activation::Tanh, 10, 1), std::invalid_argument);
}

TEST_CASE("phi_lin layout and nu scaling") {
    const auto mom = activation_moments(Activation::Relu, 0, 0);
    Matrix X(2, 3);
    X << 1, 2, 3, 4, 5, 6;
    const Matrix cov = Matrix::Identity(3, 3);
    const auto f = phi_lin(X, mom, cov);
    CHECK(f.data.cols() == 4);
    const double inv_sd = 1.0 / std::sqrt(3.0);
    CHECK(f.data(0, 0) == doctest::Approx(0.5 * inv_sd * 1.0));
    CHECK(f.data(1, 2) == doctest::Approx(0.5 * inv_sd * 6.0));
    // Tr(I^2)/d = 1 so nu = nu_raw
    CHECK(f.data(0, 3) == doctest::Approx(mom.nu_raw * inv_sd));
}

TEST_CASE("ntk_gram equals the brute-force feature Gram") {
    SplitRng rng(40);
    const TwoLayerNet net = symmetric_init(4, 12, 41);
    const Matrix A = random_matrix(7, 4, rng);
    const Matrix B = random_matrix(5, 4, rng);
    const auto fa = phi_ntk(net, A);
    const auto fb = phi_ntk(net, B);
    const Matrix brute = fa.data * fb.data.transpose();
    const Matrix direct = ntk_gram(net, A, B);
    CHECK((brute - direct).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("lin_gram equals the phi_lin feature Gram") {
    SplitRng rng(42);
    const auto mom = activation_moments(Activation::Relu, 0, 0);
    Matrix cov = Matrix::Identity(4, 4);
    cov(0, 0) = 2.0;
    const Matrix A = random_matrix(6, 4, rng);
    const Matrix B = random_matrix(3, 4, rng);
    const Matrix brute = gram(phi_lin(A, mom, cov), phi_lin(B, mom, cov));
    const Matrix direct = lin_gram(A, B, mom, cov);
    CHECK((brute - direct).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("trajectory_factor limits") {
    // exact value at moderate x
    CHECK(trajectory_factor(2.0, 3, 0.25) ==
          doctest::Approx((1.0 - std::pow(0.5, 3)) / 2.0));
    // removable singularity: series limit scale * t
    CHECK(trajectory_factor(0.0, 50, 0.1) == doctest::Approx(5.0));
    CHECK(trajectory_factor(1e-15, 50, 0.1) == doctest::Approx(5.0).epsilon(1e-9));
}

TEST_CASE("predict_train matches iterative functional GD") {
    SplitRng rng(43);
    const Matrix R = random_matrix(12, 12, rng);
    const Matrix K = R * R.transpose() / 12.0;
    Vector y(12);
    for (int i = 0; i < 12; ++i) y(i) = rng.normal();
    TrajectoryConfig cfg;
    cfg.steps = 40;
    cfg.step_size = 0.9 * 12.0 / spectral_norm(K);
    const double scale = cfg.step_size / 12.0;
    Vector f = Vector::Zero(12);
    for (long long k = 0; k < cfg.steps; ++k) f += scale * (K * (y - f));
    const Vector closed = predict_train(K, y, cfg);
    CHECK((closed - f).norm() <= 1e-9 * std::max(1.0, f.norm()));
}

TEST_CASE("gd_trajectory_params matches iterative parameter GD (underparam)") {
    SplitRng rng(44);
    const int n = 40, p = 6;
    const Matrix X = random_matrix(n, p, rng);
    Vector y(n);
    for (int i = 0; i < n; ++i) y(i) = rng.normal();
    TrajectoryConfig cfg;
    cfg.regime = Regime::Underparam;
    cfg.steps = 300;
    cfg.step_size = 0.9 * n / spectral_norm(Matrix(X.transpose() * X));
    const double scale = cfg.step_size / n;
    Vector theta = Vector::Zero(p);
    for (long long k = 0; k < cfg.steps; ++k) theta += scale * (X.transpose() * (y - X * theta));
    const Vector closed = gd_trajectory_params(X, y, cfg);
    CHECK((closed - theta).norm() <= 1e-8 * std::max(1.0, theta.norm()));
}

TEST_CASE("gd_trajectory_params matches iterative parameter GD (overparam)") {
    SplitRng rng(45);
    const int n = 8, p = 30;
    const Matrix X = random_matrix(n, p, rng);
    Vector y(n);
    for (int i = 0; i < n; ++i) y(i) = rng.normal();
    TrajectoryConfig cfg;
    cfg.regime = Regime::Overparam;
    cfg.steps = 200;
    cfg.step_size = 0.9 * n / spectral_norm(Matrix(X * X.transpose()));
    const double scale = cfg.step_size / n;
    Vector theta = Vector::Zero(p);
    for (long long k = 0; k < cfg.steps; ++k) theta += scale * (X.transpose() * (y - X * theta));
    const Vector closed = gd_trajectory_params(X, y, cfg);
    CHECK((closed - theta).norm() <= 1e-8 * std::max(1.0, theta.norm()));
    // regime guards
    TrajectoryConfig bad = cfg;
    bad.regime = Regime::Underparam;
    CHECK_THROWS_AS(gd_trajectory_params(X, y, bad), std::invalid_argument);
}

TEST_CASE("predict_test (overparam) matches the iterative kernel trajectory") {
    SplitRng rng(46);
    const int n = 10, nt = 4, p = 25;
    const Matrix Phi = random_matrix(n, p, rng);
    const Matrix PhiZ = random_matrix(nt, p, rng);
    const Matrix K = Phi * Phi.transpose();
    const Matrix Kc = PhiZ * Phi.transpose();
    Vector y(n);
    for (int i = 0; i < n; ++i) y(i) = rng.normal();
    TrajectoryConfig cfg;
    cfg.regime = Regime::Overparam;
    cfg.steps = 150;
    cfg.step_size = 0.9 * n / spectral_norm(K);
    // oracle: parameter-space GD then project through the test features
    const double scale = cfg.step_size / n;
    Vector theta = Vector::Zero(p);
    for (long long k = 0; k < cfg.steps; ++k)
        theta += scale * (Phi.transpose() * (y - Phi * theta));
    const Vector oracle = PhiZ * theta;
    FeatureMatrix unused;
    const Vector closed = predict_test(Kc, K, unused, y, cfg);
    CHECK((closed - oracle).norm() <= 1e-8 * std::max(1.0, oracle.norm()));
}

TEST_CASE("predict_test (underparam) matches the iterative parameter trajectory") {
    SplitRng rng(47);
    const int n = 30, nt = 5, p = 4;
    FeatureMatrix ftr;
    ftr.data = random_matrix(n, p, rng);
    const Matrix PhiZ = random_matrix(nt, p, rng);
    const Matrix K = ftr.data * ftr.data.transpose();
    const Matrix Kc = PhiZ * ftr.data.transpose();
    Vector y(n);
    for (int i = 0; i < n; ++i) y(i) = rng.normal();
    TrajectoryConfig cfg;
    cfg.regime = Regime::Underparam;
    cfg.steps = 400;
    cfg.step_size = 0.9 * n / spectral_norm(Matrix(ftr.data.transpose() * ftr.data));
    const double scale = cfg.step_size / n;
    Vector theta = Vector::Zero(p);
    for (long long k = 0; k < cfg.steps; ++k)
        theta += scale * (ftr.data.transpose() * (y - ftr.data * theta));
    const Vector oracle = PhiZ * theta;
    const Vector closed = predict_test(Kc, K, ftr, y, cfg);
    CHECK((closed - oracle).norm() <= 1e-7 * std::max(1.0, oracle.norm()));
}

TEST_CASE("predict_test flags singular train Grams") {
    Matrix K = Matrix::Zero(3, 3);
    K(0, 0) = 1.0;  // rank 1
    const Matrix Kc = Matrix::Ones(2, 3);
    Vector y(3);
    y << 1, 2, 3;
    TrajectoryConfig cfg;
    cfg.regime = Regime::Overparam;
    cfg.steps = 5;
    cfg.step_size = 0.5;
    FeatureMatrix unused;
    CHECK_THROWS_AS(predict_test(Kc, K, unused, y, cfg), std::runtime_error);
}

TEST_CASE("e_func values, domain, and continuity at the series switch") {
    CHECK(e_func(1.0, 7) == doctest::Approx(1.0));
    CHECK(e_func(0.5, 2) == doctest::Approx((1.0 - 0.25) / 0.5));
    CHECK_THROWS_AS(e_func(0.0, 3), std::domain_error);
    CHECK_THROWS_AS(e_func(1.5, 3), std::domain_error);
    // series value near zero approaches t
    CHECK(e_func(1e-12, 1000) == doctest::Approx(1000.0).epsilon(1e-6));
    // continuity across the switch point
    const double a = e_func(0.999e-9, 50), b = e_func(1.001e-9, 50);
    CHECK(std::abs(a - b) <= 1e-6 * 50);
}

TEST_CASE("e slope bound t(t-1) holds on a fine grid") {
    for (long long t : {2LL, 5LL, 20LL, 100LL}) {
        const double max_slope = e_lipschitz_check(t, 20000);
        CHECK(max_slope <= static_cast<double>(t) * static_cast<double>(t - 1) + 1e-6);
    }
}

TEST_CASE("sample covariance eigenvalues concentrate at n = 20 d") {
    const int d = 8, n = 20 * d;
    const Matrix cov = Matrix::Identity(d, d);
    const auto rep = xtx_concentration_check(n, d, cov, 20, 48);
    CHECK(rep.fraction_within >= 0.95);
    CHECK_THROWS_AS(xtx_concentration_check(d, d, cov, 5, 1), std::invalid_argument);
}

TEST_CASE("kernel gap shrinks as width and dimension grow") {
    const auto mom = activation_moments(Activation::Relu, 0, 0);
    auto gap_at = [&](int d, int m) {
        SplitRng rng(49);
        const int n = 64;
        Matrix X(n, d), Z(16, d);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) X(i, j) = rng.normal();
        for (int i = 0; i < 16; ++i)
            for (int j = 0; j < d; ++j) Z(i, j) = rng.normal();
        const TwoLayerNet net = symmetric_init(d, m, 50);
        return kernel_gap(net, X, Z, mom, Matrix::Identity(d, d));
    };
    const auto small = gap_at(8, 64);
    const auto big = gap_at(64, 1024);
    CHECK(big.train_gap < small.train_gap);
    CHECK(big.cross_gap < small.cross_gap);
}

TEST_CASE("theorem check report is well-formed at desk scale") {
    const auto rep = theorem_c1c2_check(24, 120, 64, 0.2, 51, 128, 0.05);
    CHECK(std::isfinite(rep.train_residual));
    CHECK(rep.s_separation > 0.1);
    CHECK(rep.t >= 24);
    CHECK(rep.dist_h >= 0.0);
    CHECK(rep.dist_s >= 0.0);
    CHECK_THROWS_AS(theorem_c1c2_check(24, 120, 64, 0.5, 1), std::invalid_argument);
    CHECK_THROWS_AS(theorem_c1c2_check(24, 120, 10, 0.2, 1), std::invalid_argument);
}
