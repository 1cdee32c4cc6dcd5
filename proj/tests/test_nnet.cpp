#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "primelab/nnet.hpp"
#include "primelab/rng.hpp"

using namespace primelab;

TEST_CASE("activations and derivatives") {
    CHECK(activate(Activation::Relu, -1.0) == 0.0);
    CHECK(activate(Activation::Relu, 2.5) == 2.5);
    CHECK(activate_deriv(Activation::Relu, 0.0) == 0.0);
    CHECK(activate(Activation::Tanh, 0.5) == doctest::Approx(std::tanh(0.5)));
    // finite-difference oracle for smooth activations
    for (Activation a : {Activation::Tanh, Activation::Erf}) {
        for (double u : {-1.3, -0.2, 0.0, 0.4, 2.0}) {
            const double h = 1e-6;
            const double fd = (activate(a, u + h) - activate(a, u - h)) / (2 * h);
            CHECK(activate_deriv(a, u) == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("symmetric init outputs exactly zero") {
    const auto net = symmetric_init(5, 64, 3);
    SplitRng rng(17);
    for (int trial = 0; trial < 16; ++trial) {
        Vector x(5);
        for (int j = 0; j < 5; ++j) x(j) = rng.normal();
        CHECK(forward(net, x) == 0.0);
    }
    CHECK_THROWS_AS(symmetric_init(5, 3, 1), std::invalid_argument);
    CHECK_THROWS_AS(symmetric_init(0, 4, 1), std::invalid_argument);
}

TEST_CASE("two-layer forward by hand arithmetic") {
    // m = 2, d = 2, relu. W = [[1,1],[1,-3]], v = [1, 1], x = (2, 2).
    // pre = (4/sqrt(2), -4/sqrt(2)); relu keeps the first only.
    // f = (1/sqrt(2)) * 4/sqrt(2) = 2.
    TwoLayerNet net;
    net.m = 2;
    net.d = 2;
    net.activation = Activation::Relu;
    net.W.resize(2, 2);
    net.W << 1, 1, 1, -3;
    net.v.resize(2);
    net.v << 1, 1;
    Vector x(2);
    x << 2, 2;
    CHECK(forward(net, x) == doctest::Approx(2.0));
    Matrix X(1, 2);
    X << 2, 2;
    CHECK(forward_batch(net, X)(0) == doctest::Approx(2.0));
}

TEST_CASE("grad_params matches finite differences") {
    TwoLayerNet net = symmetric_init(3, 8, 5, Activation::Tanh);
    // perturb away from the symmetric point so the gradient is generic
    SplitRng rng(6);
    for (int i = 0; i < net.W.size(); ++i)
        net.W(i / net.d, i % net.d) += 0.3 * rng.normal();
    Vector x(3);
    x << 0.4, -1.1, 0.7;
    const Vector g = grad_params(net, x);
    const double h = 1e-6;
    for (int r = 0; r < net.m; ++r)
        for (int j = 0; j < net.d; ++j) {
            TwoLayerNet plus = net, minus = net;
            plus.W(r, j) += h;
            minus.W(r, j) -= h;
            const double fd = (forward(plus, x) - forward(minus, x)) / (2 * h);
            CHECK(g(r * net.d + j) == doctest::Approx(fd).epsilon(1e-5));
        }
}

TEST_CASE("mlp forward shapes and backward matches finite differences") {
    const Mlp mlp = make_mlp({3, 5, 4, 2}, Activation::Tanh, 9);
    SplitRng rng(10);
    Matrix X(6, 3);
    for (int i = 0; i < X.size(); ++i) X(i / 3, i % 3) = rng.normal();
    Matrix Y(6, 2);
    for (int i = 0; i < Y.size(); ++i) Y(i / 2, i % 2) = rng.normal();

    MlpCache cache;
    const Matrix Yhat = mlp_forward(mlp, X, &cache);
    CHECK(Yhat.rows() == 6);
    CHECK(Yhat.cols() == 2);

    Matrix dY;
    loss_and_grad(Loss::Squared, Yhat, Y, &dY);
    MlpGrads grads;
    const Matrix dX = mlp_backward(mlp, cache, dY, &grads);

    auto loss_of = [&](const Mlp& m, const Matrix& Xin) {
        return loss_and_grad(Loss::Squared, mlp_forward(m, Xin), Y, nullptr);
    };
    const double h = 1e-6;
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        // spot-check a few entries per layer
        for (int k = 0; k < 5; ++k) {
            const int i = k % static_cast<int>(mlp.layers[l].W.rows());
            const int j = (k * 7) % static_cast<int>(mlp.layers[l].W.cols());
            Mlp plus = mlp, minus = mlp;
            plus.layers[l].W(i, j) += h;
            minus.layers[l].W(i, j) -= h;
            const double fd = (loss_of(plus, X) - loss_of(minus, X)) / (2 * h);
            CHECK(grads.dW[l](i, j) == doctest::Approx(fd).epsilon(1e-4));
        }
        Mlp plus = mlp, minus = mlp;
        plus.layers[l].b(0) += h;
        minus.layers[l].b(0) -= h;
        const double fd = (loss_of(plus, X) - loss_of(minus, X)) / (2 * h);
        CHECK(grads.db[l](0) == doctest::Approx(fd).epsilon(1e-4));
    }
    // input gradient
    Matrix Xp = X, Xm = X;
    Xp(2, 1) += h;
    Xm(2, 1) -= h;
    const double fd = (loss_of(mlp, Xp) - loss_of(mlp, Xm)) / (2 * h);
    CHECK(dX(2, 1) == doctest::Approx(fd).epsilon(1e-4));
}

TEST_CASE("cross-entropy losses match finite differences") {
    SplitRng rng(11);
    Matrix Yhat(4, 3);
    for (int i = 0; i < Yhat.size(); ++i) Yhat(i / 3, i % 3) = rng.normal();
    Matrix Y = Matrix::Zero(4, 3);
    Y(0, 1) = Y(1, 0) = Y(2, 2) = Y(3, 1) = 1.0;
    Matrix dY;
    loss_and_grad(Loss::CrossEntropy, Yhat, Y, &dY);
    const double h = 1e-6;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j) {
            Matrix p = Yhat, m = Yhat;
            p(i, j) += h;
            m(i, j) -= h;
            const double fd = (loss_and_grad(Loss::CrossEntropy, p, Y, nullptr) -
                               loss_and_grad(Loss::CrossEntropy, m, Y, nullptr)) /
                              (2 * h);
            CHECK(dY(i, j) == doctest::Approx(fd).epsilon(1e-5));
        }
    // binary logistic path
    Matrix Yb(3, 1), Lb(3, 1);
    Yb << 0.7, -0.4, 1.2;
    Lb << 1, -1, -1;
    Matrix dYb;
    loss_and_grad(Loss::CrossEntropy, Yb, Lb, &dYb);
    for (int i = 0; i < 3; ++i) {
        Matrix p = Yb, m = Yb;
        p(i, 0) += h;
        m(i, 0) -= h;
        const double fd = (loss_and_grad(Loss::CrossEntropy, p, Lb, nullptr) -
                           loss_and_grad(Loss::CrossEntropy, m, Lb, nullptr)) /
                          (2 * h);
        CHECK(dYb(i, 0) == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("full-batch GD on the two-layer net decreases the loss monotonically") {
    const int n = 64, d = 4;
    SplitRng rng(12);
    Matrix X(n, d);
    Vector y(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) X(i, j) = rng.normal();
        y(i) = std::sin(X(i, 0)) + 0.5 * X(i, 1);
    }
    TwoLayerNet net = symmetric_init(d, 128, 13);
    TrainConfig cfg;
    cfg.step_size = 0.5;
    cfg.steps = 200;
    const TrainTrace trace = train_sgd(net, X, y, cfg);
    REQUIRE(trace.loss.size() == 200);
    for (std::size_t k = 1; k < trace.loss.size(); ++k)
        CHECK(trace.loss[k] <= trace.loss[k - 1] + 1e-12);
    CHECK(trace.loss.back() < 0.5 * trace.loss.front());
}

TEST_CASE("parameter movement shrinks with width (lazy regime)") {
    const int n = 32, d = 4;
    SplitRng rng(14);
    Matrix X(n, d);
    Vector y(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) X(i, j) = rng.normal();
        y(i) = X(i, 0);
    }
    auto max_move = [&](int m) {
        TwoLayerNet net = symmetric_init(d, m, 15);
        const Matrix W0 = net.W;
        TrainConfig cfg;
        cfg.step_size = 0.5;
        cfg.steps = 500;
        train_sgd(net, X, y, cfg);
        double worst = 0.0;
        for (int r = 0; r < m; ++r)
            worst = std::max(worst, (net.W.row(r) - W0.row(r)).norm());
        return worst;
    };
    const double narrow = max_move(512);
    const double wide = max_move(8192);
    // per-neuron movement scales like 1/sqrt(m); a 16x width gain should cut
    // it well below the narrow run
    CHECK(wide < 0.6 * narrow);
    CHECK(wide < 0.2);
}

TEST_CASE("mlp training reduces squared loss") {
    SplitRng rng(16);
    Matrix X(128, 2), Y(128, 1);
    for (int i = 0; i < 128; ++i) {
        X(i, 0) = rng.uniform(-1, 1);
        X(i, 1) = rng.uniform(-1, 1);
        Y(i, 0) = X(i, 0) * X(i, 1);
    }
    Mlp mlp = make_mlp({2, 32, 1}, Activation::Tanh, 17);
    TrainConfig cfg;
    cfg.step_size = 0.05;
    cfg.steps = 1500;
    const TrainTrace trace = train_sgd(mlp, X, Y, cfg);
    CHECK(trace.loss.back() < 0.1 * trace.loss.front());
}

TEST_CASE("training reports divergence with the offending step") {
    SplitRng rng(18);
    Matrix X(16, 2), Y(16, 1);
    for (int i = 0; i < 16; ++i) {
        X(i, 0) = rng.normal();
        X(i, 1) = rng.normal();
        Y(i, 0) = 10.0 * X(i, 0);
    }
    Mlp mlp = make_mlp({2, 16, 1}, Activation::Relu, 19);
    TrainConfig cfg;
    cfg.step_size = 1e6;
    cfg.steps = 200;
    CHECK_THROWS_AS(train_sgd(mlp, X, Y, cfg), std::runtime_error);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "primelab_ckpt_test";
    fs::create_directories(dir);

    const Mlp mlp = make_mlp({3, 7, 2}, Activation::Erf, 21);
    const std::string p1 = (dir / "mlp").string();
    save_mlp(mlp, p1);
    const Mlp back = load_mlp(p1);
    REQUIRE(back.layers.size() == mlp.layers.size());
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        CHECK(back.layers[l].W == mlp.layers[l].W);
        CHECK(back.layers[l].b == mlp.layers[l].b);
        CHECK(back.layers[l].act == mlp.layers[l].act);
        CHECK(back.layers[l].linear == mlp.layers[l].linear);
    }

    const TwoLayerNet net = symmetric_init(4, 10, 22, Activation::Tanh);
    const std::string p2 = (dir / "tln").string();
    save_two_layer(net, p2);
    const TwoLayerNet net2 = load_two_layer(p2);
    CHECK(net2.W == net.W);
    CHECK(net2.v == net.v);
    CHECK(net2.m == net.m);
    CHECK(net2.d == net.d);
    CHECK(net2.activation == net.activation);

    fs::remove_all(dir);
}

TEST_CASE("rng streams are deterministic and independent") {
    SplitRng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    SplitRng c(42, 1);
    CHECK(SplitRng(42).next_u64() != c.next_u64());
    // uniform stays in range, normal has sane first moments
    SplitRng d(7);
    double s = 0.0, s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = d.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const double g = d.normal();
        s += g;
        s2 += g * g;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
}
