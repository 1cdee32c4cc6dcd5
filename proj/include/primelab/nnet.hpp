#ifndef PRIMELAB_NNET_HPP
#define PRIMELAB_NNET_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "primelab/matrix.hpp"
#include "primelab/rng.hpp"
#include "primelab/synthdata.hpp"

namespace primelab {

enum class Activation { Relu, Tanh, Erf };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Erf: return "erf";
    }
    return "?";
}

inline double activate(Activation a, double u) {
    switch (a) {
        case Activation::Relu: return u > 0.0 ? u : 0.0;
        case Activation::Tanh: return std::tanh(u);
        case Activation::Erf: return std::erf(u);
    }
    return 0.0;
}

// relu derivative at exactly 0 is defined as 0.
inline double activate_deriv(Activation a, double u) {
    switch (a) {
        case Activation::Relu: return u > 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: {
            const double th = std::tanh(u);
            return 1.0 - th * th;
        }
        case Activation::Erf: return 1.1283791670955126 * std::exp(-u * u);  // 2/sqrt(pi)
    }
    return 0.0;
}

// ---- two-layer network (theory model) ---------------------------------
//
// f(x; W, v) = (1/sqrt(m)) sum_r v_r sigma(w_r.x / sqrt(d)),
// second-layer signs v fixed, no biases. Symmetric initialization mirrors
// each neuron with a negated sign so the output is exactly 0 everywhere.

struct TwoLayerNet {
    Matrix W;  // m x d
    Vector v;  // m, entries +-1
    int m = 0;
    int d = 0;
    Activation activation = Activation::Relu;
};

inline TwoLayerNet symmetric_init(int d, int m, std::uint64_t seed,
                                  Activation act = Activation::Relu) {
    require(d >= 1, "symmetric_init: d must be positive");
    require(m >= 2 && m % 2 == 0, "symmetric_init: width must be even and >= 2");
    TwoLayerNet net;
    net.m = m;
    net.d = d;
    net.activation = act;
    net.W.resize(m, d);
    net.v.resize(m);
    SplitRng rng(seed, 10);
    const int half = m / 2;
    for (int r = 0; r < half; ++r) {
        for (int j = 0; j < d; ++j) net.W(r, j) = rng.normal();
        net.v(r) = rng.uniform() < 0.5 ? 1.0 : -1.0;
        net.W.row(r + half) = net.W.row(r);
        net.v(r + half) = -net.v(r);
    }
    return net;
}

// Neuron contributions are summed in mirrored-pair order (r, r + m/2) so the
// symmetric initialization cancels exactly, not just to round-off.
inline double forward(const TwoLayerNet& net, const Vector& x) {
    require(x.size() == net.d, "forward: input dimension mismatch");
    const Vector pre = net.W * x / std::sqrt(static_cast<double>(net.d));
    double acc = 0.0;
    if (net.m % 2 == 0) {
        const int half = net.m / 2;
        for (int r = 0; r < half; ++r)
            acc += net.v(r) * activate(net.activation, pre(r)) +
                   net.v(r + half) * activate(net.activation, pre(r + half));
    } else {
        for (int r = 0; r < net.m; ++r) acc += net.v(r) * activate(net.activation, pre(r));
    }
    return acc / std::sqrt(static_cast<double>(net.m));
}

inline Vector forward_batch(const TwoLayerNet& net, const Matrix& X) {
    require(X.cols() == net.d, "forward_batch: input dimension mismatch");
    const Matrix pre = X * net.W.transpose() / std::sqrt(static_cast<double>(net.d));  // n x m
    Matrix s(pre.rows(), pre.cols());
    for (int i = 0; i < pre.rows(); ++i)
        for (int r = 0; r < pre.cols(); ++r) s(i, r) = activate(net.activation, pre(i, r));
    Vector out = Vector::Zero(pre.rows());
    if (net.m % 2 == 0) {
        // mirrored-pair order, matching forward()
        const int half = net.m / 2;
        for (int r = 0; r < half; ++r)
            out += net.v(r) * s.col(r) + net.v(r + half) * s.col(r + half);
    } else {
        out = s * net.v;
    }
    return out / std::sqrt(static_cast<double>(net.m));
}

// Exact gradient of forward() w.r.t. W, flattened row-major:
// entry (r, j) = (1/sqrt(m)) v_r sigma'(w_r.x/sqrt(d)) x_j / sqrt(d).
inline Vector grad_params(const TwoLayerNet& net, const Vector& x) {
    require(x.size() == net.d, "grad_params: input dimension mismatch");
    const double inv_sd = 1.0 / std::sqrt(static_cast<double>(net.d));
    const double inv_sm = 1.0 / std::sqrt(static_cast<double>(net.m));
    const Vector pre = net.W * x * inv_sd;
    Vector g(net.m * net.d);
    for (int r = 0; r < net.m; ++r) {
        const double c = inv_sm * net.v(r) * activate_deriv(net.activation, pre(r)) * inv_sd;
        for (int j = 0; j < net.d; ++j) g(r * net.d + j) = c * x(j);
    }
    return g;
}

// ---- general MLP ------------------------------------------------------

struct MlpLayer {
    Matrix W;  // in x out
    Vector b;  // out
    Activation act = Activation::Relu;
    bool linear = false;  // output layer has no nonlinearity
};

struct Mlp {
    std::vector<MlpLayer> layers;
    int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().W.rows()); }
    int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().W.cols()); }
};

inline Mlp make_mlp(const std::vector<int>& dims, Activation hidden_act, std::uint64_t seed) {
    require(dims.size() >= 2, "make_mlp: need at least input and output dims");
    Mlp mlp;
    SplitRng rng(seed, 11);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        MlpLayer layer;
        const int in = dims[l], out = dims[l + 1];
        require(in >= 1 && out >= 1, "make_mlp: layer dims must be positive");
        layer.W.resize(in, out);
        const double scale = hidden_act == Activation::Relu ? std::sqrt(2.0 / in) : std::sqrt(1.0 / in);
        for (int i = 0; i < in; ++i)
            for (int j = 0; j < out; ++j) layer.W(i, j) = scale * rng.normal();
        layer.b = Vector::Zero(out);
        layer.act = hidden_act;
        layer.linear = (l + 2 == dims.size());
        mlp.layers.push_back(std::move(layer));
    }
    return mlp;
}

struct MlpCache {
    std::vector<Matrix> h;  // h[0] = input, h[l+1] = post-activation of layer l
    std::vector<Matrix> z;  // pre-activations
};

// Batch rows are samples. Returns n x output_dim.
inline Matrix mlp_forward(const Mlp& mlp, const Matrix& X, MlpCache* cache = nullptr) {
    require(!mlp.layers.empty(), "mlp_forward: empty model");
    require(X.cols() == mlp.input_dim(), "mlp_forward: input dimension mismatch");
    Matrix h = X;
    if (cache) {
        cache->h.clear();
        cache->z.clear();
        cache->h.push_back(h);
    }
    for (const auto& layer : mlp.layers) {
        Matrix z = (h * layer.W).rowwise() + layer.b.transpose();
        if (layer.linear) {
            h = z;
        } else {
            h.resize(z.rows(), z.cols());
            for (int i = 0; i < z.rows(); ++i)
                for (int j = 0; j < z.cols(); ++j) h(i, j) = activate(layer.act, z(i, j));
        }
        if (cache) {
            cache->z.push_back(z);
            cache->h.push_back(h);
        }
    }
    return h;
}

struct MlpGrads {
    std::vector<Matrix> dW;
    std::vector<Vector> db;
};

// Backward pass from dL/dY; fills grads and returns dL/dX.
inline Matrix mlp_backward(const Mlp& mlp, const MlpCache& cache, const Matrix& dY, MlpGrads* grads) {
    Matrix delta = dY;
    if (grads) {
        grads->dW.assign(mlp.layers.size(), Matrix());
        grads->db.assign(mlp.layers.size(), Vector());
    }
    for (int l = static_cast<int>(mlp.layers.size()) - 1; l >= 0; --l) {
        const MlpLayer& layer = mlp.layers[l];
        if (!layer.linear) {
            const Matrix& z = cache.z[l];
            for (int i = 0; i < delta.rows(); ++i)
                for (int j = 0; j < delta.cols(); ++j)
                    delta(i, j) *= activate_deriv(layer.act, z(i, j));
        }
        if (grads) {
            (*grads).dW[l] = cache.h[l].transpose() * delta;
            (*grads).db[l] = delta.colwise().sum().transpose();
        }
        delta = (delta * layer.W.transpose()).eval();
    }
    return delta;
}

// ---- training ---------------------------------------------------------

enum class Loss { Squared, CrossEntropy };

struct TrainConfig {
    double step_size = 1e-2;
    long long steps = 0;
    int batch = 0;  // 0 = full batch
    Loss loss = Loss::Squared;
    std::uint64_t seed = 0;
};

struct TrainTrace {
    std::vector<double> loss;
};

// Loss value and dL/dY. Squared loss is the half-mean-square
// J = (1/2n) ||Y_hat - Y||_F^2, so a step of size lambda matches the
// (lambda/n) convention of the closed-form trajectory formulas.
inline double loss_and_grad(Loss loss, const Matrix& Yhat, const Matrix& Y, Matrix* dY) {
    const double n = static_cast<double>(Yhat.rows());
    if (loss == Loss::Squared) {
        const Matrix r = Yhat - Y;
        if (dY) *dY = r / n;
        return 0.5 * r.squaredNorm() / n;
    }
    // softmax cross-entropy; Y holds one-hot rows (or +-1 labels for 1 col).
    if (Yhat.cols() == 1) {
        // logistic with labels in {-1, +1}
        double total = 0.0;
        if (dY) dY->resize(Yhat.rows(), 1);
        for (int i = 0; i < Yhat.rows(); ++i) {
            const double margin = Y(i, 0) * Yhat(i, 0);
            total += std::log1p(std::exp(-margin));
            if (dY) (*dY)(i, 0) = -Y(i, 0) / (1.0 + std::exp(margin)) / n;
        }
        return total / n;
    }
    double total = 0.0;
    if (dY) dY->resize(Yhat.rows(), Yhat.cols());
    for (int i = 0; i < Yhat.rows(); ++i) {
        const double zmax = Yhat.row(i).maxCoeff();
        const double lse = zmax + std::log((Yhat.row(i).array() - zmax).exp().sum());
        for (int j = 0; j < Yhat.cols(); ++j) {
            const double p = std::exp(Yhat(i, j) - lse);
            if (dY) (*dY)(i, j) = (p - Y(i, j)) / n;
            total -= Y(i, j) * (Yhat(i, j) - lse);
        }
    }
    return total / n;
}

inline void check_divergence(double loss, long long step) {
    if (!std::isfinite(loss))
        throw std::runtime_error("training diverged: non-finite loss at step " +
                                 std::to_string(step));
}

// Full-batch / minibatch gradient descent on the first-layer weights of the
// two-layer model (v stays fixed). Records the loss once per step.
inline TrainTrace train_sgd(TwoLayerNet& net, const Matrix& X, const Vector& y,
                            const TrainConfig& cfg) {
    require(X.rows() > 0, "train_sgd: empty dataset");
    require(X.cols() == net.d, "train_sgd: input dimension mismatch");
    require(X.rows() == y.size(), "train_sgd: target length mismatch");
    require(cfg.step_size > 0.0 && cfg.steps >= 0, "train_sgd: bad config");
    const double inv_sd = 1.0 / std::sqrt(static_cast<double>(net.d));
    const double inv_sm = 1.0 / std::sqrt(static_cast<double>(net.m));
    TrainTrace trace;
    const int n = static_cast<int>(X.rows());
    SplitRng rng(cfg.seed, 12);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (long long step = 0; step < cfg.steps; ++step) {
        const Matrix* Xb = &X;
        const Vector* yb = &y;
        Matrix Xs;
        Vector ys;
        if (cfg.batch > 0 && cfg.batch < n) {
            Xs.resize(cfg.batch, X.cols());
            ys.resize(cfg.batch);
            for (int i = 0; i < cfg.batch; ++i) {
                const int k = static_cast<int>(rng.uniform_int(n));
                Xs.row(i) = X.row(k);
                ys(i) = y(k);
            }
            Xb = &Xs;
            yb = &ys;
        }
        const double nb = static_cast<double>(Xb->rows());
        const Matrix pre = (*Xb) * net.W.transpose() * inv_sd;  // nb x m
        Matrix s(pre.rows(), pre.cols()), sp(pre.rows(), pre.cols());
        for (int i = 0; i < pre.rows(); ++i)
            for (int r = 0; r < pre.cols(); ++r) {
                s(i, r) = activate(net.activation, pre(i, r));
                sp(i, r) = activate_deriv(net.activation, pre(i, r));
            }
        const Vector f = s * net.v * inv_sm;
        const Vector resid = f - *yb;
        const double loss = 0.5 * resid.squaredNorm() / nb;
        check_divergence(loss, step);
        trace.loss.push_back(loss);
        // dJ/dW = (1/(nb*sqrt(m)*sqrt(d))) * (sp .* (v resid^T)^T)^T X
        Matrix D = sp;
        for (int i = 0; i < D.rows(); ++i)
            for (int r = 0; r < D.cols(); ++r) D(i, r) *= net.v(r) * resid(i);
        const Matrix gradW = (D.transpose() * (*Xb)) * (inv_sm * inv_sd / nb);
        net.W -= cfg.step_size * gradW;
    }
    return trace;
}

inline TrainTrace train_sgd(Mlp& mlp, const Matrix& X, const Matrix& Y, const TrainConfig& cfg) {
    require(X.rows() > 0, "train_sgd: empty dataset");
    require(X.cols() == mlp.input_dim(), "train_sgd: input dimension mismatch");
    require(X.rows() == Y.rows(), "train_sgd: target rows mismatch");
    require(Y.cols() == mlp.output_dim(), "train_sgd: target dimension mismatch");
    require(cfg.step_size > 0.0 && cfg.steps >= 0, "train_sgd: bad config");
    TrainTrace trace;
    const int n = static_cast<int>(X.rows());
    SplitRng rng(cfg.seed, 13);
    for (long long step = 0; step < cfg.steps; ++step) {
        const Matrix* Xb = &X;
        const Matrix* Yb = &Y;
        Matrix Xs, Ys;
        if (cfg.batch > 0 && cfg.batch < n) {
            Xs.resize(cfg.batch, X.cols());
            Ys.resize(cfg.batch, Y.cols());
            for (int i = 0; i < cfg.batch; ++i) {
                const int k = static_cast<int>(rng.uniform_int(n));
                Xs.row(i) = X.row(k);
                Ys.row(i) = Y.row(k);
            }
            Xb = &Xs;
            Yb = &Ys;
        }
        MlpCache cache;
        const Matrix Yhat = mlp_forward(mlp, *Xb, &cache);
        Matrix dY;
        const double loss = loss_and_grad(cfg.loss, Yhat, *Yb, &dY);
        check_divergence(loss, step);
        trace.loss.push_back(loss);
        MlpGrads grads;
        mlp_backward(mlp, cache, dY, &grads);
        for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
            mlp.layers[l].W -= cfg.step_size * grads.dW[l];
            mlp.layers[l].b -= cfg.step_size * grads.db[l];
        }
    }
    return trace;
}

// ---- checkpoints ------------------------------------------------------

inline void write_matrix_bin(std::ostream& os, const Matrix& m) {
    const std::int64_t r = m.rows(), c = m.cols();
    os.write(reinterpret_cast<const char*>(&r), 8);
    os.write(reinterpret_cast<const char*>(&c), 8);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) {
            const double v = m(i, j);
            os.write(reinterpret_cast<const char*>(&v), 8);
        }
}

inline Matrix read_matrix_bin(std::istream& is) {
    std::int64_t r, c;
    is.read(reinterpret_cast<char*>(&r), 8);
    is.read(reinterpret_cast<char*>(&c), 8);
    require(is.good() && r >= 0 && c >= 0, "read_matrix_bin: bad header");
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) is.read(reinterpret_cast<char*>(&m(i, j)), 8);
    require(is.good(), "read_matrix_bin: truncated");
    return m;
}

inline void save_mlp(const Mlp& mlp, const std::string& path_prefix) {
    nlohmann::json desc;
    desc["version"] = 1;
    desc["kind"] = "mlp";
    desc["layers"] = nlohmann::json::array();
    for (const auto& layer : mlp.layers)
        desc["layers"].push_back({{"in", layer.W.rows()},
                                  {"out", layer.W.cols()},
                                  {"activation", activation_name(layer.act)},
                                  {"linear", layer.linear}});
    std::ofstream jf(path_prefix + ".json");
    jf << desc.dump(2) << "\n";
    std::ofstream bf(path_prefix + ".bin", std::ios::binary);
    const char magic[8] = {'P', 'L', 'M', 'L', 'P', '0', '0', '1'};
    bf.write(magic, 8);
    for (const auto& layer : mlp.layers) {
        write_matrix_bin(bf, layer.W);
        write_matrix_bin(bf, layer.b);
    }
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "tanh") return Activation::Tanh;
    if (s == "erf") return Activation::Erf;
    throw std::invalid_argument("unknown activation: " + s);
}

inline Mlp load_mlp(const std::string& path_prefix) {
    std::ifstream jf(path_prefix + ".json");
    require(jf.good(), "load_mlp: missing descriptor");
    nlohmann::json desc = nlohmann::json::parse(jf);
    std::ifstream bf(path_prefix + ".bin", std::ios::binary);
    require(bf.good(), "load_mlp: missing weights");
    char magic[8];
    bf.read(magic, 8);
    require(std::string(magic, 5) == "PLMLP", "load_mlp: bad magic");
    Mlp mlp;
    for (const auto& jl : desc["layers"]) {
        MlpLayer layer;
        layer.W = read_matrix_bin(bf);
        layer.b = read_matrix_bin(bf);
        layer.act = activation_from_name(jl["activation"].get<std::string>());
        layer.linear = jl["linear"].get<bool>();
        mlp.layers.push_back(std::move(layer));
    }
    return mlp;
}

inline void save_two_layer(const TwoLayerNet& net, const std::string& path_prefix) {
    nlohmann::json desc;
    desc["version"] = 1;
    desc["kind"] = "two_layer";
    desc["m"] = net.m;
    desc["d"] = net.d;
    desc["activation"] = activation_name(net.activation);
    std::ofstream jf(path_prefix + ".json");
    jf << desc.dump(2) << "\n";
    std::ofstream bf(path_prefix + ".bin", std::ios::binary);
    const char magic[8] = {'P', 'L', 'T', 'L', 'N', '0', '0', '1'};
    bf.write(magic, 8);
    write_matrix_bin(bf, net.W);
    write_matrix_bin(bf, net.v);
}

inline TwoLayerNet load_two_layer(const std::string& path_prefix) {
    std::ifstream jf(path_prefix + ".json");
    require(jf.good(), "load_two_layer: missing descriptor");
    nlohmann::json desc = nlohmann::json::parse(jf);
    std::ifstream bf(path_prefix + ".bin", std::ios::binary);
    require(bf.good(), "load_two_layer: missing weights");
    char magic[8];
    bf.read(magic, 8);
    require(std::string(magic, 5) == "PLTLN", "load_two_layer: bad magic");
    TwoLayerNet net;
    net.W = read_matrix_bin(bf);
    net.v = read_matrix_bin(bf);
    net.m = desc["m"].get<int>();
    net.d = desc["d"].get<int>();
    net.activation = activation_from_name(desc["activation"].get<std::string>());
    return net;
}

}  // namespace primelab

#endif  // PRIMELAB_NNET_HPP
