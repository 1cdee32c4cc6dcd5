#ifndef PRIMELAB_PRIMING_HPP
#define PRIMELAB_PRIMING_HPP

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "primelab/matrix.hpp"
#include "primelab/nnet.hpp"
#include "primelab/synthdata.hpp"

namespace primelab {

// ---- key-input extraction ---------------------------------------------

struct KeyInputSpec {
    enum class Kind { Identity, FeatureSlice, LastFrame };
    Kind kind = Kind::Identity;
    int slice_begin = 0;  // FeatureSlice: [begin, end)
    int slice_end = 0;
    int history = 1;    // LastFrame: frames stacked oldest-first
    int frame_dim = 0;  // LastFrame: dims per frame

    int output_dim(int input_dim) const {
        switch (kind) {
            case Kind::Identity: return input_dim;
            case Kind::FeatureSlice: return slice_end - slice_begin;
            case Kind::LastFrame: return frame_dim;
        }
        return 0;
    }
};

inline Matrix extract_key_batch(const KeyInputSpec& spec, const Matrix& X) {
    switch (spec.kind) {
        case KeyInputSpec::Kind::Identity: return X;
        case KeyInputSpec::Kind::FeatureSlice:
            require(spec.slice_begin >= 0 && spec.slice_end <= X.cols() &&
                        spec.slice_begin < spec.slice_end,
                    "extract_key: slice out of range");
            return X.middleCols(spec.slice_begin, spec.slice_end - spec.slice_begin);
        case KeyInputSpec::Kind::LastFrame:
            require(spec.history * spec.frame_dim == X.cols(),
                    "extract_key: input does not decompose into frames");
            return X.rightCols(spec.frame_dim);
    }
    throw std::invalid_argument("extract_key: unknown kind");
}

inline Vector extract_key(const KeyInputSpec& spec, const Vector& x) {
    Matrix row = extract_key_batch(spec, x.transpose());
    return row.transpose();
}

// ---- PrimeNet composition ---------------------------------------------

enum class Fusion { InputConcat, MiddleConcat, PenultimateConcat };

// Which activations of the priming module feed the priming variable. Output
// is the paper-style coarse estimate; a hidden layer is the depth ablation.
struct ZetaSource {
    bool from_output = true;
    int hidden_layer = 0;  // index into priming layers when from_output is false
};

struct PrimeNetModel {
    Mlp priming;  // g
    Mlp main;     // f; input of layer fusion_layer() is [hidden, zeta]
    KeyInputSpec key_input;
    Fusion fusion = Fusion::PenultimateConcat;
    bool stop_gradient = true;
    int zeta_dim = 0;
    bool zeta_relu = false;  // rectify zeta before fusion (classification style)
    ZetaSource zeta_source;

    int fusion_layer() const {
        const int L = static_cast<int>(main.layers.size());
        switch (fusion) {
            case Fusion::InputConcat: return 0;
            case Fusion::MiddleConcat: return L / 2;
            case Fusion::PenultimateConcat: return L - 1;
        }
        return 0;
    }
};

// Builds a PrimeNet whose main trunk has the given hidden widths; the layer
// at the fusion point is widened to accept the concatenated priming variable.
inline PrimeNetModel make_primenet(int input_dim, const KeyInputSpec& key,
                                   const std::vector<int>& priming_hidden,
                                   const std::vector<int>& main_hidden, int output_dim,
                                   Fusion fusion, bool stop_gradient, Activation act,
                                   std::uint64_t seed, ZetaSource zeta_source = {},
                                   bool zeta_passthrough = false) {
    PrimeNetModel model;
    model.key_input = key;
    model.fusion = fusion;
    model.stop_gradient = stop_gradient;
    model.zeta_source = zeta_source;

    std::vector<int> gdims;
    gdims.push_back(key.output_dim(input_dim));
    for (int h : priming_hidden) gdims.push_back(h);
    gdims.push_back(output_dim);
    model.priming = make_mlp(gdims, act, seed * 2 + 1);

    model.zeta_dim = zeta_source.from_output
                         ? output_dim
                         : static_cast<int>(model.priming.layers.at(zeta_source.hidden_layer).W.cols());

    std::vector<int> fdims;
    fdims.push_back(input_dim);
    for (int h : main_hidden) fdims.push_back(h);
    fdims.push_back(output_dim);
    model.main = make_mlp(fdims, act, seed * 2 + 2);
    // widen the fused layer's input
    const int fl = model.fusion_layer();
    MlpLayer& layer = model.main.layers.at(fl);
    Mlp widened = make_mlp({static_cast<int>(layer.W.rows()) + model.zeta_dim,
                            static_cast<int>(layer.W.cols())},
                           act, seed * 2 + 3);
    layer.W = widened.layers[0].W;
    if (zeta_passthrough) {
        // initialize the fused block as an identity so the main network
        // starts as a pass-through refinement of the priming estimate;
        // only meaningful when the fused layer maps zeta straight to the
        // output coordinates
        require(fl == static_cast<int>(model.main.layers.size()) - 1 &&
                    model.zeta_dim == static_cast<int>(layer.W.cols()),
                "make_primenet: pass-through needs output-layer fusion with matching width");
        layer.W.bottomRows(model.zeta_dim) =
            Matrix::Identity(model.zeta_dim, static_cast<int>(layer.W.cols()));
    }
    return model;
}

namespace detail {

// Forward through the main trunk with zeta concatenated before layer
// fusion_layer; caches per-layer inputs for the backward pass.
struct PrimedCache {
    std::vector<Matrix> in;  // input actually fed to each layer (post concat)
    std::vector<Matrix> z;
};

inline Matrix primed_main_forward(const PrimeNetModel& model, const Matrix& X, const Matrix& zeta,
                                  PrimedCache* cache) {
    const int fl = model.fusion_layer();
    Matrix h = X;
    if (cache) {
        cache->in.clear();
        cache->z.clear();
    }
    for (int l = 0; l < static_cast<int>(model.main.layers.size()); ++l) {
        if (l == fl) {
            Matrix joined(h.rows(), h.cols() + zeta.cols());
            joined << h, zeta;
            h = std::move(joined);
        }
        const MlpLayer& layer = model.main.layers[l];
        require(h.cols() == layer.W.rows(), "primed forward: fused dimension mismatch");
        if (cache) cache->in.push_back(h);
        Matrix z = (h * layer.W).rowwise() + layer.b.transpose();
        if (layer.linear) {
            h = z;
        } else {
            h.resize(z.rows(), z.cols());
            for (int i = 0; i < z.rows(); ++i)
                for (int j = 0; j < z.cols(); ++j) h(i, j) = activate(layer.act, z(i, j));
        }
        if (cache) cache->z.push_back(z);
    }
    return h;
}

// Backward through the main trunk; returns dL/dzeta and fills main grads.
inline Matrix primed_main_backward(const PrimeNetModel& model, const PrimedCache& cache,
                                   const Matrix& dY, MlpGrads* grads) {
    const int fl = model.fusion_layer();
    Matrix delta = dY;
    if (grads) {
        grads->dW.assign(model.main.layers.size(), Matrix());
        grads->db.assign(model.main.layers.size(), Vector());
    }
    Matrix d_zeta;
    for (int l = static_cast<int>(model.main.layers.size()) - 1; l >= 0; --l) {
        const MlpLayer& layer = model.main.layers[l];
        if (!layer.linear) {
            const Matrix& z = cache.z[l];
            for (int i = 0; i < delta.rows(); ++i)
                for (int j = 0; j < delta.cols(); ++j)
                    delta(i, j) *= activate_deriv(layer.act, z(i, j));
        }
        if (grads) {
            grads->dW[l] = cache.in[l].transpose() * delta;
            grads->db[l] = delta.colwise().sum().transpose();
        }
        delta = (delta * layer.W.transpose()).eval();
        if (l == fl) {
            d_zeta = delta.rightCols(model.zeta_dim);
            delta = delta.leftCols(delta.cols() - model.zeta_dim).eval();
        }
    }
    return d_zeta;
}

// zeta before the optional rectifier, given a cached priming forward.
inline Matrix zeta_pre_from_cache(const PrimeNetModel& model, const MlpCache& gcache,
                                  const Matrix& gout) {
    if (model.zeta_source.from_output) return gout;
    return gcache.h.at(model.zeta_source.hidden_layer + 1);
}

}  // namespace detail

// Batch forward of the full composition; returns (y_hat, zeta).
inline std::pair<Matrix, Matrix> forward_primed_batch(const PrimeNetModel& model, const Matrix& X) {
    const Matrix key = extract_key_batch(model.key_input, X);
    MlpCache gcache;
    const Matrix gout = mlp_forward(model.priming, key, &gcache);
    Matrix zeta = detail::zeta_pre_from_cache(model, gcache, gout);
    if (model.zeta_relu) zeta = zeta.cwiseMax(0.0);
    const Matrix yhat = detail::primed_main_forward(model, X, zeta, nullptr);
    return {yhat, zeta};
}

inline std::pair<Vector, Vector> forward_primed(const PrimeNetModel& model, const Vector& x) {
    auto [yhat, zeta] = forward_primed_batch(model, x.transpose());
    return {yhat.transpose(), zeta.transpose()};
}

// Main-module output with the priming variable replaced by an override; the
// priming module is not evaluated.
inline Matrix intervene_zeta_batch(const PrimeNetModel& model, const Matrix& X,
                                   const Matrix& zeta_override) {
    require(zeta_override.cols() == model.zeta_dim, "intervene_zeta: override dimension mismatch");
    require(zeta_override.rows() == X.rows(), "intervene_zeta: override row mismatch");
    return detail::primed_main_forward(model, X, zeta_override, nullptr);
}

inline Vector intervene_zeta(const PrimeNetModel& model, const Vector& x,
                             const Vector& zeta_override) {
    return intervene_zeta_batch(model, x.transpose(), zeta_override.transpose()).transpose();
}

// Counterfactual input where every frame of the stacked history equals the
// most recent frame.
inline Matrix repeat_last_frame(const Matrix& X, int H) {
    require(H >= 1 && X.cols() % H == 0, "intervene_history: input does not split into H frames");
    const int frame = static_cast<int>(X.cols()) / H;
    Matrix out(X.rows(), X.cols());
    for (int k = 0; k < H; ++k) out.middleCols(k * frame, frame) = X.rightCols(frame);
    return out;
}

inline Matrix intervene_history(const Mlp& model, const Matrix& X_history, int H) {
    return mlp_forward(model, repeat_last_frame(X_history, H));
}

inline Matrix intervene_history(const PrimeNetModel& model, const Matrix& X_history, int H) {
    return forward_primed_batch(model, repeat_last_frame(X_history, H)).first;
}

// ---- joint training ---------------------------------------------------

struct PrimeTrace {
    std::vector<double> loss_priming;
    std::vector<double> loss_main;
};

// Per step: the priming parameters receive the priming-loss gradient; the
// main parameters receive the main-loss gradient. With stop_gradient set the
// priming variable is a constant in the main backward pass; without it the
// main loss additionally flows into the priming module.
inline PrimeTrace train_primenet(PrimeNetModel& model, const Matrix& X, const Matrix& Y,
                                 const TrainConfig& cfg, double priming_weight = 1.0,
                                 double main_weight = 1.0, bool train_main = true) {
    require(X.rows() > 0 && X.rows() == Y.rows(), "train_primenet: bad dataset");
    require(cfg.step_size > 0.0 && cfg.steps >= 0, "train_primenet: bad config");
    PrimeTrace trace;
    const int n = static_cast<int>(X.rows());
    SplitRng rng(cfg.seed, 14);
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
        const Matrix key = extract_key_batch(model.key_input, *Xb);
        MlpCache gcache;
        const Matrix gout = mlp_forward(model.priming, key, &gcache);
        Matrix dG;
        const double gloss = loss_and_grad(cfg.loss, gout, *Yb, &dG);
        check_divergence(gloss, step);
        trace.loss_priming.push_back(gloss);
        MlpGrads ggrads;
        mlp_backward(model.priming, gcache, priming_weight * dG, &ggrads);

        if (train_main) {
            Matrix zeta_pre = detail::zeta_pre_from_cache(model, gcache, gout);
            Matrix zeta = model.zeta_relu ? zeta_pre.cwiseMax(0.0).eval() : zeta_pre;
            detail::PrimedCache fcache;
            const Matrix yhat = detail::primed_main_forward(model, *Xb, zeta, &fcache);
            Matrix dY;
            const double floss = loss_and_grad(cfg.loss, yhat, *Yb, &dY);
            check_divergence(floss, step);
            trace.loss_main.push_back(floss);
            MlpGrads fgrads;
            Matrix d_zeta = detail::primed_main_backward(model, fcache, main_weight * dY, &fgrads);
            for (std::size_t l = 0; l < model.main.layers.size(); ++l) {
                model.main.layers[l].W -= cfg.step_size * fgrads.dW[l];
                model.main.layers[l].b -= cfg.step_size * fgrads.db[l];
            }
            if (!model.stop_gradient) {
                if (model.zeta_relu)
                    for (int i = 0; i < d_zeta.rows(); ++i)
                        for (int j = 0; j < d_zeta.cols(); ++j)
                            if (zeta_pre(i, j) <= 0.0) d_zeta(i, j) = 0.0;
                // route the main-loss gradient into the priming module from
                // the zeta source node
                MlpGrads extra;
                if (model.zeta_source.from_output) {
                    mlp_backward(model.priming, gcache, d_zeta, &extra);
                    for (std::size_t l = 0; l < model.priming.layers.size(); ++l) {
                        ggrads.dW[l] += extra.dW[l];
                        ggrads.db[l] += extra.db[l];
                    }
                } else {
                    // backprop only through layers up to the source layer
                    const int src = model.zeta_source.hidden_layer;
                    Matrix delta = d_zeta;
                    for (int l = src; l >= 0; --l) {
                        const MlpLayer& layer = model.priming.layers[l];
                        if (!layer.linear) {
                            const Matrix& z = gcache.z[l];
                            for (int i = 0; i < delta.rows(); ++i)
                                for (int j = 0; j < delta.cols(); ++j)
                                    delta(i, j) *= activate_deriv(layer.act, z(i, j));
                        }
                        ggrads.dW[l] += gcache.h[l].transpose() * delta;
                        ggrads.db[l] += delta.colwise().sum().transpose();
                        delta = (delta * layer.W.transpose()).eval();
                    }
                }
            }
        }
        for (std::size_t l = 0; l < model.priming.layers.size(); ++l) {
            model.priming.layers[l].W -= cfg.step_size * ggrads.dW[l];
            model.priming.layers[l].b -= cfg.step_size * ggrads.db[l];
        }
    }
    return trace;
}

// ---- intervention metrics ---------------------------------------------

struct InterventionReport {
    Vector effect_values;  // per-sample |f(do(zeta)=a) - f(do(zeta)=b)|
    double flip_rate = 0.0;
    double baseline_flip_rate = 0.0;
    int moving_count = 0;
};

// Flip rate of a predictor under the repeated-current-frame intervention:
// among samples predicted moving (|f(x)| > threshold), the fraction whose
// prediction magnitude drops below the threshold on do(x).
inline InterventionReport flip_rate(const std::function<Vector(const Matrix&)>& predictor,
                                    const Matrix& X_history, int H, double moving_threshold) {
    require(X_history.rows() > 0, "flip_rate: empty dataset");
    require(moving_threshold > 0.0, "flip_rate: threshold must be positive");
    const Vector base = predictor(X_history);
    const Vector counterfactual = predictor(repeat_last_frame(X_history, H));
    int moving = 0, flipped = 0;
    for (int i = 0; i < base.size(); ++i) {
        if (std::abs(base(i)) > moving_threshold) {
            ++moving;
            if (std::abs(counterfactual(i)) < moving_threshold) ++flipped;
        }
    }
    if (moving == 0) throw std::runtime_error("flip_rate: no samples predicted moving");
    InterventionReport rep;
    rep.effect_values = (base - counterfactual).cwiseAbs();
    rep.moving_count = moving;
    rep.flip_rate = static_cast<double>(flipped) / moving;
    return rep;
}

// do(zeta) effect statistic |f(do(zeta)=lo) - f(do(zeta)=hi)| per sample.
inline InterventionReport zeta_effect(const PrimeNetModel& model, const Matrix& X, double lo,
                                      double hi) {
    require(model.zeta_dim == 1, "zeta_effect: scalar priming variable expected");
    Matrix zlo = Matrix::Constant(X.rows(), 1, lo);
    Matrix zhi = Matrix::Constant(X.rows(), 1, hi);
    const Matrix a = intervene_zeta_batch(model, X, zlo);
    const Matrix b = intervene_zeta_batch(model, X, zhi);
    InterventionReport rep;
    rep.effect_values = (a - b).cwiseAbs().col(0);
    return rep;
}

}  // namespace primelab

#endif  // PRIMELAB_PRIMING_HPP
