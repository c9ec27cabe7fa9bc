#pragma once

#include "ratioflow/common.hpp"
#include "ratioflow/parameter_store.hpp"

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace ratioflow {

// Canonical SELU constants (Klambauer et al.), full double precision.
inline constexpr double kSeluLambda = 1.0507009873554804934193349852946;
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

inline double selu(double x) {
    return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * std::expm1(x);
}

inline double selu_deriv(double x) {
    return x > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x);
}

/// Hidden-layer activation; the output layer is always identity.
enum class Activation { selu, identity };

inline const char* to_string(Activation a) {
    return a == Activation::selu ? "selu" : "identity";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "selu") return Activation::selu;
    if (s == "identity") return Activation::identity;
    throw ConfigError("unknown activation '" + s + "'");
}

struct MlpConfig {
    std::vector<int> layer_widths;  // [in, h1, ..., out]
    Activation activation = Activation::selu;

    int input_width() const { return layer_widths.front(); }
    int output_width() const { return layer_widths.back(); }
    int n_layers() const { return static_cast<int>(layer_widths.size()) - 1; }

    void validate() const {
        if (layer_widths.size() < 2) throw ConfigError("MLP needs at least one layer");
        for (int w : layer_widths)
            if (w <= 0) throw ConfigError("MLP layer widths must be positive");
    }
};

inline std::string mlp_weight_name(int layer) { return "W" + std::to_string(layer); }
inline std::string mlp_bias_name(int layer) { return "b" + std::to_string(layer); }

/// LeCun-normal initialization: W_ij ~ N(0, 1/fan_in), b = 0.
inline ParameterStore make_mlp_params(const MlpConfig& cfg, Rng& rng) {
    cfg.validate();
    ParameterStore p;
    for (int k = 0; k < cfg.n_layers(); ++k) {
        const Index in = cfg.layer_widths[k];
        const Index out = cfg.layer_widths[k + 1];
        const double stddev = 1.0 / std::sqrt(static_cast<double>(in));
        Vec w(out * in);
        for (Index i = 0; i < w.size(); ++i) w[i] = stddev * rng.normal();
        p.add(mlp_weight_name(k), {out, in}, std::move(w));
        p.add_zeros(mlp_bias_name(k), {out});
    }
    return p;
}

inline Eigen::Map<const Mat> mlp_weight(const ParameterStore& p, int layer) {
    const auto& e = p.at(mlp_weight_name(layer));
    return {e.values.data(), e.shape[0], e.shape[1]};
}

inline Eigen::Map<const Vec> mlp_bias(const ParameterStore& p, int layer) {
    const auto& e = p.at(mlp_bias_name(layer));
    return {e.values.data(), e.shape[0]};
}

inline void check_mlp_params(const ParameterStore& p, const MlpConfig& cfg) {
    cfg.validate();
    for (int k = 0; k < cfg.n_layers(); ++k) {
        const auto& w = p.at(mlp_weight_name(k));
        if (w.shape != std::vector<std::int64_t>{cfg.layer_widths[k + 1], cfg.layer_widths[k]})
            throw ConfigError("parameter shape mismatch for " + mlp_weight_name(k));
    }
}

/// Cached layer inputs and activation derivatives from one forward pass.
/// acts[k] is the input of layer k; dact[k] holds phi'(z_k) for hidden layers.
struct MlpWorkspace {
    std::vector<Mat> acts;
    std::vector<Mat> dact;
};

/// Forward over a batch (columns are samples). Pure in (params, X).
inline Mat mlp_forward_batch(const ParameterStore& p, const MlpConfig& cfg, const Mat& X,
                             MlpWorkspace* ws = nullptr) {
    if (X.rows() != cfg.input_width())
        throw ConfigError("MLP input width mismatch: got " + std::to_string(X.rows()) +
                          ", expected " + std::to_string(cfg.input_width()));
    const int L = cfg.n_layers();
    if (ws) {
        ws->acts.assign(static_cast<std::size_t>(L) + 1, Mat());
        ws->dact.assign(static_cast<std::size_t>(L), Mat());
        ws->acts[0] = X;
    }
    Mat a = X;
    for (int k = 0; k < L; ++k) {
        Mat z = (mlp_weight(p, k) * a).colwise() + mlp_bias(p, k);
        const bool hidden = k + 1 < L;
        if (hidden && cfg.activation == Activation::selu) {
            if (ws) ws->dact[k] = z.unaryExpr([](double v) { return selu_deriv(v); });
            a = z.unaryExpr([](double v) { return selu(v); });
        } else {
            a = std::move(z);
        }
        if (ws) ws->acts[k + 1] = a;
    }
    return a;
}

/// Jacobian-vector product w.r.t. the input, reusing a forward workspace.
/// T has one tangent column per sample column of the cached batch.
inline Mat mlp_jvp_batch(const ParameterStore& p, const MlpConfig& cfg, const MlpWorkspace& ws,
                         const Mat& T) {
    const int L = cfg.n_layers();
    Mat t = T;
    for (int k = 0; k < L; ++k) {
        t = mlp_weight(p, k) * t;
        const bool hidden = k + 1 < L;
        if (hidden && cfg.activation == Activation::selu) t.array() *= ws.dact[k].array();
    }
    return t;
}

/// Reverse pass from dL/d(output). Accumulates parameter gradients into
/// `grads` (congruent store) and returns dL/d(input).
inline Mat mlp_backward_batch(const ParameterStore& p, const MlpConfig& cfg, const MlpWorkspace& ws,
                              const Mat& grad_out, ParameterStore& grads) {
    const int L = cfg.n_layers();
    Mat g = grad_out;
    for (int k = L - 1; k >= 0; --k) {
        const bool hidden = k + 1 < L;
        if (hidden && cfg.activation == Activation::selu) g.array() *= ws.dact[k].array();
        auto& gw = grads.at(mlp_weight_name(k));
        auto& gb = grads.at(mlp_bias_name(k));
        Eigen::Map<Mat> gw_m(gw.values.data(), gw.shape[0], gw.shape[1]);
        gw_m.noalias() += g * ws.acts[k].transpose();
        gb.values += g.rowwise().sum();
        if (k > 0) g = mlp_weight(p, k).transpose() * g;
    }
    return mlp_weight(p, 0).transpose() * g;
}

/// Interleaved sin/cos features at geometrically spaced frequencies
/// (transformer convention, base 10000): component 2i is sin(t * base^{-2i/dim}),
/// component 2i+1 the matching cos.
inline Vec sinusoidal_time_embed(double t, int dim, double base = 10000.0) {
    if (dim <= 0 || dim % 2 != 0) throw ConfigError("time embedding dim must be even and positive");
    Vec e(dim);
    for (int i = 0; i < dim / 2; ++i) {
        const double freq = std::pow(base, -2.0 * i / dim);
        e[2 * i] = std::sin(t * freq);
        e[2 * i + 1] = std::cos(t * freq);
    }
    return e;
}

inline Mat sinusoidal_time_embed_batch(const RowVec& ts, int dim, double base = 10000.0) {
    if (dim <= 0 || dim % 2 != 0) throw ConfigError("time embedding dim must be even and positive");
    Mat e(dim, ts.size());
    for (Index j = 0; j < ts.size(); ++j) e.col(j) = sinusoidal_time_embed(ts[j], dim, base);
    return e;
}

/// One network input: state vector, scalar time, and a precomputed condition
/// embedding. Flattened as [state; time; condition] for the plain-MLP entry
/// points below.
struct NetworkInput {
    Vec state;
    double time = 0.0;
    Vec condition_embedding;

    Index flat_width() const { return state.size() + 1 + condition_embedding.size(); }

    Vec flatten() const {
        Vec v(flat_width());
        v.head(state.size()) = state;
        v[state.size()] = time;
        v.tail(condition_embedding.size()) = condition_embedding;
        return v;
    }

    /// Tangent that perturbs only the state block.
    Vec flatten_tangent(const Vec& state_tangent) const {
        if (state_tangent.size() != state.size())
            throw ConfigError("tangent dimension does not match state");
        Vec v = Vec::Zero(flat_width());
        v.head(state.size()) = state_tangent;
        return v;
    }
};

inline Vec mlp_forward(const ParameterStore& p, const MlpConfig& cfg, const NetworkInput& in) {
    const Vec flat = in.flatten();
    if (!flat.allFinite()) throw ConfigError("network input has non-finite components");
    return mlp_forward_batch(p, cfg, flat);
}

/// Forward-mode value and J*v w.r.t. the state block, exact to rounding.
inline std::pair<Vec, Vec> directional_derivative(const ParameterStore& p, const MlpConfig& cfg,
                                                  const NetworkInput& in, const Vec& tangent) {
    MlpWorkspace ws;
    Vec value = mlp_forward_batch(p, cfg, in.flatten(), &ws);
    Vec jvp = mlp_jvp_batch(p, cfg, ws, in.flatten_tangent(tangent));
    return {std::move(value), std::move(jvp)};
}

/// Exact divergence of the state->output map: sum_i e_i^T J e_i via d JVP
/// passes sharing one forward cache.
inline double divergence_exact(const ParameterStore& p, const MlpConfig& cfg,
                               const NetworkInput& in) {
    const Index d = in.state.size();
    if (cfg.output_width() != d)
        throw ConfigError("divergence_exact requires output width == state width");
    MlpWorkspace ws;
    mlp_forward_batch(p, cfg, in.flatten(), &ws);
    double div = 0.0;
    for (Index i = 0; i < d; ++i) {
        Vec tangent = Vec::Zero(d);
        tangent[i] = 1.0;
        const Vec jvp = mlp_jvp_batch(p, cfg, ws, in.flatten_tangent(tangent));
        div += jvp[i];
    }
    return div;
}

/// Unbiased Rademacher-probe estimator of the divergence: mean of v^T J v.
inline double divergence_hutchinson(const ParameterStore& p, const MlpConfig& cfg,
                                    const NetworkInput& in, int n_probes, Rng& rng) {
    const Index d = in.state.size();
    if (cfg.output_width() != d)
        throw ConfigError("divergence_hutchinson requires output width == state width");
    if (n_probes < 1) throw ConfigError("n_probes must be >= 1");
    MlpWorkspace ws;
    mlp_forward_batch(p, cfg, in.flatten(), &ws);
    double acc = 0.0;
    Vec v(d);
    for (int k = 0; k < n_probes; ++k) {
        for (Index i = 0; i < d; ++i) v[i] = rng.rademacher();
        const Vec jvp = mlp_jvp_batch(p, cfg, ws, in.flatten_tangent(v));
        acc += v.dot(jvp);
    }
    return acc / n_probes;
}

/// Mean-over-batch squared error (summed over output components) and its
/// reverse-mode gradient w.r.t. every parameter.
inline std::pair<double, ParameterStore> loss_and_grad(const ParameterStore& p,
                                                       const MlpConfig& cfg,
                                                       const std::vector<NetworkInput>& inputs,
                                                       const std::vector<Vec>& targets) {
    if (inputs.empty()) throw ConfigError("loss_and_grad: empty batch");
    if (inputs.size() != targets.size()) throw ConfigError("loss_and_grad: batch size mismatch");
    const Index B = static_cast<Index>(inputs.size());
    Mat X(inputs[0].flat_width(), B);
    Mat Y(cfg.output_width(), B);
    for (Index j = 0; j < B; ++j) {
        X.col(j) = inputs[static_cast<std::size_t>(j)].flatten();
        Y.col(j) = targets[static_cast<std::size_t>(j)];
    }
    MlpWorkspace ws;
    Mat out = mlp_forward_batch(p, cfg, X, &ws);
    const Mat resid = out - Y;
    const double loss = resid.squaredNorm() / static_cast<double>(B);
    ParameterStore grads = p.zeros_like();
    mlp_backward_batch(p, cfg, ws, (2.0 / static_cast<double>(B)) * resid, grads);
    return {loss, std::move(grads)};
}

struct AdamParams {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    ParameterStore first_moment;
    ParameterStore second_moment;
    std::int64_t step_count = 0;

    static AdamState like(const ParameterStore& params) {
        return AdamState{params.zeros_like(), params.zeros_like(), 0};
    }
};

/// Canonical Adam update with bias correction, in place.
inline void adam_step(ParameterStore& params, const ParameterStore& grads, AdamState& state,
                      const AdamParams& ap = {}) {
    if (!params.congruent_with(grads) || !params.congruent_with(state.first_moment))
        throw ConfigError("adam_step: incongruent parameter/gradient/state shapes");
    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(ap.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(ap.beta2, static_cast<double>(state.step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& th = params[i].values;
        const auto& g = grads[i].values;
        auto& m = state.first_moment[i].values;
        auto& v = state.second_moment[i].values;
        m = ap.beta1 * m + (1.0 - ap.beta1) * g;
        v = ap.beta2 * v + (1.0 - ap.beta2) * g.cwiseProduct(g);
        th.array() -= ap.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + ap.epsilon);
    }
}

}  // namespace ratioflow
