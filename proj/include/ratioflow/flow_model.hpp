#pragma once

#include "ratioflow/common.hpp"
#include "ratioflow/datasets.hpp"
#include "ratioflow/fields.hpp"
#include "ratioflow/nn.hpp"
#include "ratioflow/ratio_engine.hpp"
#include "ratioflow/schedules.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ratioflow {

struct ModelConfig {
    int data_dim = 2;
    int latent_width = 128;
    int encoder_layers = 2;       // weight layers in the state encoder
    int time_embed_dim = 32;      // sinusoidal feature count; 0 feeds raw t
    int time_feature_width = 32;  // output width of the time representation net
    int cond_embed_dim = 16;      // per condition variable
    int head_width = 64;
    int head_layers = 2;  // hidden layers in each head
    Activation activation = Activation::selu;

    void validate() const {
        if (data_dim < 1) throw ConfigError("data_dim must be >= 1");
        if (latent_width < 1 || encoder_layers < 1) throw ConfigError("bad encoder shape");
        if (time_embed_dim < 0 || time_embed_dim % 2 != 0)
            throw ConfigError("time_embed_dim must be even (or 0 for raw time)");
        if (time_feature_width < 1) throw ConfigError("time_feature_width must be >= 1");
        if (cond_embed_dim < 1) throw ConfigError("cond_embed_dim must be >= 1");
        if (head_width < 1 || head_layers < 1) throw ConfigError("bad head shape");
    }

    MlpConfig encoder_cfg() const {
        MlpConfig c;
        c.layer_widths.push_back(data_dim);
        for (int i = 0; i < encoder_layers; ++i) c.layer_widths.push_back(latent_width);
        c.activation = activation;
        return c;
    }

    MlpConfig time_cfg() const {
        MlpConfig c;
        c.layer_widths = {time_embed_dim > 0 ? time_embed_dim : 1, time_feature_width};
        c.activation = activation;
        return c;
    }

    MlpConfig head_cfg(int n_condition_vars) const {
        MlpConfig c;
        c.layer_widths.push_back(latent_width + time_feature_width +
                                 n_condition_vars * cond_embed_dim);
        for (int i = 0; i < head_layers; ++i) c.layer_widths.push_back(head_width);
        c.layer_widths.push_back(data_dim);
        c.activation = activation;
        return c;
    }
};

inline std::string cond_embed_name(std::size_t var) { return "emb" + std::to_string(var); }

/// Conditional flow-matching model: a shared state encoder, sinusoidal time
/// features through a small net, one embedding table per condition variable
/// (with a reserved empty-token row), and separate velocity and score heads
/// reading the concatenated features.
struct FlowScoreModel {
    ModelConfig config;
    Schedule schedule;
    ConditionSpec conditions;
    double t_min = 1e-3;
    double t_max = 1.0 - 1e-3;

    ParameterStore encoder;
    ParameterStore time_net;
    ParameterStore cond_embed;
    ParameterStore velocity_head;
    ParameterStore score_head;

    Index data_dim() const { return config.data_dim; }

    Index cond_feature_width() const {
        return static_cast<Index>(conditions.n_variables()) * config.cond_embed_dim;
    }

    void check_time(double t) const {
        if (!(t >= t_min - 1e-9 && t <= t_max + 1e-9))
            throw std::domain_error("model evaluated at t=" + std::to_string(t) +
                                    " outside its window [" + std::to_string(t_min) + ", " +
                                    std::to_string(t_max) + "]");
    }
};

inline FlowScoreModel make_flow_score_model(const ModelConfig& config,
                                            const ConditionSpec& conditions,
                                            const Schedule& schedule, Rng& rng,
                                            double t_min = 1e-3, double t_max = 1.0 - 1e-3) {
    config.validate();
    conditions.validate();
    if (!(t_min >= 0.0 && t_min < t_max && t_max <= 1.0))
        throw ConfigError("bad time window");
    FlowScoreModel m;
    m.config = config;
    m.schedule = schedule;
    m.conditions = conditions;
    m.t_min = t_min;
    m.t_max = t_max;
    m.encoder = make_mlp_params(config.encoder_cfg(), rng);
    m.time_net = make_mlp_params(config.time_cfg(), rng);
    for (std::size_t v = 0; v < conditions.n_variables(); ++v) {
        const Index rows = conditions.variables[v].cardinality + 1;  // + empty token
        Vec table(rows * config.cond_embed_dim);
        for (Index i = 0; i < table.size(); ++i) table[i] = rng.normal();
        m.cond_embed.add(cond_embed_name(v), {rows, config.cond_embed_dim}, std::move(table));
    }
    const MlpConfig hc = config.head_cfg(static_cast<int>(conditions.n_variables()));
    m.velocity_head = make_mlp_params(hc, rng);
    m.score_head = make_mlp_params(hc, rng);
    return m;
}

namespace detail {

inline Vec cond_features(const FlowScoreModel& m, const std::vector<int>& labels) {
    m.conditions.validate_labels(labels);
    const Index dim = m.config.cond_embed_dim;
    Vec out(m.cond_feature_width());
    for (std::size_t v = 0; v < labels.size(); ++v) {
        const auto& e = m.cond_embed.at(cond_embed_name(v));
        const Index rows = e.shape[0];
        for (Index c = 0; c < dim; ++c)
            out[static_cast<Index>(v) * dim + c] = e.values[c * rows + labels[v]];
    }
    return out;
}

inline Vec time_features(const FlowScoreModel& m, double t) {
    if (m.config.time_embed_dim > 0)
        return sinusoidal_time_embed(t, m.config.time_embed_dim);
    Vec v(1);
    v << t;
    return v;
}

}  // namespace detail

struct EvalSpec {
    std::vector<int> labels;
    bool want_score = false;
    bool want_divergence = false;
};

struct FieldEval {
    Mat velocity;
    Mat score;       // empty unless requested
    Vec divergence;  // empty unless requested
};

/// Evaluates velocity / score / exact divergence for several conditions at one
/// time, sharing the state-encoder pass (primal and tangents) across them.
/// Pure in (model, X, t, specs).
inline std::vector<FieldEval> eval_fields_multi(const FlowScoreModel& m, const Mat& X, double t,
                                                const std::vector<EvalSpec>& specs) {
    m.check_time(t);
    if (X.rows() != m.data_dim()) throw ConfigError("eval: point dimension mismatch");
    const Index d = X.rows();
    const Index B = X.cols();
    const MlpConfig enc_cfg = m.config.encoder_cfg();
    const MlpConfig time_cfg = m.config.time_cfg();
    const MlpConfig head_cfg = m.config.head_cfg(static_cast<int>(m.conditions.n_variables()));

    MlpWorkspace enc_ws;
    const Mat enc = mlp_forward_batch(m.encoder, enc_cfg, X, &enc_ws);
    const Vec th = mlp_forward_batch(m.time_net, time_cfg, detail::time_features(m, t));

    bool any_div = false;
    for (const auto& s : specs) any_div |= s.want_divergence;

    // encoder tangents are condition-independent; compute once per basis vector
    std::vector<Mat> enc_tan;
    if (any_div) {
        enc_tan.reserve(static_cast<std::size_t>(d));
        Mat T = Mat::Zero(d, B);
        for (Index i = 0; i < d; ++i) {
            T.setZero();
            T.row(i).setOnes();
            enc_tan.push_back(mlp_jvp_batch(m.encoder, enc_cfg, enc_ws, T));
        }
    }

    const Index lw = enc.rows();
    const Index tw = th.size();
    const Index cw = m.cond_feature_width();

    std::vector<FieldEval> out;
    out.reserve(specs.size());
    Mat Z(lw + tw + cw, B);
    Z.topRows(lw) = enc;
    Z.middleRows(lw, tw).colwise() = th;
    Mat Tz = Mat::Zero(lw + tw + cw, B);
    for (const auto& spec : specs) {
        Z.bottomRows(cw).colwise() = detail::cond_features(m, spec.labels);
        FieldEval fe;
        MlpWorkspace head_ws;
        fe.velocity = mlp_forward_batch(m.velocity_head, head_cfg, Z, &head_ws);
        if (spec.want_score) fe.score = mlp_forward_batch(m.score_head, head_cfg, Z);
        if (spec.want_divergence) {
            fe.divergence = Vec::Zero(B);
            for (Index i = 0; i < d; ++i) {
                Tz.topRows(lw) = enc_tan[static_cast<std::size_t>(i)];
                const Mat hj = mlp_jvp_batch(m.velocity_head, head_cfg, head_ws, Tz);
                fe.divergence += hj.row(i).transpose();
            }
        }
        out.push_back(std::move(fe));
    }
    return out;
}

inline Vec velocity(const FlowScoreModel& m, const Vec& x, double t,
                    const std::vector<int>& labels) {
    return eval_fields_multi(m, x, t, {EvalSpec{labels, false, false}})[0].velocity;
}

inline Vec score(const FlowScoreModel& m, const Vec& x, double t,
                 const std::vector<int>& labels) {
    EvalSpec s{labels, true, false};
    return eval_fields_multi(m, x, t, {s})[0].score;
}

/// Provider view of one condition. Velocity and score call the respective
/// heads; divergence runs exact forward-mode passes over the velocity head.
inline FieldProvider model_field_provider(const FlowScoreModel& m, std::vector<int> labels) {
    m.conditions.validate_labels(labels);
    auto model = std::make_shared<const FlowScoreModel>(m);
    FieldProvider f;
    f.velocity = [model, labels](const Mat& X, double t) {
        return eval_fields_multi(*model, X, t, {EvalSpec{labels, false, false}})[0].velocity;
    };
    f.score = [model, labels](const Mat& X, double t) {
        return eval_fields_multi(*model, X, t, {EvalSpec{labels, true, false}})[0].score;
    };
    f.divergence = [model, labels](const Mat& X, double t) {
        return eval_fields_multi(*model, X, t, {EvalSpec{labels, false, true}})[0].divergence;
    };
    return f;
}

/// A batch of points to score with a numerator and denominator condition.
struct RatioRequest {
    Mat points;  // N x d
    std::vector<int> num_labels;
    std::vector<int> den_labels;
    SimulationVariant variant = SimulationVariant::s1;
    SolverConfig solver;

    void validate(const ConditionSpec& spec) const {
        spec.validate_labels(num_labels);
        spec.validate_labels(den_labels);
        if (num_labels == den_labels)
            throw ConfigError("ratio request needs distinct numerator and denominator conditions");
        solver.validate();
    }
};

/// Single-simulation log-ratio with a trained model. The encoder trunk is
/// shared across the conditions at every solver stage; s2 drives the
/// trajectory with the all-empty condition. A caller-supplied field may be
/// passed for the general variant.
inline RatioOutcome estimate_log_ratio(const FlowScoreModel& m, const RatioRequest& req,
                                       const EngineOptions& opts = {},
                                       const FieldProvider* general_sim = nullptr) {
    req.validate(m.conditions);
    if (req.variant == SimulationVariant::general && general_sim == nullptr)
        throw ConfigError("general variant needs a simulation field provider");
    const auto start = std::chrono::steady_clock::now();

    const std::vector<int> null_labels = m.conditions.all_null();
    const Index N = req.points.rows();

    auto rhs = [&](const Mat& X, double t, Mat& dX, RowVec& dR) {
        if (req.variant == SimulationVariant::s1) {
            EvalSpec num{req.num_labels, false, true};
            EvalSpec den{req.den_labels, true, true};
            auto ev = eval_fields_multi(m, X, t, {num, den});
            dX = std::move(ev[0].velocity);
            dR = (ev[1].divergence - ev[0].divergence).transpose() +
                 detail::colwise_dot(ev[1].velocity - dX, ev[1].score);
        } else {
            EvalSpec num{req.num_labels, true, true};
            EvalSpec den{req.den_labels, true, true};
            Mat b;
            std::vector<FieldEval> ev;
            if (req.variant == SimulationVariant::s2) {
                EvalSpec sim{null_labels, false, false};
                ev = eval_fields_multi(m, X, t, {num, den, sim});
                b = std::move(ev[2].velocity);
            } else {
                ev = eval_fields_multi(m, X, t, {num, den});
                b = general_sim->velocity(X, t);
            }
            dR = (ev[1].divergence - ev[0].divergence).transpose() +
                 detail::colwise_dot(b - ev[0].velocity, ev[0].score) +
                 detail::colwise_dot(ev[1].velocity - b, ev[1].score);
            dX = std::move(b);
        }
    };

    RatioOutcome out;
    out.log_ratio = Vec::Zero(N);
    out.converged.assign(static_cast<std::size_t>(N), 1);
    parallel_chunks(N, opts.chunk_size, opts.threads, [&](Index b, Index e) {
        const Index nb = e - b;
        Mat X = req.points.middleRows(b, nb).transpose();
        RowVec R = RowVec::Zero(nb);
        std::vector<std::uint8_t> ok(static_cast<std::size_t>(nb), 1);
        detail::integrate_augmented(X, R, ok, req.solver, rhs);
        for (Index j = 0; j < nb; ++j) {
            if (ok[static_cast<std::size_t>(j)]) {
                out.log_ratio[b + j] = -R[j];
            } else {
                out.log_ratio[b + j] = std::numeric_limits<double>::quiet_NaN();
                out.converged[static_cast<std::size_t>(b + j)] = 0;
            }
        }
    });
    for (auto c : out.converged)
        if (!c) ++out.n_failed;
    out.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

/// Two change-of-variables solves (numerator, denominator), each a full ODE
/// integration with its own trajectory; velocity and divergence share one
/// fused model evaluation per stage.
inline RatioOutcome naive_log_ratio(const FlowScoreModel& m, const RatioRequest& req,
                                    const EngineOptions& opts = {}) {
    req.validate(m.conditions);
    const auto start = std::chrono::steady_clock::now();
    const Index N = req.points.rows();
    const Index d = req.points.cols();

    auto solve_one = [&](const std::vector<int>& labels, Vec& ll,
                         std::vector<std::uint8_t>& conv) {
        auto rhs = [&](const Mat& X, double t, Mat& dX, RowVec& dR) {
            EvalSpec spec{labels, false, true};
            auto ev = eval_fields_multi(m, X, t, {spec});
            dX = std::move(ev[0].velocity);
            dR = ev[0].divergence.transpose();
        };
        ll = Vec::Zero(N);
        conv.assign(static_cast<std::size_t>(N), 1);
        parallel_chunks(N, opts.chunk_size, opts.threads, [&](Index b, Index e) {
            const Index nb = e - b;
            Mat X = req.points.middleRows(b, nb).transpose();
            RowVec R = RowVec::Zero(nb);
            std::vector<std::uint8_t> ok(static_cast<std::size_t>(nb), 1);
            detail::integrate_augmented(X, R, ok, req.solver, rhs);
            for (Index j = 0; j < nb; ++j) {
                if (ok[static_cast<std::size_t>(j)]) {
                    ll[b + j] = -0.5 * (d * kLogTwoPi + X.col(j).squaredNorm()) + R[j];
                } else {
                    ll[b + j] = std::numeric_limits<double>::quiet_NaN();
                    conv[static_cast<std::size_t>(b + j)] = 0;
                }
            }
        });
    };

    Vec ll_num, ll_den;
    std::vector<std::uint8_t> conv_num, conv_den;
    solve_one(req.num_labels, ll_num, conv_num);
    solve_one(req.den_labels, ll_den, conv_den);

    RatioOutcome out;
    out.log_ratio = ll_num - ll_den;
    out.converged.assign(static_cast<std::size_t>(N), 1);
    for (Index i = 0; i < N; ++i) {
        if (!conv_num[static_cast<std::size_t>(i)] || !conv_den[static_cast<std::size_t>(i)]) {
            out.converged[static_cast<std::size_t>(i)] = 0;
            out.log_ratio[i] = std::numeric_limits<double>::quiet_NaN();
            ++out.n_failed;
        }
    }
    out.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

struct TrainConfig {
    double learning_rate = 1e-4;
    std::int64_t steps = 100000;
    Index batch_size = 256;
    double dropout_beta = 0.5;  // per-variable empty-token probability
    double t_min = 1e-3;
    double t_max = 1.0 - 1e-3;
    std::uint64_t seed = 0;
    double w_velocity = 1.0;
    double w_score = 1.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
        if (steps < 1) throw ConfigError("steps must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (!(dropout_beta >= 0.0 && dropout_beta <= 1.0))
            throw ConfigError("dropout_beta must be in [0, 1]");
        if (!(t_min > 0.0 && t_min < t_max && t_max < 1.0))
            throw ConfigError("need 0 < t_min < t_max < 1");
        if (!(w_velocity > 0.0 && w_score > 0.0)) throw ConfigError("loss weights must be positive");
    }
};

struct TrainResult {
    FlowScoreModel model;
    std::vector<double> loss_trace;
    std::vector<std::int64_t> null_token_uses;  // per condition variable
    std::int64_t total_label_draws = 0;
};

/// Weighted two-head regression objective, mean over the batch.
inline double flow_matching_loss(const Mat& vel_out, const Mat& vel_target, const Mat& score_out,
                                 const Mat& score_target, double w_velocity, double w_score) {
    if (vel_out.cols() == 0 || vel_out.cols() != score_out.cols())
        throw ConfigError("flow_matching_loss: bad batch");
    return (w_velocity * (vel_out - vel_target).squaredNorm() +
            w_score * (score_out - score_target).squaredNorm()) /
           static_cast<double>(vel_out.cols());
}

/// Flow-matching training: per step sample a minibatch, noise it onto the
/// path at uniform times inside the window, regress both heads on the
/// closed-form conditional targets, and take one Adam step. Condition labels
/// are independently replaced by the empty token with probability
/// dropout_beta per variable.
inline TrainResult train(const LabeledDataset& data, FlowScoreModel model, const TrainConfig& cfg,
                         Rng& rng) {
    cfg.validate();
    data.validate();
    if (data.size() == 0) throw ConfigError("train: empty dataset");
    if (data.dim() != model.data_dim()) throw ConfigError("train: dataset dimension mismatch");
    if (data.n_condition_vars() != static_cast<Index>(model.conditions.n_variables()))
        throw ConfigError("train: dataset condition variables mismatch");
    for (Index i = 0; i < data.size(); ++i) {
        for (Index v = 0; v < data.labels.cols(); ++v)
            if (data.labels(i, v) >=
                model.conditions.variables[static_cast<std::size_t>(v)].cardinality)
                throw ConfigError("train: dataset label exceeds condition cardinality");
    }
    model.t_min = cfg.t_min;
    model.t_max = cfg.t_max;

    const Index d = model.data_dim();
    const Index B = cfg.batch_size;
    const Index V = static_cast<Index>(model.conditions.n_variables());
    const MlpConfig enc_cfg = model.config.encoder_cfg();
    const MlpConfig time_cfg = model.config.time_cfg();
    const MlpConfig head_cfg = model.config.head_cfg(static_cast<int>(V));
    const Index lw = model.config.latent_width;
    const Index tw = model.config.time_feature_width;
    const Index cw = model.cond_feature_width();
    const Index edim = model.config.cond_embed_dim;

    AdamParams ap{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon};
    AdamState st_enc = AdamState::like(model.encoder);
    AdamState st_time = AdamState::like(model.time_net);
    AdamState st_emb = AdamState::like(model.cond_embed);
    AdamState st_vel = AdamState::like(model.velocity_head);
    AdamState st_score = AdamState::like(model.score_head);

    ParameterStore g_enc = model.encoder.zeros_like();
    ParameterStore g_time = model.time_net.zeros_like();
    ParameterStore g_emb = model.cond_embed.zeros_like();
    ParameterStore g_vel = model.velocity_head.zeros_like();
    ParameterStore g_score = model.score_head.zeros_like();

    TrainResult res;
    res.loss_trace.reserve(static_cast<std::size_t>(cfg.steps));
    res.null_token_uses.assign(static_cast<std::size_t>(V), 0);

    Mat X1(d, B), Xt(d, B), TF(time_cfg.input_width(), B), CE(cw, B);
    RowVec ts(B);
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> batch_labels(V, B);

    for (std::int64_t step = 0; step < cfg.steps; ++step) {
        // fixed draw order: indices, times, noise, dropout
        for (Index j = 0; j < B; ++j) {
            const Index idx = static_cast<Index>(rng.uniform_int(0, data.size() - 1));
            X1.col(j) = data.points.row(idx).transpose();
            for (Index v = 0; v < V; ++v) batch_labels(v, j) = data.labels(idx, v);
        }
        for (Index j = 0; j < B; ++j) ts[j] = rng.uniform(cfg.t_min, cfg.t_max);
        for (Index j = 0; j < B; ++j) Xt.col(j) = rng.normal_vec(d);  // eps, scaled below
        for (Index j = 0; j < B; ++j)
            for (Index v = 0; v < V; ++v)
                if (rng.uniform() < cfg.dropout_beta) {
                    batch_labels(v, j) =
                        model.conditions.null_index(static_cast<std::size_t>(v));
                    ++res.null_token_uses[static_cast<std::size_t>(v)];
                }
        res.total_label_draws += B * V;

        for (Index j = 0; j < B; ++j)
            Xt.col(j) = alpha(model.schedule, ts[j]) * X1.col(j) +
                        model.schedule.sigma(ts[j]) * Xt.col(j);

        const Mat U = cond_velocity_target_batch(model.schedule, Xt, X1, ts);
        const Mat Starget = cond_score_target_batch(model.schedule, Xt, X1, ts);

        // features
        if (model.config.time_embed_dim > 0)
            TF = sinusoidal_time_embed_batch(ts, model.config.time_embed_dim);
        else
            TF = ts;
        for (Index j = 0; j < B; ++j)
            for (Index v = 0; v < V; ++v) {
                const auto& e = model.cond_embed.at(cond_embed_name(static_cast<std::size_t>(v)));
                const Index rows = e.shape[0];
                for (Index c = 0; c < edim; ++c)
                    CE(v * edim + c, j) = e.values[c * rows + batch_labels(v, j)];
            }

        MlpWorkspace enc_ws, time_ws, vel_ws, score_ws;
        const Mat enc = mlp_forward_batch(model.encoder, enc_cfg, Xt, &enc_ws);
        const Mat th = mlp_forward_batch(model.time_net, time_cfg, TF, &time_ws);
        Mat Z(lw + tw + cw, B);
        Z.topRows(lw) = enc;
        Z.middleRows(lw, tw) = th;
        Z.bottomRows(cw) = CE;

        const Mat Vout = mlp_forward_batch(model.velocity_head, head_cfg, Z, &vel_ws);
        const Mat Sout = mlp_forward_batch(model.score_head, head_cfg, Z, &score_ws);

        const Mat rv = Vout - U;
        const Mat rs = Sout - Starget;
        const double loss = flow_matching_loss(Vout, U, Sout, Starget, cfg.w_velocity, cfg.w_score);
        if (!std::isfinite(loss)) {
            throw NumericalError(
                "train: non-finite loss at step " + std::to_string(step) + "; t in [" +
                std::to_string(ts.minCoeff()) + ", " + std::to_string(ts.maxCoeff()) +
                "]; max |x_t| = " + std::to_string(Xt.cwiseAbs().maxCoeff()));
        }
        res.loss_trace.push_back(loss);

        g_enc.set_zero();
        g_time.set_zero();
        g_emb.set_zero();
        g_vel.set_zero();
        g_score.set_zero();

        const double scale = 2.0 / static_cast<double>(B);
        const Mat dZv = mlp_backward_batch(model.velocity_head, head_cfg, vel_ws,
                                           (cfg.w_velocity * scale) * rv, g_vel);
        const Mat dZs = mlp_backward_batch(model.score_head, head_cfg, score_ws,
                                           (cfg.w_score * scale) * rs, g_score);
        const Mat dZ = dZv + dZs;
        mlp_backward_batch(model.encoder, enc_cfg, enc_ws, dZ.topRows(lw), g_enc);
        mlp_backward_batch(model.time_net, time_cfg, time_ws, dZ.middleRows(lw, tw), g_time);
        for (Index j = 0; j < B; ++j)
            for (Index v = 0; v < V; ++v) {
                auto& ge = g_emb.at(cond_embed_name(static_cast<std::size_t>(v)));
                const Index rows = ge.shape[0];
                for (Index c = 0; c < edim; ++c)
                    ge.values[c * rows + batch_labels(v, j)] += dZ(lw + tw + v * edim + c, j);
            }

        adam_step(model.encoder, g_enc, st_enc, ap);
        adam_step(model.time_net, g_time, st_time, ap);
        adam_step(model.cond_embed, g_emb, st_emb, ap);
        adam_step(model.velocity_head, g_vel, st_vel, ap);
        adam_step(model.score_head, g_score, st_score, ap);
    }

    res.model = std::move(model);
    return res;
}

}  // namespace ratioflow
