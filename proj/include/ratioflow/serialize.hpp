#pragma once

#include "ratioflow/datasets.hpp"
#include "ratioflow/fields.hpp"
#include "ratioflow/flow_model.hpp"
#include "ratioflow/schedules.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace ratioflow {

using Json = nlohmann::json;

/// Rejects keys outside the allowed set; `where` names the object in errors.
inline void check_known_keys(const Json& obj, const std::vector<std::string>& allowed,
                             const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const auto& k : allowed) ok |= (it.key() == k);
        if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

template <typename T>
T get_or(const Json& obj, const std::string& key, const T& fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const Json::exception&) {
        throw ConfigError("bad value for '" + key + "'");
    }
}

template <typename T>
T get_required(const Json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) throw ConfigError("missing key '" + key + "' in " + where);
    try {
        return obj.at(key).get<T>();
    } catch (const Json::exception&) {
        throw ConfigError("bad value for '" + key + "' in " + where);
    }
}

inline Json schedule_to_json(const Schedule& s) {
    return Json{{"kind", to_string(s.kind)}, {"sigma_min", s.sigma_min}, {"lambda", s.lambda}};
}

inline Schedule schedule_from_json(const Json& j, const std::string& where = "schedule") {
    check_known_keys(j, {"kind", "sigma_min", "lambda"}, where);
    const auto kind = schedule_kind_from_string(get_required<std::string>(j, "kind", where));
    return Schedule::make(kind, get_or<double>(j, "sigma_min", 0.0),
                          get_or<double>(j, "lambda", 0.0));
}

inline Json condition_spec_to_json(const ConditionSpec& c) {
    Json vars = Json::array();
    for (const auto& v : c.variables)
        vars.push_back(Json{{"name", v.name}, {"cardinality", v.cardinality}});
    return vars;
}

inline ConditionSpec condition_spec_from_json(const Json& j) {
    if (!j.is_array()) throw ConfigError("conditions must be an array");
    ConditionSpec spec;
    for (const auto& v : j) {
        check_known_keys(v, {"name", "cardinality"}, "condition variable");
        spec.variables.push_back(
            ConditionVariable{get_required<std::string>(v, "name", "condition variable"),
                              get_required<int>(v, "cardinality", "condition variable")});
    }
    spec.validate();
    return spec;
}

inline Json model_config_to_json(const ModelConfig& m) {
    return Json{{"data_dim", m.data_dim},
                {"latent_width", m.latent_width},
                {"encoder_layers", m.encoder_layers},
                {"time_embed_dim", m.time_embed_dim},
                {"time_feature_width", m.time_feature_width},
                {"cond_embed_dim", m.cond_embed_dim},
                {"head_width", m.head_width},
                {"head_layers", m.head_layers},
                {"activation", to_string(m.activation)}};
}

inline ModelConfig model_config_from_json(const Json& j, const std::string& where = "model") {
    check_known_keys(j,
                     {"data_dim", "latent_width", "encoder_layers", "time_embed_dim",
                      "time_feature_width", "cond_embed_dim", "head_width", "head_layers",
                      "activation"},
                     where);
    ModelConfig m;
    m.data_dim = get_or<int>(j, "data_dim", m.data_dim);
    m.latent_width = get_or<int>(j, "latent_width", m.latent_width);
    m.encoder_layers = get_or<int>(j, "encoder_layers", m.encoder_layers);
    m.time_embed_dim = get_or<int>(j, "time_embed_dim", m.time_embed_dim);
    m.time_feature_width = get_or<int>(j, "time_feature_width", m.time_feature_width);
    m.cond_embed_dim = get_or<int>(j, "cond_embed_dim", m.cond_embed_dim);
    m.head_width = get_or<int>(j, "head_width", m.head_width);
    m.head_layers = get_or<int>(j, "head_layers", m.head_layers);
    m.activation = activation_from_string(get_or<std::string>(j, "activation", "selu"));
    m.validate();
    return m;
}

inline Json train_config_to_json(const TrainConfig& t) {
    return Json{{"learning_rate", t.learning_rate},
                {"steps", t.steps},
                {"batch_size", t.batch_size},
                {"dropout_beta", t.dropout_beta},
                {"t_min", t.t_min},
                {"t_max", t.t_max},
                {"seed", t.seed},
                {"w_velocity", t.w_velocity},
                {"w_score", t.w_score},
                {"adam_beta1", t.adam_beta1},
                {"adam_beta2", t.adam_beta2},
                {"adam_epsilon", t.adam_epsilon}};
}

inline TrainConfig train_config_from_json(const Json& j, const std::string& where = "train") {
    check_known_keys(j,
                     {"learning_rate", "steps", "batch_size", "dropout_beta", "t_min", "t_max",
                      "seed", "w_velocity", "w_score", "adam_beta1", "adam_beta2", "adam_epsilon"},
                     where);
    TrainConfig t;
    t.learning_rate = get_or<double>(j, "learning_rate", t.learning_rate);
    t.steps = get_or<std::int64_t>(j, "steps", t.steps);
    t.batch_size = get_or<Index>(j, "batch_size", t.batch_size);
    t.dropout_beta = get_or<double>(j, "dropout_beta", t.dropout_beta);
    t.t_min = get_or<double>(j, "t_min", t.t_min);
    t.t_max = get_or<double>(j, "t_max", t.t_max);
    t.seed = get_or<std::uint64_t>(j, "seed", t.seed);
    t.w_velocity = get_or<double>(j, "w_velocity", t.w_velocity);
    t.w_score = get_or<double>(j, "w_score", t.w_score);
    t.adam_beta1 = get_or<double>(j, "adam_beta1", t.adam_beta1);
    t.adam_beta2 = get_or<double>(j, "adam_beta2", t.adam_beta2);
    t.adam_epsilon = get_or<double>(j, "adam_epsilon", t.adam_epsilon);
    t.validate();
    return t;
}

inline Json solver_config_to_json(const SolverConfig& s) {
    return Json{{"method", to_string(s.method)},
                {"steps", s.steps},
                {"t_eps", s.t_eps},
                {"max_state_norm", s.max_state_norm}};
}

inline SolverConfig solver_config_from_json(const Json& j, const std::string& where = "solver") {
    check_known_keys(j, {"method", "steps", "t_eps", "max_state_norm"}, where);
    SolverConfig s;
    s.method = ode_method_from_string(get_or<std::string>(j, "method", "rk4"));
    s.steps = get_or<int>(j, "steps", s.steps);
    s.t_eps = get_or<double>(j, "t_eps", s.t_eps);
    s.max_state_norm = get_or<double>(j, "max_state_norm", s.max_state_norm);
    s.validate();
    return s;
}

}  // namespace ratioflow
