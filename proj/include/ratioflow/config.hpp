#pragma once

#include "ratioflow/benchmarks.hpp"
#include "ratioflow/serialize.hpp"

#include <fstream>
#include <string>
#include <vector>

namespace ratioflow {

/// Declarative run document: seed, schedule, model, training, solver, and an
/// optional benchmark section with assertion thresholds. Unknown keys are
/// rejected everywhere.
struct RunConfig {
    std::uint64_t seed = 7;
    int threads = 1;
    Index chunk_size = 512;
    Schedule schedule = Schedule::linear_floor(0.1);
    ModelConfig model;
    TrainConfig train;
    SolverConfig solver;
    Json benchmark;  // kind-specific section, may be null
    std::vector<AssertSpec> asserts;

    BenchCommon bench_common() const {
        BenchCommon c;
        c.seed = seed;
        c.schedule = schedule;
        c.model = model;
        c.train = train;
        c.solver = solver;
        c.engine.threads = threads;
        c.engine.chunk_size = chunk_size;
        return c;
    }
};

inline std::vector<AssertSpec> assert_specs_from_json(const Json& j) {
    if (!j.is_array()) throw ConfigError("assert must be an array");
    std::vector<AssertSpec> out;
    for (const auto& a : j) {
        check_known_keys(a, {"name", "min", "max"}, "assert entry");
        AssertSpec spec;
        spec.name = get_required<std::string>(a, "name", "assert entry");
        if (a.contains("min")) spec.min = a.at("min").get<double>();
        if (a.contains("max")) spec.max = a.at("max").get<double>();
        if (!spec.min && !spec.max)
            throw ConfigError("assert entry '" + spec.name + "' needs min and/or max");
        out.push_back(std::move(spec));
    }
    return out;
}

inline Json assert_specs_to_json(const std::vector<AssertSpec>& specs) {
    Json out = Json::array();
    for (const auto& s : specs) {
        Json j{{"name", s.name}};
        if (s.min) j["min"] = *s.min;
        if (s.max) j["max"] = *s.max;
        out.push_back(j);
    }
    return out;
}

inline RunConfig run_config_from_json(const Json& j) {
    check_known_keys(
        j, {"seed", "threads", "chunk_size", "schedule", "model", "train", "solver", "benchmark",
            "assert"},
        "config");
    RunConfig rc;
    rc.seed = get_or<std::uint64_t>(j, "seed", rc.seed);
    rc.threads = get_or<int>(j, "threads", rc.threads);
    rc.chunk_size = get_or<Index>(j, "chunk_size", rc.chunk_size);
    if (rc.threads < 1) throw ConfigError("threads must be >= 1");
    if (rc.chunk_size < 1) throw ConfigError("chunk_size must be >= 1");
    if (j.contains("schedule")) rc.schedule = schedule_from_json(j.at("schedule"));
    if (j.contains("model")) rc.model = model_config_from_json(j.at("model"));
    if (j.contains("train")) rc.train = train_config_from_json(j.at("train"));
    if (j.contains("solver")) rc.solver = solver_config_from_json(j.at("solver"));
    if (j.contains("benchmark")) rc.benchmark = j.at("benchmark");
    if (j.contains("assert")) rc.asserts = assert_specs_from_json(j.at("assert"));
    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

inline Json run_config_to_json(const RunConfig& rc) {
    Json j{{"seed", rc.seed},
           {"threads", rc.threads},
           {"chunk_size", rc.chunk_size},
           {"schedule", schedule_to_json(rc.schedule)},
           {"model", model_config_to_json(rc.model)},
           {"train", train_config_to_json(rc.train)},
           {"solver", solver_config_to_json(rc.solver)},
           {"assert", assert_specs_to_json(rc.asserts)}};
    if (!rc.benchmark.is_null()) j["benchmark"] = rc.benchmark;
    return j;
}

inline GaussianBenchSpec gaussian_bench_spec_from_json(const Json& j) {
    GaussianBenchSpec s;
    if (j.is_null()) return s;
    check_known_keys(j, {"kind", "s", "d", "n_train", "n_test", "variant"}, "benchmark");
    if (j.contains("kind") && j.at("kind") != "gaussians")
        throw ConfigError("benchmark section kind mismatch (expected gaussians)");
    s.s = get_or<double>(j, "s", s.s);
    s.d = get_or<int>(j, "d", s.d);
    s.n_train = get_or<Index>(j, "n_train", s.n_train);
    s.n_test = get_or<Index>(j, "n_test", s.n_test);
    s.variant = variant_from_string(get_or<std::string>(j, "variant", "s1"));
    if (s.d < 1 || s.n_train < 1 || s.n_test < 1) throw ConfigError("bad gaussians benchmark spec");
    return s;
}

inline MiBenchSpec mi_bench_spec_from_json(const Json& j) {
    MiBenchSpec s;
    if (j.is_null()) return s;
    check_known_keys(j, {"kind", "d", "n_samples", "n_eval", "n_eval_oracle", "variant"},
                     "benchmark");
    if (j.contains("kind") && j.at("kind") != "mi")
        throw ConfigError("benchmark section kind mismatch (expected mi)");
    s.d = get_or<int>(j, "d", s.d);
    s.n_samples = get_or<Index>(j, "n_samples", s.n_samples);
    s.n_eval = get_or<Index>(j, "n_eval", s.n_eval);
    s.n_eval_oracle = get_or<Index>(j, "n_eval_oracle", s.n_eval_oracle);
    s.variant = variant_from_string(get_or<std::string>(j, "variant", "s1"));
    if (s.d < 2 || s.d % 2 != 0 || s.n_samples < 1 || s.n_eval < 1 || s.n_eval_oracle < 1)
        throw ConfigError("bad mi benchmark spec");
    return s;
}

inline DaBenchSpec da_bench_spec_from_json(const Json& j) {
    DaBenchSpec s;
    if (j.is_null()) return s;
    check_known_keys(j, {"kind", "a_values", "n_per_cluster", "variant"}, "benchmark");
    if (j.contains("kind") && j.at("kind") != "da")
        throw ConfigError("benchmark section kind mismatch (expected da)");
    if (j.contains("a_values")) s.a_values = j.at("a_values").get<std::vector<double>>();
    s.n_per_cluster = get_or<Index>(j, "n_per_cluster", s.n_per_cluster);
    s.variant = variant_from_string(get_or<std::string>(j, "variant", "s1"));
    if (s.a_values.empty() || s.n_per_cluster < 1) throw ConfigError("bad da benchmark spec");
    for (double a : s.a_values)
        if (!(a >= 0.0 && a <= 0.5)) throw ConfigError("da a_values must lie in [0, 0.5]");
    return s;
}

inline Json default_benchmark_json(const std::string& kind) {
    if (kind == "gaussians") {
        const GaussianBenchSpec s;
        return Json{{"kind", "gaussians"}, {"s", s.s},           {"d", s.d},
                    {"n_train", s.n_train}, {"n_test", s.n_test}, {"variant", "s1"}};
    }
    if (kind == "mi") {
        const MiBenchSpec s;
        return Json{{"kind", "mi"},
                    {"d", s.d},
                    {"n_samples", s.n_samples},
                    {"n_eval", s.n_eval},
                    {"n_eval_oracle", s.n_eval_oracle},
                    {"variant", "s1"}};
    }
    if (kind == "da") {
        const DaBenchSpec s;
        return Json{{"kind", "da"},
                    {"a_values", s.a_values},
                    {"n_per_cluster", s.n_per_cluster},
                    {"variant", "s1"}};
    }
    throw ConfigError("unknown benchmark kind '" + kind + "' (expected gaussians | mi | da)");
}

}  // namespace ratioflow
