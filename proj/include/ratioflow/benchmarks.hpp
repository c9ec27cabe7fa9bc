#pragma once

#include "ratioflow/checkpoint.hpp"
#include "ratioflow/flow_model.hpp"
#include "ratioflow/metrics.hpp"
#include "ratioflow/oracle_suite.hpp"
#include "ratioflow/serialize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace ratioflow {

struct BenchRecord {
    std::string name;
    double value = 0.0;
    Index n = 0;
    std::uint64_t seed = 0;
    std::string checkpoint_hash;  // empty when no model is involved
    bool timing_only = false;     // wall-clock values live outside the canonical report
};

struct AssertSpec {
    std::string name;
    std::optional<double> min;
    std::optional<double> max;
};

struct AssertResult {
    AssertSpec spec;
    double value = 0.0;
    bool pass = false;
};

/// Benchmark output. The canonical JSON contains only deterministic values so
/// a re-run with the same (seed, config) reproduces it byte for byte; wall
/// clock readings are serialized separately via timing_json().
struct BenchReport {
    int schema = 1;
    std::string kind;
    std::uint64_t seed = 0;
    Json spec;
    std::vector<BenchRecord> records;
    std::vector<AssertResult> asserts;

    std::string spec_hash() const { return hex64(fnv1a64(spec.dump())); }

    const BenchRecord* find(const std::string& name) const {
        for (const auto& r : records)
            if (r.name == name) return &r;
        return nullptr;
    }

    double value_of(const std::string& name) const {
        const auto* r = find(name);
        if (!r) throw ConfigError("no benchmark record named '" + name + "'");
        return r->value;
    }

    void evaluate_asserts(const std::vector<AssertSpec>& specs) {
        asserts.clear();
        for (const auto& a : specs) {
            AssertResult res;
            res.spec = a;
            res.value = value_of(a.name);
            res.pass = std::isfinite(res.value);
            if (a.min && !(res.value >= *a.min)) res.pass = false;
            if (a.max && !(res.value <= *a.max)) res.pass = false;
            asserts.push_back(res);
        }
    }

    bool all_asserts_pass() const {
        for (const auto& a : asserts)
            if (!a.pass) return false;
        return true;
    }

    Json to_json() const {
        Json recs = Json::array();
        for (const auto& r : records) {
            if (r.timing_only) continue;
            Json jr{{"name", r.name},
                    {"value", std::isfinite(r.value) ? Json(r.value) : Json(nullptr)},
                    {"finite", std::isfinite(r.value)},
                    {"n", r.n},
                    {"seed", r.seed}};
            if (!r.checkpoint_hash.empty()) jr["checkpoint_hash"] = r.checkpoint_hash;
            recs.push_back(jr);
        }
        Json asrt = Json::array();
        for (const auto& a : asserts) {
            Json ja{{"name", a.spec.name},
                    {"value", std::isfinite(a.value) ? Json(a.value) : Json(nullptr)},
                    {"pass", a.pass}};
            if (a.spec.min) ja["min"] = *a.spec.min;
            if (a.spec.max) ja["max"] = *a.spec.max;
            asrt.push_back(ja);
        }
        return Json{{"schema", schema}, {"kind", kind},       {"seed", seed},
                    {"spec", spec},     {"spec_hash", spec_hash()}, {"records", recs},
                    {"asserts", asrt}};
    }

    Json timing_json() const {
        Json recs = Json::array();
        for (const auto& r : records)
            if (r.timing_only)
                recs.push_back(Json{{"name", r.name}, {"seconds", r.value}});
        return Json{{"schema", schema}, {"kind", kind}, {"timing", recs}};
    }
};

/// Shared knobs for the trained benchmarks. Sub-streams are derived from the
/// top seed by fixed offsets so one (seed, config) pair pins the whole run.
struct BenchCommon {
    std::uint64_t seed = 7;
    Schedule schedule = Schedule::linear_floor(0.1);
    ModelConfig model;
    TrainConfig train;
    SolverConfig solver;
    EngineOptions engine;
};

struct GaussianBenchSpec {
    double s = 1.0;
    int d = 2;
    Index n_train = 90000;  // per condition
    Index n_test = 10000;   // evaluation points from q
    SimulationVariant variant = SimulationVariant::s1;
};

struct MiBenchSpec {
    int d = 20;
    Index n_samples = 100000;      // training samples per condition
    Index n_eval = 10000;          // held-out evaluation samples from q
    Index n_eval_oracle = 10000;   // Monte Carlo samples for the oracle row
    SimulationVariant variant = SimulationVariant::s1;
};

struct DaBenchSpec {
    std::vector<double> a_values{0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.45, 0.5};
    Index n_per_cluster = 1500;
    SimulationVariant variant = SimulationVariant::s1;
};

namespace detail {

inline std::string fmt_a(double a) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.2f", a);
    return std::string(buf);
}

inline double median(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    return xs[xs.size() / 2];
}

inline std::pair<double, double> trace_medians(const std::vector<double>& trace) {
    const std::size_t k = std::max<std::size_t>(1, trace.size() / 20);
    std::vector<double> first(trace.begin(), trace.begin() + static_cast<std::ptrdiff_t>(k));
    std::vector<double> last(trace.end() - static_cast<std::ptrdiff_t>(k), trace.end());
    return {median(std::move(first)), median(std::move(last))};
}

}  // namespace detail

inline BenchReport run_gaussian_bench(const GaussianBenchSpec& spec, const BenchCommon& common,
                                      const std::vector<AssertSpec>& asserts = {}) {
    BenchReport report;
    report.kind = "gaussians";
    report.seed = common.seed;
    report.spec = Json{{"kind", "gaussians"},
                       {"s", spec.s},
                       {"d", spec.d},
                       {"n_train", spec.n_train},
                       {"n_test", spec.n_test},
                       {"variant", to_string(spec.variant)},
                       {"seed", common.seed},
                       {"schedule", schedule_to_json(common.schedule)},
                       {"model", model_config_to_json(common.model)},
                       {"train", train_config_to_json(common.train)},
                       {"solver", solver_config_to_json(common.solver)}};

    Rng data_rng(common.seed);
    const auto train_ds = gen_shifted_gaussian(spec.d, spec.s, spec.n_train, data_rng);
    const GaussianSpec q = GaussianSpec::isotropic(Vec::Constant(spec.d, spec.s));
    const GaussianSpec qp = GaussianSpec::standard(spec.d);
    const Mat test_pts = sample_gaussian_points(q, spec.n_test, data_rng);
    const Vec truth = analytic_log_ratio_batch(q, qp, test_pts.transpose());

    auto add = [&](std::string name, double value, Index n, std::string ckpt = "",
                   bool timing = false) {
        report.records.push_back(
            BenchRecord{std::move(name), value, n, common.seed, std::move(ckpt), timing});
    };

    // training-free reference row. Its target is the ratio of the flow's
    // terminal marginals, so the row isolates pure solver error even when the
    // schedule keeps a sigma floor; the trained rows below are scored against
    // the data-law ratio like any other estimator.
    {
        const auto num = oracle_field_provider(q, common.schedule);
        const auto den = oracle_field_provider(qp, common.schedule);
        const Vec oracle_truth =
            analytic_log_ratio_batch(terminal_marginal_spec(q, common.schedule),
                                     terminal_marginal_spec(qp, common.schedule),
                                     test_pts.transpose());
        const auto out = estimate_log_ratio(test_pts, num, den, nullptr, SimulationVariant::s1,
                                            common.solver, common.engine);
        add("oracle_field.mse", metric_mse(out.log_ratio, oracle_truth), spec.n_test);
        add("oracle_field.runtime_seconds", out.runtime_seconds, spec.n_test, "", true);
    }

    // one conditional model serves both estimators
    ModelConfig mc = common.model;
    mc.data_dim = spec.d;
    Rng init_rng(common.seed ^ 0x9e3779b97f4a7c15ull);
    auto model =
        make_flow_score_model(mc, train_ds.infer_condition_spec(), common.schedule, init_rng,
                              common.train.t_min, common.train.t_max);
    Rng train_rng(common.train.seed);
    auto trained = train(train_ds, std::move(model), common.train, train_rng);
    const std::string ckpt_hash = hex64(checkpoint_hash(trained.model, &common.train));

    {
        const auto [first, last] = detail::trace_medians(trained.loss_trace);
        add("train.loss_median_first_5pct", first, static_cast<Index>(common.train.steps));
        add("train.loss_median_last_5pct", last, static_cast<Index>(common.train.steps));
    }

    RatioRequest req;
    req.points = test_pts;
    req.num_labels = {1};
    req.den_labels = {0};
    req.variant = spec.variant;
    req.solver = common.solver;

    const auto scr = estimate_log_ratio(trained.model, req, common.engine);
    const auto nv = naive_log_ratio(trained.model, req, common.engine);

    auto finite_mse = [&](const RatioOutcome& out) {
        double se = 0.0;
        Index n_ok = 0;
        for (Index i = 0; i < out.log_ratio.size(); ++i) {
            if (!out.converged[static_cast<std::size_t>(i)]) continue;
            se += (out.log_ratio[i] - truth[i]) * (out.log_ratio[i] - truth[i]);
            ++n_ok;
        }
        if (n_ok == 0) throw NumericalError("benchmark: every trajectory failed");
        return se / static_cast<double>(n_ok);
    };

    const double scr_mse = finite_mse(scr);
    const double nv_mse = finite_mse(nv);
    add("scratio.mse", scr_mse, spec.n_test, ckpt_hash);
    add("scratio.n_failed", static_cast<double>(scr.n_failed), spec.n_test, ckpt_hash);
    add("naive.mse", nv_mse, spec.n_test, ckpt_hash);
    add("naive.n_failed", static_cast<double>(nv.n_failed), spec.n_test, ckpt_hash);
    add("mse_ratio_naive_vs_scratio", nv_mse / scr_mse, spec.n_test, ckpt_hash);
    add("scratio.runtime_seconds", scr.runtime_seconds, spec.n_test, ckpt_hash, true);
    add("naive.runtime_seconds", nv.runtime_seconds, spec.n_test, ckpt_hash, true);
    add("runtime_ratio_naive_vs_scratio", nv.runtime_seconds / scr.runtime_seconds, spec.n_test,
        ckpt_hash, true);

    report.evaluate_asserts(asserts);
    return report;
}

inline BenchReport run_mi_bench(const MiBenchSpec& spec, const BenchCommon& common,
                                const std::vector<AssertSpec>& asserts = {}) {
    BenchReport report;
    report.kind = "mi";
    report.seed = common.seed;
    report.spec = Json{{"kind", "mi"},
                       {"d", spec.d},
                       {"n_samples", spec.n_samples},
                       {"n_eval", spec.n_eval},
                       {"n_eval_oracle", spec.n_eval_oracle},
                       {"variant", to_string(spec.variant)},
                       {"seed", common.seed},
                       {"schedule", schedule_to_json(common.schedule)},
                       {"model", model_config_to_json(common.model)},
                       {"train", train_config_to_json(common.train)},
                       {"solver", solver_config_to_json(common.solver)}};

    auto add = [&](std::string name, double value, Index n, std::string ckpt = "",
                   bool timing = false) {
        report.records.push_back(
            BenchRecord{std::move(name), value, n, common.seed, std::move(ckpt), timing});
    };

    const double truth = mi_ground_truth(spec.d);
    add("ground_truth.mi", truth, 0);

    {
        SolverConfig oracle_solver = common.solver;
        oracle_solver.t_eps = 0.0;  // analytic fields are endpoint-regular
        // the reference estimator must terminate in the data law itself, so it
        // always runs on the sigma_1 = 0 linear schedule
        const auto start = std::chrono::steady_clock::now();
        const auto mi = run_oracle_mi(spec.d, spec.n_eval_oracle, Schedule::linear(),
                                      oracle_solver, common.seed + 1, common.engine);
        add("oracle_field.mi", mi.mi_estimate, spec.n_eval_oracle);
        add("oracle_field.mae", std::abs(mi.mi_estimate - truth), spec.n_eval_oracle);
        add("oracle_field.mc_se", mi.mc_standard_error, spec.n_eval_oracle);
        add("oracle_field.n_failed", static_cast<double>(mi.n_failed), spec.n_eval_oracle);
        add("oracle_field.runtime_seconds",
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(),
            spec.n_eval_oracle, "", true);
    }

    Rng data_rng(common.seed);
    const auto train_ds = gen_block_correlated(spec.d, spec.n_samples, data_rng);
    const GaussianSpec q(Vec::Zero(spec.d), block_correlated_covariance(spec.d));
    const Mat eval_pts = sample_gaussian_points(q, spec.n_eval, data_rng);

    ModelConfig mc = common.model;
    mc.data_dim = spec.d;
    Rng init_rng(common.seed ^ 0x9e3779b97f4a7c15ull);
    auto model =
        make_flow_score_model(mc, train_ds.infer_condition_spec(), common.schedule, init_rng,
                              common.train.t_min, common.train.t_max);
    Rng train_rng(common.train.seed);
    auto trained = train(train_ds, std::move(model), common.train, train_rng);
    const std::string ckpt_hash = hex64(checkpoint_hash(trained.model, &common.train));
    {
        const auto [first, last] = detail::trace_medians(trained.loss_trace);
        add("train.loss_median_first_5pct", first, static_cast<Index>(common.train.steps));
        add("train.loss_median_last_5pct", last, static_cast<Index>(common.train.steps));
    }

    RatioRequest req;
    req.points = eval_pts;
    req.num_labels = {1};
    req.den_labels = {0};
    req.variant = spec.variant;
    req.solver = common.solver;
    const auto out = estimate_log_ratio(trained.model, req, common.engine);

    double sum = 0.0, sumsq = 0.0;
    Index n_ok = 0;
    for (Index i = 0; i < out.log_ratio.size(); ++i) {
        if (!out.converged[static_cast<std::size_t>(i)]) continue;
        sum += out.log_ratio[i];
        sumsq += out.log_ratio[i] * out.log_ratio[i];
        ++n_ok;
    }
    if (n_ok == 0) throw NumericalError("mi benchmark: every trajectory failed");
    const double mi_est = sum / static_cast<double>(n_ok);
    add("scratio.mi", mi_est, spec.n_eval, ckpt_hash);
    add("scratio.mae", std::abs(mi_est - truth), spec.n_eval, ckpt_hash);
    add("scratio.mc_se", std::sqrt((sumsq / n_ok - mi_est * mi_est) / n_ok), spec.n_eval,
        ckpt_hash);
    add("scratio.n_failed", static_cast<double>(out.n_failed), spec.n_eval, ckpt_hash);
    add("scratio.runtime_seconds", out.runtime_seconds, spec.n_eval, ckpt_hash, true);

    report.evaluate_asserts(asserts);
    return report;
}

inline BenchReport run_da_bench(const DaBenchSpec& spec, const BenchCommon& common,
                                const std::vector<AssertSpec>& asserts = {}) {
    BenchReport report;
    report.kind = "da";
    report.seed = common.seed;
    report.spec = Json{{"kind", "da"},
                       {"a_values", spec.a_values},
                       {"n_per_cluster", spec.n_per_cluster},
                       {"variant", to_string(spec.variant)},
                       {"seed", common.seed},
                       {"schedule", schedule_to_json(common.schedule)},
                       {"model", model_config_to_json(common.model)},
                       {"train", train_config_to_json(common.train)},
                       {"solver", solver_config_to_json(common.solver)}};

    auto add = [&](std::string name, double value, Index n, std::string ckpt = "",
                   bool timing = false) {
        report.records.push_back(
            BenchRecord{std::move(name), value, n, common.seed, std::move(ckpt), timing});
    };

    std::vector<double> aucs, nars, csps, csp_as;
    for (std::size_t k = 0; k < spec.a_values.size(); ++k) {
        const double a = spec.a_values[k];
        const std::string tag = "@a=" + detail::fmt_a(a);
        Rng data_rng(common.seed + 101 * (k + 1));
        const auto mix = gen_da_mixture(a, spec.n_per_cluster, data_rng);
        const Index n = mix.data.size();

        ModelConfig mc = common.model;
        mc.data_dim = 2;
        Rng init_rng((common.seed ^ 0x9e3779b97f4a7c15ull) + k);
        auto model =
            make_flow_score_model(mc, mix.data.infer_condition_spec(), common.schedule, init_rng,
                                  common.train.t_min, common.train.t_max);
        TrainConfig tc = common.train;
        tc.seed = common.train.seed + k;
        Rng train_rng(tc.seed);
        auto trained = train(mix.data, std::move(model), tc, train_rng);
        const std::string ckpt_hash = hex64(checkpoint_hash(trained.model, &tc));
        {
            const auto [first, last] = detail::trace_medians(trained.loss_trace);
            add("train.loss_median_first_5pct" + tag, first, static_cast<Index>(tc.steps),
                ckpt_hash);
            add("train.loss_median_last_5pct" + tag, last, static_cast<Index>(tc.steps),
                ckpt_hash);
        }

        RatioRequest req;
        req.points = mix.data.points;
        req.num_labels = {1};
        req.den_labels = {0};
        req.variant = spec.variant;
        req.solver = common.solver;
        const auto out = estimate_log_ratio(trained.model, req, common.engine);
        if (out.n_failed > 0)
            add("n_failed" + tag, static_cast<double>(out.n_failed), n, ckpt_hash);

        std::vector<int> da_labels(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) {
            const int c = mix.clusters[static_cast<std::size_t>(i)];
            da_labels[static_cast<std::size_t>(i)] = (c == 1 || c == 2) ? 1 : 0;
        }
        const double auc = metric_auc_pr(out.log_ratio.cwiseAbs(), da_labels);
        const auto nar = metric_nar(out.log_ratio, mix.clusters);
        add("auc" + tag, auc, n, ckpt_hash);
        add("nar" + tag, nar.value, n, ckpt_hash);
        aucs.push_back(auc);
        nars.push_back(nar.value);
        if (const auto csp = metric_csp(out.log_ratio, mix.clusters, a)) {
            add("csp" + tag, *csp, n, ckpt_hash);
            csps.push_back(*csp);
            csp_as.push_back(a);
        }

        // per-cluster mean estimated log-ratio
        double max_abs_mean = 0.0;
        for (int c = 0; c < 4; ++c) {
            double m = 0.0;
            Index cnt = 0;
            for (Index i = 0; i < n; ++i)
                if (mix.clusters[static_cast<std::size_t>(i)] == c) {
                    m += out.log_ratio[i];
                    ++cnt;
                }
            m /= static_cast<double>(cnt);
            add("cluster" + std::to_string(c + 1) + "_mean" + tag, m, n, ckpt_hash);
            max_abs_mean = std::max(max_abs_mean, std::abs(m));
        }
        add("max_abs_cluster_mean" + tag, max_abs_mean, n, ckpt_hash);
        add("runtime_seconds" + tag, out.runtime_seconds, n, ckpt_hash, true);
    }

    auto to_vec = [](const std::vector<double>& v) {
        Vec out(static_cast<Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Index>(i)] = v[i];
        return out;
    };
    const Vec a_vec = to_vec(spec.a_values);
    if (spec.a_values.size() >= 2) {
        add("spearman_auc_vs_a", metric_spearman(to_vec(aucs), a_vec),
            static_cast<Index>(aucs.size()));
        add("spearman_nar_vs_a", metric_spearman(to_vec(nars), a_vec),
            static_cast<Index>(nars.size()));
    }
    if (csps.size() >= 2)
        add("spearman_csp_vs_a", metric_spearman(to_vec(csps), to_vec(csp_as)),
            static_cast<Index>(csps.size()));

    report.evaluate_asserts(asserts);
    return report;
}

}  // namespace ratioflow
