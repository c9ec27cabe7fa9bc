// ratioflow command-line interface: dataset generation, flow-matching
// training, single-simulation log-ratio estimation, benchmark drivers, and
// analytic self-checks.
//
// Exit codes: 0 success, 1 usage/config error, 2 numerical failure,
// 3 assertion failure.

#include "ratioflow/benchmarks.hpp"
#include "ratioflow/checkpoint.hpp"
#include "ratioflow/config.hpp"
#include "ratioflow/oracle_suite.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace ratioflow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitAssertion = 3;

int env_default_threads() {
    const char* env = std::getenv("RATIOFLOW_THREADS");
    if (!env) return 1;
    try {
        const int v = std::stoi(env);
        if (v < 1) throw std::invalid_argument("");
        return v;
    } catch (...) {
        throw ConfigError("RATIOFLOW_THREADS must be a positive integer");
    }
}

Schedule parse_schedule_arg(const std::string& s) {
    const auto colon = s.find(':');
    const std::string kind = s.substr(0, colon);
    const std::string param = colon == std::string::npos ? "" : s.substr(colon + 1);
    if (kind == "linear") {
        if (!param.empty()) throw ConfigError("schedule 'linear' takes no parameter");
        return Schedule::linear();
    }
    if (kind == "linear-floor")
        return Schedule::linear_floor(param.empty() ? 0.1 : std::stod(param));
    if (kind == "parabolic") return Schedule::parabolic(param.empty() ? 0.25 : std::stod(param));
    throw ConfigError("unknown schedule '" + s +
                      "' (expected linear | linear-floor[:sigma_min] | parabolic[:lambda])");
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, sep)) out.push_back(tok);
    return out;
}

/// Parses per-variable condition tokens ("1", "0,null", ...) against a spec.
std::vector<int> parse_condition(const std::string& arg, const ConditionSpec& spec) {
    const auto toks = split(arg, ',');
    if (toks.size() != spec.n_variables()) {
        throw ConfigError("condition '" + arg + "' has " + std::to_string(toks.size()) +
                          " tokens but the checkpoint declares " +
                          std::to_string(spec.n_variables()) + " variables");
    }
    std::vector<int> labels(toks.size());
    for (std::size_t v = 0; v < toks.size(); ++v) {
        const auto& var = spec.variables[v];
        if (toks[v] == "null") {
            labels[v] = spec.null_index(v);
            continue;
        }
        int value = -1;
        try {
            std::size_t pos = 0;
            value = std::stoi(toks[v], &pos);
            if (pos != toks[v].size()) value = -1;
        } catch (...) {
            value = -1;
        }
        if (value < 0 || value >= var.cardinality)
            throw ConfigError("unknown token '" + toks[v] + "' for variable '" + var.name +
                              "' (valid: 0.." + std::to_string(var.cardinality - 1) +
                              " or 'null')");
        labels[v] = value;
    }
    return labels;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw ConfigError("failed writing '" + path + "'");
}

LabeledDataset select_conditions(const LabeledDataset& ds, const std::string& names_csv) {
    if (names_csv.empty()) return ds;
    const auto names = split(names_csv, ',');
    LabeledDataset out;
    out.points = ds.points;
    out.labels.resize(ds.size(), static_cast<Index>(names.size()));
    for (std::size_t k = 0; k < names.size(); ++k) {
        Index col = -1;
        for (Index v = 0; v < ds.n_condition_vars(); ++v)
            if (ds.condition_names[static_cast<std::size_t>(v)] == names[k]) col = v;
        if (col < 0) throw ConfigError("dataset has no condition column '" + names[k] + "'");
        out.labels.col(static_cast<Index>(k)) = ds.labels.col(col);
        out.condition_names.push_back(names[k]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
    std::string kind;
    int d = 2;
    double s = 1.0;
    Index n = 1000;
    double a = 0.2;
    Index n_per_cluster = 1000;
    std::uint64_t seed = 7;
    std::string out;
};

int cmd_generate(const GenerateArgs& args) {
    Rng rng(args.seed);
    LabeledDataset ds;
    if (args.kind == "gaussians") {
        ds = gen_shifted_gaussian(args.d, args.s, args.n, rng);
    } else if (args.kind == "blockcorr") {
        ds = gen_block_correlated(args.d, args.n, rng);
    } else if (args.kind == "da-mixture") {
        auto mix = gen_da_mixture(args.a, args.n_per_cluster, rng);
        // keep the ground-truth cluster column alongside the treatment label
        ds.points = std::move(mix.data.points);
        ds.labels.resize(ds.points.rows(), 2);
        ds.labels.col(0) = mix.data.labels.col(0);
        for (Index i = 0; i < ds.points.rows(); ++i)
            ds.labels(i, 1) = mix.clusters[static_cast<std::size_t>(i)];
        ds.condition_names = {"treatment", "cluster"};
    } else {
        throw ConfigError("unknown dataset kind '" + args.kind + "'");
    }
    write_dataset_csv(args.out, ds);

    Json summary{{"rows", ds.size()}, {"dim", ds.dim()}, {"out", args.out}};
    for (Index v = 0; v < ds.n_condition_vars(); ++v) {
        Json counts = Json::object();
        const int card = ds.labels.col(v).maxCoeff() + 1;
        for (int c = 0; c < card; ++c)
            counts[std::to_string(c)] =
                static_cast<std::int64_t>((ds.labels.col(v).array() == c).count());
        summary["labels"][ds.condition_names[static_cast<std::size_t>(v)]] = counts;
    }
    std::cout << summary.dump(2) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string data;
    std::string config;
    std::string out_checkpoint;
    std::string out_trace;
    std::string init_checkpoint;
    std::string conditions;
};

int cmd_train(const TrainArgs& args) {
    RunConfig rc = args.config.empty() ? RunConfig{} : load_run_config(args.config);
    const auto raw = read_dataset_csv(args.data);
    const auto ds = select_conditions(raw, args.conditions);
    const auto spec = ds.infer_condition_spec();

    FlowScoreModel model;
    if (!args.init_checkpoint.empty()) {
        auto loaded = load_checkpoint(args.init_checkpoint);
        if (loaded.model.data_dim() != ds.dim())
            throw ConfigError("checkpoint data_dim " + std::to_string(loaded.model.data_dim()) +
                              " does not match dataset dim " + std::to_string(ds.dim()));
        if (loaded.model.conditions.variables.size() != spec.variables.size())
            throw ConfigError("checkpoint condition variables do not match the dataset");
        model = std::move(loaded.model);
    } else {
        ModelConfig mc = rc.model;
        mc.data_dim = static_cast<int>(ds.dim());
        Rng init_rng(rc.seed ^ 0x9e3779b97f4a7c15ull);
        model = make_flow_score_model(mc, spec, rc.schedule, init_rng, rc.train.t_min,
                                      rc.train.t_max);
    }

    Rng train_rng(rc.train.seed);
    auto res = train(ds, std::move(model), rc.train, train_rng);

    save_checkpoint(res.model, args.out_checkpoint, &rc.train);
    const std::string trace_path =
        args.out_trace.empty() ? args.out_checkpoint + ".loss.csv" : args.out_trace;
    {
        std::ofstream out(trace_path);
        if (!out) throw ConfigError("cannot open '" + trace_path + "' for writing");
        out << "step,loss\n";
        char buf[48];
        for (std::size_t i = 0; i < res.loss_trace.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i, res.loss_trace[i]);
            out << buf;
        }
    }

    Json summary{{"checkpoint", args.out_checkpoint},
                 {"loss_trace", trace_path},
                 {"steps", res.loss_trace.size()},
                 {"final_loss", res.loss_trace.back()},
                 {"checkpoint_hash", hex64(checkpoint_hash(res.model, &rc.train))}};
    std::cout << summary.dump(2) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateArgs {
    std::string checkpoint;
    std::string data;
    std::string num_cond;
    std::string den_cond;
    std::string variant = "s1";
    std::string solver_method = "rk4";
    int solver_steps = 200;
    double t_eps = 1e-3;
    std::string out;
    std::string out_summary;
    int threads = 1;
};

int cmd_estimate(const EstimateArgs& args) {
    auto loaded = load_checkpoint(args.checkpoint);
    const auto& model = loaded.model;
    const auto ds = read_dataset_csv(args.data);
    if (ds.dim() != model.data_dim())
        throw ConfigError("dataset dim " + std::to_string(ds.dim()) +
                          " does not match checkpoint data_dim " +
                          std::to_string(model.data_dim()));

    RatioRequest req;
    req.points = ds.points;
    req.num_labels = parse_condition(args.num_cond, model.conditions);
    req.den_labels = parse_condition(args.den_cond, model.conditions);
    req.variant = variant_from_string(args.variant);
    if (req.variant == SimulationVariant::general)
        throw ConfigError("the CLI supports variants s1 and s2");
    req.solver.method = ode_method_from_string(args.solver_method);
    req.solver.steps = args.solver_steps;
    req.solver.t_eps = args.t_eps;

    if (req.variant == SimulationVariant::s2 &&
        (!loaded.has_train_config || loaded.train_config.dropout_beta <= 0.0)) {
        std::cerr << "warning: variant s2 uses the empty condition token, but this checkpoint "
                     "was not trained with condition dropout (dropout_beta > 0)\n";
    }

    EngineOptions engine;
    engine.threads = args.threads;
    const auto out = estimate_log_ratio(model, req, engine);

    {
        std::ofstream csv(args.out);
        if (!csv) throw ConfigError("cannot open '" + args.out + "' for writing");
        csv << "index,log_ratio,converged\n";
        char buf[64];
        for (Index i = 0; i < out.log_ratio.size(); ++i) {
            if (out.converged[static_cast<std::size_t>(i)])
                std::snprintf(buf, sizeof(buf), "%lld,%.17g,1\n", static_cast<long long>(i),
                              out.log_ratio[i]);
            else
                std::snprintf(buf, sizeof(buf), "%lld,nan,0\n", static_cast<long long>(i));
            csv << buf;
        }
    }

    double mean = 0.0, sq = 0.0;
    Index n_ok = 0;
    for (Index i = 0; i < out.log_ratio.size(); ++i) {
        if (!out.converged[static_cast<std::size_t>(i)]) continue;
        mean += out.log_ratio[i];
        sq += out.log_ratio[i] * out.log_ratio[i];
        ++n_ok;
    }
    if (n_ok > 0) mean /= static_cast<double>(n_ok);
    const double stddev =
        n_ok > 1 ? std::sqrt((sq - n_ok * mean * mean) / static_cast<double>(n_ok - 1)) : 0.0;
    Json summary{{"schema", 1},
                 {"mean", mean},
                 {"std", stddev},
                 {"n", out.log_ratio.size()},
                 {"n_failed", out.n_failed},
                 {"runtime_seconds", out.runtime_seconds},
                 {"variant", args.variant},
                 {"out", args.out}};
    const std::string summary_path =
        args.out_summary.empty() ? args.out + ".summary.json" : args.out_summary;
    write_text(summary_path, summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    if (n_ok == 0) throw NumericalError("estimate: every trajectory failed");
    return kExitOk;
}

// ---------------------------------------------------------------------------
// benchmark

struct BenchmarkArgs {
    std::string kind;
    std::string config;
    std::string out;
    std::string timing_out;
    bool dry_run = false;
    int threads = 0;  // 0: keep config value
};

int cmd_benchmark(const BenchmarkArgs& args) {
    RunConfig rc = args.config.empty() ? RunConfig{} : load_run_config(args.config);
    if (args.threads > 0) rc.threads = args.threads;

    BenchReport report;
    if (args.kind == "gaussians") {
        const auto spec = gaussian_bench_spec_from_json(rc.benchmark);
        if (args.dry_run) {
            std::cout << run_config_to_json(rc).dump(2) << "\n";
            return kExitOk;
        }
        report = run_gaussian_bench(spec, rc.bench_common(), rc.asserts);
    } else if (args.kind == "mi") {
        const auto spec = mi_bench_spec_from_json(rc.benchmark);
        if (args.dry_run) {
            std::cout << run_config_to_json(rc).dump(2) << "\n";
            return kExitOk;
        }
        report = run_mi_bench(spec, rc.bench_common(), rc.asserts);
    } else if (args.kind == "da") {
        const auto spec = da_bench_spec_from_json(rc.benchmark);
        if (args.dry_run) {
            std::cout << run_config_to_json(rc).dump(2) << "\n";
            return kExitOk;
        }
        report = run_da_bench(spec, rc.bench_common(), rc.asserts);
    } else {
        throw ConfigError("unknown benchmark kind '" + args.kind + "'");
    }

    write_text(args.out, report.to_json().dump(2) + "\n");
    if (!args.timing_out.empty()) write_text(args.timing_out, report.timing_json().dump(2) + "\n");
    std::cerr << report.timing_json().dump(2) << "\n";
    std::cout << report.to_json().dump(2) << "\n";

    if (!report.all_asserts_pass()) {
        std::cerr << "benchmark assertions failed\n";
        return kExitAssertion;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// oracle-check

struct OracleArgs {
    int d = 2;
    double s = 1.0;
    std::string schedule = "linear";
    std::string solver_method = "rk4";
    int solver_steps = 200;
    double t_eps = 0.0;
    Index n = 1000;
    std::uint64_t seed = 7;
    double threshold = 1e-3;
    bool convergence = false;
    int threads = 1;
};

int cmd_oracle_check(const OracleArgs& args) {
    OracleCaseConfig cfg;
    cfg.d = args.d;
    cfg.s = args.s;
    cfg.schedule = parse_schedule_arg(args.schedule);
    cfg.solver.method = ode_method_from_string(args.solver_method);
    cfg.solver.steps = args.solver_steps;
    cfg.solver.t_eps = args.t_eps;
    cfg.n_points = args.n;
    cfg.seed = args.seed;
    cfg.engine.threads = args.threads;

    const auto res = run_oracle_case(cfg);
    Json out{{"d", args.d},
             {"s", args.s},
             {"schedule", args.schedule},
             {"solver", Json{{"method", args.solver_method},
                             {"steps", args.solver_steps},
                             {"t_eps", args.t_eps}}},
             {"n_points", args.n},
             {"max_err_s1", res.max_err_s1},
             {"max_err_s2", res.max_err_s2},
             {"max_naive_dev", res.max_naive_dev},
             {"max_antisym_err", res.max_antisym_err},
             {"n_failed", res.n_failed},
             {"runtime_seconds", res.runtime_seconds},
             {"threshold", args.threshold}};

    if (args.convergence) {
        const auto cs = run_convergence_study(args.d, args.s, cfg.schedule, args.seed);
        out["euler_order"] = cs.euler_order;
        out["rk4_order"] = cs.rk4_order;
        out["rk4_halving_ratio"] = cs.rk4_halving_ratio;
    }
    std::cout << out.dump(2) << "\n";

    const double worst =
        std::max({res.max_err_s1, res.max_err_s2, res.max_naive_dev, res.max_antisym_err});
    if (!std::isfinite(worst) || res.n_failed > 0) {
        std::cerr << "oracle check produced failed trajectories\n";
        return kExitNumerical;
    }
    if (worst > args.threshold) {
        std::cerr << "oracle check exceeded the error threshold (max " << worst << " > "
                  << args.threshold << ")\n";
        return kExitAssertion;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ratioflow: log-density ratios between conditional flow-matching models via a "
                 "single augmented ODE simulation"};
    app.require_subcommand(1);

    int default_threads = 1;
    try {
        default_threads = env_default_threads();
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    GenerateArgs gen;
    auto* cgen = app.add_subcommand("generate", "Write a synthetic benchmark dataset as CSV");
    cgen->add_option("kind", gen.kind, "gaussians | blockcorr | da-mixture")->required();
    cgen->add_option("--d", gen.d, "data dimension (gaussians/blockcorr)");
    cgen->add_option("--s", gen.s, "mean shift of the numerator law (gaussians)");
    cgen->add_option("--n", gen.n, "samples per condition (gaussians/blockcorr)");
    cgen->add_option("--a", gen.a, "abundance parameter in [0,0.5] (da-mixture)");
    cgen->add_option("--n-per-cluster", gen.n_per_cluster, "points per cluster (da-mixture)");
    cgen->add_option("--seed", gen.seed, "generator seed");
    cgen->add_option("--out", gen.out, "output CSV path")->required();

    TrainArgs tr;
    auto* ctr = app.add_subcommand("train", "Train the conditional velocity/score model");
    ctr->add_option("--data", tr.data, "dataset CSV")->required();
    ctr->add_option("--config", tr.config, "run config JSON (defaults when omitted)");
    ctr->add_option("--out-checkpoint", tr.out_checkpoint, "checkpoint output path")->required();
    ctr->add_option("--out-trace", tr.out_trace, "loss trace CSV (default <checkpoint>.loss.csv)");
    ctr->add_option("--init-checkpoint", tr.init_checkpoint, "resume from this checkpoint");
    ctr->add_option("--conditions", tr.conditions,
                    "comma-separated label columns to condition on (default: all)");

    EstimateArgs est;
    auto* cest = app.add_subcommand("estimate", "Estimate per-point log-density ratios");
    cest->add_option("--checkpoint", est.checkpoint, "trained model checkpoint")->required();
    cest->add_option("--data", est.data, "points CSV (dataset format)")->required();
    cest->add_option("--num-cond", est.num_cond, "numerator condition tokens, comma-separated")
        ->required();
    cest->add_option("--den-cond", est.den_cond, "denominator condition tokens")->required();
    cest->add_option("--variant", est.variant, "s1 | s2 (default s1)");
    cest->add_option("--solver-method", est.solver_method, "euler | rk4");
    cest->add_option("--solver-steps", est.solver_steps, "fixed step count");
    cest->add_option("--t-eps", est.t_eps, "integration window margin");
    cest->add_option("--out", est.out, "per-point CSV output")->required();
    cest->add_option("--out-summary", est.out_summary, "summary JSON (default <out>.summary.json)");
    cest->add_option("--threads", est.threads, "worker threads")->default_val(default_threads);

    BenchmarkArgs bench;
    auto* cbench = app.add_subcommand("benchmark", "Run a benchmark and write its report");
    cbench->add_option("kind", bench.kind, "gaussians | mi | da")->required();
    cbench->add_option("--config", bench.config, "run config JSON");
    cbench->add_option("--out", bench.out, "report JSON output")->required();
    cbench->add_option("--timing-out", bench.timing_out, "wall-clock sidecar JSON");
    cbench->add_flag("--dry-run", bench.dry_run, "validate the config and exit");
    cbench->add_option("--threads", bench.threads, "override config threads");

    OracleArgs orc;
    auto* corc = app.add_subcommand("oracle-check",
                                    "Verify the ratio ODE against analytic Gaussian fields");
    corc->add_option("--d", orc.d, "dimension");
    corc->add_option("--s", orc.s, "mean shift");
    corc->add_option("--schedule", orc.schedule,
                     "linear | linear-floor[:sigma_min] | parabolic[:lambda]");
    corc->add_option("--solver-method", orc.solver_method, "euler | rk4");
    corc->add_option("--solver-steps", orc.solver_steps, "fixed step count");
    corc->add_option("--t-eps", orc.t_eps, "integration window margin (0: full window)");
    corc->add_option("--n", orc.n, "points sampled from the numerator law");
    corc->add_option("--seed", orc.seed, "sampling seed");
    corc->add_option("--threshold", orc.threshold, "max tolerated absolute error");
    corc->add_flag("--convergence", orc.convergence, "also measure solver convergence orders");
    corc->add_option("--threads", orc.threads, "worker threads")->default_val(default_threads);

    std::string defaults_kind = "gaussians";
    auto* cconf = app.add_subcommand("config", "Configuration helpers");
    auto* cdef = cconf->add_subcommand("print-defaults", "Print the default run config");
    cdef->add_option("--kind", defaults_kind, "benchmark section kind (gaussians | mi | da)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (cgen->parsed()) return cmd_generate(gen);
        if (ctr->parsed()) return cmd_train(tr);
        if (cest->parsed()) return cmd_estimate(est);
        if (cbench->parsed()) return cmd_benchmark(bench);
        if (corc->parsed()) return cmd_oracle_check(orc);
        if (cconf->parsed()) {
            if (!cdef->parsed()) throw ConfigError("config requires a subcommand (print-defaults)");
            RunConfig rc;
            rc.benchmark = default_benchmark_json(defaults_kind);
            std::cout << run_config_to_json(rc).dump(2) << "\n";
            return kExitOk;
        }
        throw ConfigError("no subcommand given");
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const AssertionFailure& e) {
        std::cerr << "assertion failure: " << e.what() << "\n";
        return kExitAssertion;
    } catch (const CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::domain_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}
