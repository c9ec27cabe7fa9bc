#pragma once

#include "ratioflow/gaussian_oracles.hpp"
#include "ratioflow/ratio_engine.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>

namespace ratioflow {

/// Training-free verification case: the shifted pair q = N(s 1, I) vs
/// q' = N(0, I), scored on n points drawn from q.
struct OracleCaseConfig {
    int d = 2;
    double s = 1.0;
    Schedule schedule = Schedule::linear();
    SolverConfig solver{OdeMethod::rk4, 200, 0.0, 1e6};  // full window: oracles are regular
    Index n_points = 1000;
    std::uint64_t seed = 7;
    EngineOptions engine{};
};

struct OracleCaseResult {
    double max_err_s1 = 0.0;        // |estimate - analytic| over the batch
    double max_err_s2 = 0.0;        // simulation field = equal-weight mixture
    double max_naive_dev = 0.0;     // |naive two-solve - s1| per point
    double max_antisym_err = 0.0;   // s1(y, y') + s1(y', y)
    Index n_failed = 0;
    double runtime_seconds = 0.0;
};

inline Mat sample_gaussian_points(const GaussianSpec& g, Index n, Rng& rng) {
    const Eigen::LLT<Mat> llt(g.covariance);
    const Mat L = llt.matrixL();
    Mat pts(n, g.dim());
    for (Index i = 0; i < n; ++i)
        pts.row(i) = (g.mean + L * rng.normal_vec(g.dim())).transpose();
    return pts;
}

inline OracleCaseResult run_oracle_case(const OracleCaseConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    const GaussianSpec q = GaussianSpec::isotropic(Vec::Constant(cfg.d, cfg.s));
    const GaussianSpec qp = GaussianSpec::standard(cfg.d);
    const auto num = oracle_field_provider(q, cfg.schedule);
    const auto den = oracle_field_provider(qp, cfg.schedule);
    const auto mix = mixture_oracle_field_provider({q, qp}, Vec::Constant(2, 0.5), cfg.schedule);

    Rng rng(cfg.seed);
    const Mat pts = sample_gaussian_points(q, cfg.n_points, rng);
    // the engine tracks the flow's own marginals, so the analytic target is the
    // ratio of the terminal laws (identical to the data laws when sigma_1 = 0)
    const Vec truth = analytic_log_ratio_batch(terminal_marginal_spec(q, cfg.schedule),
                                               terminal_marginal_spec(qp, cfg.schedule),
                                               pts.transpose());

    OracleCaseResult res;
    const auto s1 =
        estimate_log_ratio(pts, num, den, nullptr, SimulationVariant::s1, cfg.solver, cfg.engine);
    const auto s2 =
        estimate_log_ratio(pts, num, den, &mix, SimulationVariant::s2, cfg.solver, cfg.engine);
    const auto nv = naive_log_ratio(pts, num, den, cfg.solver, cfg.engine);
    const auto rev =
        estimate_log_ratio(pts, den, num, nullptr, SimulationVariant::s1, cfg.solver, cfg.engine);

    res.n_failed = s1.n_failed + s2.n_failed + nv.n_failed + rev.n_failed;
    res.max_err_s1 = (s1.log_ratio - truth).cwiseAbs().maxCoeff();
    res.max_err_s2 = (s2.log_ratio - truth).cwiseAbs().maxCoeff();
    res.max_naive_dev = (nv.log_ratio - s1.log_ratio).cwiseAbs().maxCoeff();
    res.max_antisym_err = (s1.log_ratio + rev.log_ratio).cwiseAbs().maxCoeff();
    res.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

struct ConvergenceStudy {
    double euler_order = 0.0;
    double rk4_order = 0.0;
    double rk4_halving_ratio = 0.0;  // coarse error / fine error at 2x steps
};

/// Measured orders from step halving against the analytic ratio.
inline ConvergenceStudy run_convergence_study(int d, double s, const Schedule& schedule,
                                              std::uint64_t seed = 7, Index n_points = 100,
                                              int euler_steps = 100, int rk4_steps = 10) {
    const GaussianSpec q = GaussianSpec::isotropic(Vec::Constant(d, s));
    const GaussianSpec qp = GaussianSpec::standard(d);
    const auto num = oracle_field_provider(q, schedule);
    const auto den = oracle_field_provider(qp, schedule);
    Rng rng(seed);
    const Mat pts = sample_gaussian_points(q, n_points, rng);
    const Vec truth = analytic_log_ratio_batch(terminal_marginal_spec(q, schedule),
                                               terminal_marginal_spec(qp, schedule),
                                               pts.transpose());

    auto max_err = [&](OdeMethod m, int steps) {
        SolverConfig solver{m, steps, 0.0, 1e6};
        const auto out = estimate_log_ratio(pts, num, den, nullptr, SimulationVariant::s1, solver);
        return (out.log_ratio - truth).cwiseAbs().maxCoeff();
    };

    ConvergenceStudy cs;
    cs.euler_order = std::log2(max_err(OdeMethod::euler, euler_steps) /
                               max_err(OdeMethod::euler, 2 * euler_steps));
    cs.rk4_halving_ratio = max_err(OdeMethod::rk4, rk4_steps) / max_err(OdeMethod::rk4, 2 * rk4_steps);
    cs.rk4_order = std::log2(cs.rk4_halving_ratio);
    return cs;
}

/// Mean log-ratio over samples from the correlated law, with analytic fields.
/// Estimates the mutual information between the odd and even coordinate blocks.
struct OracleMiResult {
    double mi_estimate = 0.0;
    double mc_standard_error = 0.0;
    Index n_failed = 0;
};

inline OracleMiResult run_oracle_mi(int d, Index n_samples, const Schedule& schedule,
                                    const SolverConfig& solver, std::uint64_t seed,
                                    const EngineOptions& engine = {}, double rho = 0.8) {
    const GaussianSpec q(Vec::Zero(d), block_correlated_covariance(d, rho));
    const GaussianSpec qp = GaussianSpec::standard(d);
    const auto num = oracle_field_provider(q, schedule);
    const auto den = oracle_field_provider(qp, schedule);
    Rng rng(seed);
    const Mat pts = sample_gaussian_points(q, n_samples, rng);
    const auto out = estimate_log_ratio(pts, num, den, nullptr, SimulationVariant::s1, solver, engine);

    OracleMiResult res;
    res.n_failed = out.n_failed;
    double sum = 0.0, sumsq = 0.0;
    Index n_ok = 0;
    for (Index i = 0; i < out.log_ratio.size(); ++i) {
        if (!out.converged[static_cast<std::size_t>(i)]) continue;
        sum += out.log_ratio[i];
        sumsq += out.log_ratio[i] * out.log_ratio[i];
        ++n_ok;
    }
    if (n_ok == 0) throw NumericalError("oracle MI: every trajectory failed");
    res.mi_estimate = sum / static_cast<double>(n_ok);
    const double var = (sumsq / n_ok - res.mi_estimate * res.mi_estimate);
    res.mc_standard_error = std::sqrt(var / static_cast<double>(n_ok));
    return res;
}

}  // namespace ratioflow
