#pragma once

#include "ratioflow/common.hpp"
#include "ratioflow/fields.hpp"
#include "ratioflow/gaussian_oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

namespace ratioflow {

/// Which field drives the trajectory: the numerator's own field (s1), the
/// unconditional field (s2), or an arbitrary caller-supplied one.
enum class SimulationVariant { s1, s2, general };

inline const char* to_string(SimulationVariant v) {
    switch (v) {
        case SimulationVariant::s1: return "s1";
        case SimulationVariant::s2: return "s2";
        case SimulationVariant::general: return "general";
    }
    return "?";
}

inline SimulationVariant variant_from_string(const std::string& s) {
    if (s == "s1") return SimulationVariant::s1;
    if (s == "s2") return SimulationVariant::s2;
    if (s == "general") return SimulationVariant::general;
    throw ConfigError("unknown variant '" + s + "' (expected s1 | s2 | general)");
}

/// Joint integration state of one point: position and accumulated log-ratio.
struct AugmentedState {
    Vec x;
    double log_r = 0.0;
};

struct EngineOptions {
    int threads = 1;
    Index chunk_size = 512;  // fixed grid; thread count never changes arithmetic
};

struct RatioOutcome {
    Vec log_ratio;  // NaN where a trajectory failed
    std::vector<std::uint8_t> converged;
    Index n_failed = 0;
    double runtime_seconds = 0.0;
};

namespace detail {

inline RowVec colwise_dot(const Mat& a, const Mat& b) {
    return (a.array() * b.array()).colwise().sum();
}

/// Fixed-step integration of d/dt (X, R) = rhs(X, t) from t_start down to
/// t_end. A non-finite column or one whose norm exceeds the budget is frozen
/// and flagged; the rest of the batch continues.
template <typename Rhs>
void integrate_augmented(Mat& X, RowVec& R, std::vector<std::uint8_t>& ok,
                         const SolverConfig& solver, Rhs&& rhs) {
    const double h = (solver.t_end() - solver.t_start()) / solver.steps;
    const Index B = X.cols();

    Mat k1x, k2x, k3x, k4x, Xs;
    RowVec k1r, k2r, k3r, k4r;

    auto sanitize = [&](Mat& Xc, RowVec& Rc) {
        for (Index j = 0; j < B; ++j) {
            if (!ok[static_cast<std::size_t>(j)]) continue;
            const bool bad = !Xc.col(j).allFinite() || !std::isfinite(Rc[j]) ||
                             Xc.col(j).norm() > solver.max_state_norm;
            if (bad) {
                ok[static_cast<std::size_t>(j)] = 0;
                Xc.col(j).setZero();
                Rc[j] = 0.0;
            }
        }
    };

    for (int step = 0; step < solver.steps; ++step) {
        const double t = solver.t_start() + h * step;
        if (solver.method == OdeMethod::euler) {
            rhs(X, t, k1x, k1r);
            X += h * k1x;
            R += h * k1r;
        } else {
            rhs(X, t, k1x, k1r);
            Xs = X + (0.5 * h) * k1x;
            rhs(Xs, t + 0.5 * h, k2x, k2r);
            Xs = X + (0.5 * h) * k2x;
            rhs(Xs, t + 0.5 * h, k3x, k3r);
            Xs = X + h * k3x;
            rhs(Xs, t + h, k4x, k4r);
            X += (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
            R += (h / 6.0) * (k1r + 2.0 * k2r + 2.0 * k3r + k4r);
        }
        sanitize(X, R);
    }
}

}  // namespace detail

/// Right-hand side of the log-ratio ODE at one point, full three-term form:
///   dx/dt    = b(x, t)
///   dlogr/dt = div(u' - u) + (b - u)^T s + (u' - b)^T s'
/// with (u, s) the numerator field/score and (u', s') the denominator's.
inline std::pair<Vec, double> ratio_rhs(const FieldProvider& num, const FieldProvider& den,
                                        const FieldProvider& sim, const Vec& x, double t) {
    const Mat X = x;
    const Vec b = sim.velocity(X, t);
    const Vec u = num.velocity(X, t);
    const Vec up = den.velocity(X, t);
    const double div_term = den.divergence(X, t)[0] - num.divergence(X, t)[0];
    const double corr = (b - u).dot(num.score(X, t).col(0)) + (up - b).dot(den.score(X, t).col(0));
    const double dlogr = div_term + corr;
    if (!b.allFinite() || !std::isfinite(dlogr))
        throw NumericalError("ratio_rhs: non-finite value at t=" + std::to_string(t));
    return {b, dlogr};
}

namespace detail {

struct ProviderRatioRhs {
    const FieldProvider& num;
    const FieldProvider& den;
    const FieldProvider* sim;  // null for the specialized s1 path
    SimulationVariant variant;

    void operator()(const Mat& X, double t, Mat& dX, RowVec& dR) const {
        const Mat u = num.velocity(X, t);
        const Mat up = den.velocity(X, t);
        const Vec div_diff = den.divergence(X, t) - num.divergence(X, t);
        const Mat s_den = den.score(X, t);
        if (variant == SimulationVariant::s1) {
            // b == u: the numerator correction vanishes identically.
            dX = u;
            dR = div_diff.transpose() + colwise_dot(up - u, s_den);
        } else {
            const Mat b = sim->velocity(X, t);
            const Mat s_num = num.score(X, t);
            dX = b;
            dR = div_diff.transpose() + colwise_dot(b - u, s_num) + colwise_dot(up - b, s_den);
        }
    }
};

}  // namespace detail

/// Integrates the augmented ODE backwards from the data points and returns
/// log p(x1 | num) - log p(x1 | den) per point (the negated accumulator).
/// points has one point per row. For s1 the simulation field is the numerator
/// field and `sim` may be null; s2/general require `sim`.
inline RatioOutcome estimate_log_ratio(const Mat& points, const FieldProvider& num,
                                       const FieldProvider& den, const FieldProvider* sim,
                                       SimulationVariant variant, const SolverConfig& solver,
                                       const EngineOptions& opts = {}) {
    solver.validate();
    if (variant != SimulationVariant::s1 && sim == nullptr)
        throw ConfigError("estimate_log_ratio: s2/general variants need a simulation field");
    const auto start = std::chrono::steady_clock::now();

    const Index N = points.rows();
    const Index d = points.cols();
    RatioOutcome out;
    out.log_ratio = Vec::Zero(N);
    out.converged.assign(static_cast<std::size_t>(N), 1);

    detail::ProviderRatioRhs rhs{num, den, variant == SimulationVariant::s1 ? nullptr : sim,
                                 variant};

    parallel_chunks(N, opts.chunk_size, opts.threads, [&](Index b, Index e) {
        const Index nb = e - b;
        Mat X = points.middleRows(b, nb).transpose();
        RowVec R = RowVec::Zero(nb);
        std::vector<std::uint8_t> ok(static_cast<std::size_t>(nb), 1);
        detail::integrate_augmented(X, R, ok, solver, rhs);
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
    out.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    (void)d;
    return out;
}

struct LikelihoodOutcome {
    Vec log_likelihood;
    std::vector<std::uint8_t> converged;
    Index n_failed = 0;
    double runtime_seconds = 0.0;
};

/// Change-of-variables likelihood: integrate (x, a) backwards with
/// da/dt = div u along the trajectory; the result is
/// log N(x_end; 0, I) + a_end, the prior being evaluated at t_end.
inline LikelihoodOutcome naive_log_likelihood_batch(const Mat& points, const FieldProvider& field,
                                                    const SolverConfig& solver,
                                                    const EngineOptions& opts = {}) {
    solver.validate();
    const auto start = std::chrono::steady_clock::now();
    const Index N = points.rows();
    const Index d = points.cols();

    LikelihoodOutcome out;
    out.log_likelihood = Vec::Zero(N);
    out.converged.assign(static_cast<std::size_t>(N), 1);

    auto rhs = [&](const Mat& X, double t, Mat& dX, RowVec& dR) {
        dX = field.velocity(X, t);
        dR = field.divergence(X, t).transpose();
    };

    parallel_chunks(N, opts.chunk_size, opts.threads, [&](Index b, Index e) {
        const Index nb = e - b;
        Mat X = points.middleRows(b, nb).transpose();
        RowVec R = RowVec::Zero(nb);
        std::vector<std::uint8_t> ok(static_cast<std::size_t>(nb), 1);
        detail::integrate_augmented(X, R, ok, solver, rhs);
        for (Index j = 0; j < nb; ++j) {
            if (ok[static_cast<std::size_t>(j)]) {
                const double log_prior =
                    -0.5 * (d * kLogTwoPi + X.col(j).squaredNorm());
                out.log_likelihood[b + j] = log_prior + R[j];
            } else {
                out.log_likelihood[b + j] = std::numeric_limits<double>::quiet_NaN();
                out.converged[static_cast<std::size_t>(b + j)] = 0;
            }
        }
    });

    for (auto c : out.converged)
        if (!c) ++out.n_failed;
    out.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

inline double naive_log_likelihood(const FieldProvider& field, const Vec& x1,
                                   const SolverConfig& solver) {
    const auto r = naive_log_likelihood_batch(x1.transpose(), field, solver);
    if (!r.converged[0]) throw NumericalError("naive_log_likelihood: trajectory diverged");
    return r.log_likelihood[0];
}

/// Two independent likelihood solves, subtracted per point.
inline RatioOutcome naive_log_ratio(const Mat& points, const FieldProvider& num,
                                    const FieldProvider& den, const SolverConfig& solver,
                                    const EngineOptions& opts = {}) {
    const auto start = std::chrono::steady_clock::now();
    const auto a = naive_log_likelihood_batch(points, num, solver, opts);
    const auto b = naive_log_likelihood_batch(points, den, solver, opts);
    RatioOutcome out;
    out.log_ratio = a.log_likelihood - b.log_likelihood;
    out.converged.assign(static_cast<std::size_t>(points.rows()), 1);
    for (Index i = 0; i < points.rows(); ++i) {
        const bool okp = a.converged[static_cast<std::size_t>(i)] &&
                         b.converged[static_cast<std::size_t>(i)];
        if (!okp) {
            out.converged[static_cast<std::size_t>(i)] = 0;
            out.log_ratio[i] = std::numeric_limits<double>::quiet_NaN();
            ++out.n_failed;
        }
    }
    out.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

}  // namespace ratioflow
