#pragma once

#include "ratioflow/common.hpp"

#include <cmath>
#include <string>

namespace ratioflow {

/// Gaussian probability-path schedule (alpha_t, sigma_t) with alpha_t = t.
///
/// Three variance laws:
///   linear        sigma_t = 1 - t
///   linear_floor  sigma_t = 1 - (1 - sigma_min) t
///   parabolic     sigma_t^2 = lambda t (1 - t) + (1 - t)^2
///
/// The parabolic law is stored through its variance polynomial so that
/// sigma * sigma_dot stays finite at t = 1 even though sigma_dot itself
/// diverges there.
enum class ScheduleKind { linear, linear_floor, parabolic };

inline const char* to_string(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::linear: return "linear";
        case ScheduleKind::linear_floor: return "linear-floor";
        case ScheduleKind::parabolic: return "parabolic";
    }
    return "?";
}

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "linear") return ScheduleKind::linear;
    if (s == "linear-floor") return ScheduleKind::linear_floor;
    if (s == "parabolic") return ScheduleKind::parabolic;
    throw ConfigError("unknown schedule kind '" + s + "' (expected linear | linear-floor | parabolic)");
}

struct Schedule {
    ScheduleKind kind = ScheduleKind::linear;
    double sigma_min = 0.0;  // linear_floor only
    double lambda = 0.0;     // parabolic only

    static Schedule linear() { return Schedule{ScheduleKind::linear, 0.0, 0.0}; }

    static Schedule linear_floor(double sigma_min) {
        if (!(sigma_min >= 0.0 && sigma_min <= 0.5))
            throw ConfigError("sigma_min must be in [0, 0.5]");
        return Schedule{ScheduleKind::linear_floor, sigma_min, 0.0};
    }

    static Schedule parabolic(double lambda) {
        if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must be in [0, 1]");
        return Schedule{ScheduleKind::parabolic, 0.0, lambda};
    }

    static Schedule make(ScheduleKind kind, double sigma_min, double lambda) {
        switch (kind) {
            case ScheduleKind::linear:
                if (sigma_min != 0.0 || lambda != 0.0)
                    throw ConfigError("schedule 'linear' takes no sigma_min/lambda");
                return linear();
            case ScheduleKind::linear_floor:
                if (lambda != 0.0) throw ConfigError("schedule 'linear-floor' takes no lambda");
                return linear_floor(sigma_min);
            case ScheduleKind::parabolic:
                if (sigma_min != 0.0) throw ConfigError("schedule 'parabolic' takes no sigma_min");
                return parabolic(lambda);
        }
        throw ConfigError("bad schedule kind");
    }

    double sigma_sq(double t) const {
        switch (kind) {
            case ScheduleKind::linear: {
                const double s = 1.0 - t;
                return s * s;
            }
            case ScheduleKind::linear_floor: {
                const double s = 1.0 - (1.0 - sigma_min) * t;
                return s * s;
            }
            case ScheduleKind::parabolic: {
                const double s = 1.0 - t;
                return lambda * t * s + s * s;
            }
        }
        return 0.0;
    }

    double sigma(double t) const {
        switch (kind) {
            case ScheduleKind::linear: return 1.0 - t;
            case ScheduleKind::linear_floor: return 1.0 - (1.0 - sigma_min) * t;
            case ScheduleKind::parabolic: return std::sqrt(sigma_sq(t));
        }
        return 0.0;
    }

    /// sigma_t * d(sigma_t)/dt == (1/2) d(sigma_t^2)/dt; finite on all of [0, 1].
    double sigma_sigma_dot(double t) const {
        switch (kind) {
            case ScheduleKind::linear: return t - 1.0;
            case ScheduleKind::linear_floor: {
                const double k = 1.0 - sigma_min;
                return -k * (1.0 - k * t);
            }
            case ScheduleKind::parabolic: return 0.5 * (lambda * (1.0 - 2.0 * t) - 2.0 * (1.0 - t));
        }
        return 0.0;
    }

    double sigma_dot(double t) const {
        switch (kind) {
            case ScheduleKind::linear: return -1.0;
            case ScheduleKind::linear_floor: return -(1.0 - sigma_min);
            case ScheduleKind::parabolic: {
                const double s = sigma(t);
                if (s == 0.0) throw std::domain_error("sigma_dot: parabolic schedule has sigma=0 at t=1");
                return sigma_sigma_dot(t) / s;
            }
        }
        return 0.0;
    }
};

inline double alpha(const Schedule&, double t) { return t; }
inline double alpha_dot(const Schedule&, double) { return 1.0; }

/// x_t = alpha_t x1 + sigma_t eps
inline Vec sample_path_point(const Schedule& s, const Vec& x1, const Vec& eps, double t) {
    return alpha(s, t) * x1 + s.sigma(t) * eps;
}

/// u_t(x_t | x1) = alpha_dot x1 + (sigma_dot / sigma) (x_t - alpha x1)
inline Vec cond_velocity_target(const Schedule& s, const Vec& x_t, const Vec& x1, double t) {
    const double sig = s.sigma(t);
    if (sig <= 0.0) throw std::domain_error("cond_velocity_target: sigma_t = 0");
    return alpha_dot(s, t) * x1 + (s.sigma_dot(t) / sig) * (x_t - alpha(s, t) * x1);
}

/// grad_x log p_t(x_t | x1) = -(x_t - alpha x1) / sigma^2
inline Vec cond_score_target(const Schedule& s, const Vec& x_t, const Vec& x1, double t) {
    const double sig2 = s.sigma_sq(t);
    if (sig2 <= 0.0) throw std::domain_error("cond_score_target: sigma_t = 0");
    return -(x_t - alpha(s, t) * x1) / sig2;
}

/// score = (alpha u - alpha_dot x) / (sigma (alpha_dot sigma - alpha sigma_dot)).
/// Degenerates at alpha = 0 (the velocity no longer enters) and where the
/// denominator vanishes; both raise domain errors.
inline Vec score_from_velocity(const Schedule& s, const Vec& u, const Vec& x, double t) {
    const double a = alpha(s, t);
    const double ad = alpha_dot(s, t);
    if (a == 0.0) throw std::domain_error("score_from_velocity: degenerate at alpha_t = 0");
    const double sig = s.sigma(t);
    const double denom = sig * (ad * sig - a * s.sigma_dot(t));
    if (denom == 0.0) throw std::domain_error("score_from_velocity: zero denominator");
    return (a * u - ad * x) / denom;
}

/// u = [sigma_dot x + (alpha_dot sigma - alpha sigma_dot) e_x1] / sigma,
/// where e_x1 approximates E[x1 | x_t].
inline Vec velocity_from_posterior_mean(const Schedule& s, const Vec& x, const Vec& e_x1, double t) {
    const double sig = s.sigma(t);
    if (sig <= 0.0) throw std::domain_error("velocity_from_posterior_mean: sigma_t = 0");
    const double a = alpha(s, t);
    const double ad = alpha_dot(s, t);
    const double sd = s.sigma_dot(t);
    return (sd * x + (ad * sig - a * sd) * e_x1) / sig;
}

// Batched variants with one time value per column; used by the training loop.

inline Mat cond_velocity_target_batch(const Schedule& s, const Mat& x_t, const Mat& x1, const RowVec& ts) {
    Mat out(x_t.rows(), x_t.cols());
    for (Index j = 0; j < x_t.cols(); ++j) {
        const double t = ts[j];
        const double sig = s.sigma(t);
        if (sig <= 0.0) throw std::domain_error("cond_velocity_target: sigma_t = 0");
        out.col(j) = alpha_dot(s, t) * x1.col(j) +
                     (s.sigma_dot(t) / sig) * (x_t.col(j) - alpha(s, t) * x1.col(j));
    }
    return out;
}

inline Mat cond_score_target_batch(const Schedule& s, const Mat& x_t, const Mat& x1, const RowVec& ts) {
    Mat out(x_t.rows(), x_t.cols());
    for (Index j = 0; j < x_t.cols(); ++j) {
        const double t = ts[j];
        const double sig2 = s.sigma_sq(t);
        if (sig2 <= 0.0) throw std::domain_error("cond_score_target: sigma_t = 0");
        out.col(j) = -(x_t.col(j) - alpha(s, t) * x1.col(j)) / sig2;
    }
    return out;
}

}  // namespace ratioflow
