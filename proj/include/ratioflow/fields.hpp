#pragma once

#include "ratioflow/common.hpp"

#include <functional>
#include <string>

namespace ratioflow {

/// Velocity, score, and velocity-divergence of one probability path, evaluated
/// on batches (columns are points). All three must be pure and mutually
/// consistent: same path behind all of them.
struct FieldProvider {
    std::function<Mat(const Mat&, double)> velocity;
    std::function<Mat(const Mat&, double)> score;
    std::function<Vec(const Mat&, double)> divergence;
};

enum class OdeMethod { euler, rk4 };

inline const char* to_string(OdeMethod m) { return m == OdeMethod::euler ? "euler" : "rk4"; }

inline OdeMethod ode_method_from_string(const std::string& s) {
    if (s == "euler") return OdeMethod::euler;
    if (s == "rk4") return OdeMethod::rk4;
    throw ConfigError("unknown solver method '" + s + "' (expected euler | rk4)");
}

/// Fixed-step integration from t_start = 1 - t_eps down to t_end = t_eps.
/// t_eps = 0 is valid for fields that are regular at the endpoints
/// (analytic Gaussian oracles); trained models keep the default clamp.
struct SolverConfig {
    OdeMethod method = OdeMethod::rk4;
    int steps = 200;
    double t_eps = 1e-3;
    double max_state_norm = 1e6;

    double t_start() const { return 1.0 - t_eps; }
    double t_end() const { return t_eps; }

    void validate() const {
        if (steps < 1) throw ConfigError("solver steps must be >= 1");
        if (!(t_eps >= 0.0 && t_eps < 0.5)) throw ConfigError("t_eps must be in [0, 0.5)");
        if (!(max_state_norm > 0.0)) throw ConfigError("max_state_norm must be positive");
    }
};

}  // namespace ratioflow
