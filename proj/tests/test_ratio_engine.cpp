#include <catch2/catch_amalgamated.hpp>

#include "ratioflow/ratio_engine.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

using namespace ratioflow;

namespace {

GaussianSpec shifted(int d, double s) { return GaussianSpec::isotropic(Vec::Constant(d, s)); }

SolverConfig oracle_solver(int steps = 200, OdeMethod m = OdeMethod::rk4) {
    SolverConfig s;
    s.method = m;
    s.steps = steps;
    s.t_eps = 0.0;  // oracle fields are regular at the endpoints
    return s;
}

Mat sample_from(const GaussianSpec& g, Index n, Rng& rng) {
    const Eigen::LLT<Mat> llt(g.covariance);
    const Mat L = llt.matrixL();
    Mat pts(n, g.dim());
    for (Index i = 0; i < n; ++i) pts.row(i) = (g.mean + L * rng.normal_vec(g.dim())).transpose();
    return pts;
}

}  // namespace

TEST_CASE("ratio rhs vanishes when numerator and denominator coincide") {
    const Schedule sch = Schedule::linear();
    const auto f = oracle_field_provider(shifted(2, 1.0), sch);
    Rng rng(3);
    for (double t : {0.1, 0.5, 0.9}) {
        const Vec x = rng.normal_vec(2);
        const auto [dx, dlogr] = ratio_rhs(f, f, f, x, t);
        CHECK(dlogr == 0.0);
        CHECK((dx - f.velocity(x, t).col(0)).norm() == 0.0);
    }
}

TEST_CASE("general path with sim == num matches the specialized s1 path") {
    const Schedule sch = Schedule::linear_floor(0.1);
    const auto num = oracle_field_provider(shifted(3, 1.0), sch);
    const auto den = oracle_field_provider(GaussianSpec::standard(3), sch);
    Rng rng(7);
    const Mat pts = sample_from(shifted(3, 1.0), 50, rng);
    const auto solver = oracle_solver(100);
    const auto s1 = estimate_log_ratio(pts, num, den, nullptr, SimulationVariant::s1, solver);
    const auto general =
        estimate_log_ratio(pts, num, den, &num, SimulationVariant::general, solver);
    REQUIRE((s1.log_ratio - general.log_ratio).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("rhs matches the time derivative of the analytic log-ratio") {
    const Schedule sch = Schedule::linear();
    const GaussianSpec q = shifted(2, 1.0);
    const GaussianSpec qp = GaussianSpec::standard(2);
    const auto num = oracle_field_provider(q, sch);
    const auto den = oracle_field_provider(qp, sch);

    auto analytic_log_r = [&](const Vec& x, double t) {
        const double a = alpha(sch, t);
        const double s2 = sch.sigma_sq(t);
        const Mat Cq = a * a * q.covariance + s2 * Mat::Identity(2, 2);
        const Mat Cp = a * a * qp.covariance + s2 * Mat::Identity(2, 2);
        return log_density(GaussianSpec(a * q.mean, Cq), x) -
               log_density(GaussianSpec(a * qp.mean, Cp), x);
    };

    // walk a short trajectory along the simulation field, then compare the rhs
    // against a centered difference of log r_t(x_t) in t
    Rng rng(17);
    Vec x = rng.normal_vec(2) + Vec::Ones(2);
    const double h = 1e-4;
    for (double t : {0.8, 0.5, 0.25}) {
        auto step_along = [&](Vec from, double t0, double dt) {
            const int micro = 32;
            const double hh = dt / micro;
            for (int k = 0; k < micro; ++k) {
                const double tk = t0 + k * hh;
                const Vec k1 = num.velocity(from, tk);
                const Vec k2 = num.velocity(from + 0.5 * hh * k1, tk + 0.5 * hh);
                const Vec k3 = num.velocity(from + 0.5 * hh * k2, tk + 0.5 * hh);
                const Vec k4 = num.velocity(from + hh * k3, tk + hh);
                from += (hh / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            return from;
        };
        const Vec x_plus = step_along(x, t, h);
        const Vec x_minus = step_along(x, t, -h);
        const double fd = (analytic_log_r(x_plus, t + h) - analytic_log_r(x_minus, t - h)) / (2.0 * h);
        const auto [dx, dlogr] = ratio_rhs(num, den, num, x, t);
        (void)dx;
        REQUIRE(std::abs(dlogr - fd) < 1e-5);
    }
}

TEST_CASE("shifted-Gaussian oracle ratios hit the analytic values") {
    const Schedule sch = Schedule::linear();
    const auto num = oracle_field_provider(shifted(2, 1.0), sch);
    const auto den = oracle_field_provider(GaussianSpec::standard(2), sch);
    Mat pts(2, 2);
    pts << 1.0, 1.0, 0.0, 0.0;
    const auto out = estimate_log_ratio(pts, num, den, nullptr, SimulationVariant::s1,
                                        oracle_solver());
    CHECK_THAT(out.log_ratio[0], Catch::Matchers::WithinAbs(1.0, 1e-3));
    CHECK_THAT(out.log_ratio[1], Catch::Matchers::WithinAbs(-1.0, 1e-3));
    CHECK(out.n_failed == 0);
}

TEST_CASE("identical numerator and denominator give zero log-ratio") {
    const Schedule sch = Schedule::linear();
    const auto f = oracle_field_provider(shifted(2, 1.0), sch);
    Rng rng(23);
    const Mat pts = sample_from(shifted(2, 1.0), 20, rng);
    const auto out = estimate_log_ratio(pts, f, f, nullptr, SimulationVariant::s1, oracle_solver());
    CHECK(out.log_ratio.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("naive likelihood of the standard normal at the origin") {
    const Schedule sch = Schedule::linear();
    const auto f = oracle_field_provider(GaussianSpec::standard(2), sch);
    SolverConfig solver;  // default clamped window
    const double ll = naive_log_likelihood(f, Vec::Zero(2), solver);
    CHECK_THAT(ll, Catch::Matchers::WithinAbs(-kLogTwoPi, 1e-3));
}

TEST_CASE("naive likelihood of a shifted Gaussian at its own mean") {
    const Schedule sch = Schedule::linear();
    const auto f = oracle_field_provider(shifted(2, 1.0), sch);
    const double ll = naive_log_likelihood(f, Vec::Ones(2), SolverConfig{});
    CHECK_THAT(ll, Catch::Matchers::WithinAbs(-kLogTwoPi, 1e-3));
}

TEST_CASE("naive ratio agrees with the single-simulation estimate") {
    const Schedule sch = Schedule::linear();
    const auto num = oracle_field_provider(shifted(2, 1.0), sch);
    const auto den = oracle_field_provider(GaussianSpec::standard(2), sch);
    Rng rng(29);
    const Mat pts = sample_from(shifted(2, 1.0), 100, rng);
    const auto solver = oracle_solver();
    const auto s1 = estimate_log_ratio(pts, num, den, nullptr, SimulationVariant::s1, solver);
    const auto nv = naive_log_ratio(pts, num, den, solver);
    REQUIRE((s1.log_ratio - nv.log_ratio).cwiseAbs().maxCoeff() < 2e-3);

    // naive of a density against itself
    const auto self = naive_log_ratio(pts, num, num, solver);
    CHECK(self.log_ratio.cwiseAbs().maxCoeff() < 2e-3);
}

TEST_CASE("s2 with the mixture field reproduces the analytic ratio") {
    const Schedule sch = Schedule::linear();
    const GaussianSpec q = shifted(2, 1.0);
    const GaussianSpec qp = GaussianSpec::standard(2);
    const auto num = oracle_field_provider(q, sch);
    const auto den = oracle_field_provider(qp, sch);
    const auto sim = mixture_oracle_field_provider({q, qp}, Vec::Constant(2, 0.5), sch);
    Rng rng(31);
    const Mat pts = sample_from(q, 200, rng);
    const auto out = estimate_log_ratio(pts, num, den, &sim, SimulationVariant::s2, oracle_solver());
    const Vec truth = analytic_log_ratio_batch(q, qp, pts.transpose());
    REQUIRE((out.log_ratio - truth).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("antisymmetry under swapping the conditions") {
    const Schedule sch = Schedule::linear_floor(0.1);
    const GaussianSpec a = shifted(2, 1.0);
    const GaussianSpec b = GaussianSpec::standard(2);
    const auto fa = oracle_field_provider(a, sch);
    const auto fb = oracle_field_provider(b, sch);
    Rng rng(37);
    const Mat pts = sample_from(a, 100, rng);
    const auto solver = oracle_solver();
    const auto fwd = estimate_log_ratio(pts, fa, fb, nullptr, SimulationVariant::s1, solver);
    const auto rev = estimate_log_ratio(pts, fb, fa, nullptr, SimulationVariant::s1, solver);
    REQUIRE((fwd.log_ratio + rev.log_ratio).cwiseAbs().maxCoeff() < 2e-3);
}

TEST_CASE("ratios telescope across three conditions") {
    const Schedule sch = Schedule::linear();
    const GaussianSpec ga = GaussianSpec::standard(2);
    const GaussianSpec gb = shifted(2, 1.0);
    const GaussianSpec gc = shifted(2, 2.0);
    const auto fa = oracle_field_provider(ga, sch);
    const auto fb = oracle_field_provider(gb, sch);
    const auto fc = oracle_field_provider(gc, sch);
    Rng rng(41);
    const Mat pts = sample_from(gb, 100, rng);
    const auto solver = oracle_solver();
    const auto ac = estimate_log_ratio(pts, fa, fc, nullptr, SimulationVariant::s1, solver);
    const auto ab = estimate_log_ratio(pts, fa, fb, nullptr, SimulationVariant::s1, solver);
    const auto bc = estimate_log_ratio(pts, fb, fc, nullptr, SimulationVariant::s1, solver);
    REQUIRE((ac.log_ratio - ab.log_ratio - bc.log_ratio).cwiseAbs().maxCoeff() < 3e-3);
}

TEST_CASE("solver convergence orders on the oracle ratio problem") {
    const Schedule sch = Schedule::linear();
    const GaussianSpec q = shifted(2, 1.0);
    const GaussianSpec qp = GaussianSpec::standard(2);
    const auto num = oracle_field_provider(q, sch);
    const auto den = oracle_field_provider(qp, sch);
    Rng rng(43);
    const Mat pts = sample_from(q, 64, rng);
    const Vec truth = analytic_log_ratio_batch(q, qp, pts.transpose());

    auto max_err = [&](OdeMethod m, int steps) {
        const auto out =
            estimate_log_ratio(pts, num, den, nullptr, SimulationVariant::s1, oracle_solver(steps, m));
        return (out.log_ratio - truth).cwiseAbs().maxCoeff();
    };

    const double e_euler = std::log2(max_err(OdeMethod::euler, 100) / max_err(OdeMethod::euler, 200));
    CHECK(e_euler > 0.5);
    CHECK(e_euler < 1.5);

    const double r10 = max_err(OdeMethod::rk4, 10);
    const double r20 = max_err(OdeMethod::rk4, 20);
    const double e_rk4 = std::log2(r10 / r20);
    CHECK(e_rk4 > 3.5);
    CHECK(e_rk4 < 4.5);
}

TEST_CASE("a diverging trajectory is isolated, not fatal") {
    // explosive velocity for points starting far out; benign contraction otherwise
    FieldProvider weird;
    weird.velocity = [](const Mat& X, double) {
        Mat u = -X;
        for (Index j = 0; j < X.cols(); ++j)
            if (X.col(j).norm() > 4.0) u.col(j) = 1e8 * X.col(j);
        return u;
    };
    weird.score = [](const Mat& X, double) { return Mat::Zero(X.rows(), X.cols()).eval(); };
    weird.divergence = [](const Mat& X, double) { return Vec::Zero(X.cols()).eval(); };

    Mat pts(3, 2);
    pts << 0.5, 0.5, 5.0, 5.0, -0.25, 0.1;
    const auto out =
        estimate_log_ratio(pts, weird, weird, nullptr, SimulationVariant::s1, oracle_solver(50));
    CHECK(out.n_failed == 1);
    CHECK(out.converged[0] == 1);
    CHECK(out.converged[1] == 0);
    CHECK(out.converged[2] == 1);
    CHECK(std::isnan(out.log_ratio[1]));
    CHECK(out.log_ratio[0] == 0.0);
    CHECK(out.log_ratio[2] == 0.0);
}

TEST_CASE("chunked evaluation is invariant to the thread count") {
    const Schedule sch = Schedule::linear();
    const auto num = oracle_field_provider(shifted(2, 1.0), sch);
    const auto den = oracle_field_provider(GaussianSpec::standard(2), sch);
    Rng rng(47);
    const Mat pts = sample_from(shifted(2, 1.0), 300, rng);
    EngineOptions one;
    one.threads = 1;
    one.chunk_size = 64;
    EngineOptions four;
    four.threads = 4;
    four.chunk_size = 64;
    const auto a = estimate_log_ratio(pts, num, den, nullptr, SimulationVariant::s1,
                                      oracle_solver(50), one);
    const auto b = estimate_log_ratio(pts, num, den, nullptr, SimulationVariant::s1,
                                      oracle_solver(50), four);
    REQUIRE((a.log_ratio - b.log_ratio).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("estimates on the shipped fixture match the committed golden values") {
    const std::string dir = RATIOFLOW_TEST_DATA_DIR;
    auto read_csv_column = [](const std::string& path, int col) {
        std::ifstream in(path);
        REQUIRE(in.good());
        std::string line;
        std::getline(in, line);  // header
        std::vector<double> vals;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::string cell;
            for (int c = 0; c <= col; ++c) std::getline(ss, cell, ',');
            vals.push_back(std::stod(cell));
        }
        return vals;
    };
    const auto x0 = read_csv_column(dir + std::string("/ratio_fixture.csv"), 0);
    const auto x1 = read_csv_column(dir + std::string("/ratio_fixture.csv"), 1);
    const auto golden = read_csv_column(dir + std::string("/ratio_fixture_golden.csv"), 1);
    REQUIRE(x0.size() == golden.size());

    Mat pts(static_cast<Index>(x0.size()), 2);
    for (std::size_t i = 0; i < x0.size(); ++i) {
        pts(static_cast<Index>(i), 0) = x0[i];
        pts(static_cast<Index>(i), 1) = x1[i];
    }
    const Schedule sch = Schedule::linear();
    const auto num = oracle_field_provider(shifted(2, 1.0), sch);
    const auto den = oracle_field_provider(GaussianSpec::standard(2), sch);
    const auto out = estimate_log_ratio(pts, num, den, nullptr, SimulationVariant::s1,
                                        oracle_solver());
    for (std::size_t i = 0; i < golden.size(); ++i)
        CHECK_THAT(out.log_ratio[static_cast<Index>(i)],
                   Catch::Matchers::WithinAbs(golden[i], 1e-3));
}

TEST_CASE("s2 and general variants require a simulation field") {
    const Schedule sch = Schedule::linear();
    const auto f = oracle_field_provider(GaussianSpec::standard(2), sch);
    Mat pts = Mat::Zero(1, 2);
    CHECK_THROWS_AS(estimate_log_ratio(pts, f, f, nullptr, SimulationVariant::s2, oracle_solver()),
                    ConfigError);
}
