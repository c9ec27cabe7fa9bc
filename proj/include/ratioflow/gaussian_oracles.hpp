#pragma once

#include "ratioflow/common.hpp"
#include "ratioflow/fields.hpp"
#include "ratioflow/schedules.hpp"

#include <cmath>
#include <memory>
#include <utility>
#include <vector>

namespace ratioflow {

inline constexpr double kLogTwoPi = 1.8378770664093454836;

/// Mean + SPD covariance. Factorized once at construction; a 1e-12 jitter is
/// added if the plain Cholesky fails.
struct GaussianSpec {
    Vec mean;
    Mat covariance;

    GaussianSpec(Vec mu, Mat cov) : mean(std::move(mu)), covariance(std::move(cov)) {
        if (covariance.rows() != covariance.cols() || covariance.rows() != mean.size())
            throw ConfigError("GaussianSpec: covariance must be d x d matching the mean");
        if (!covariance.isApprox(covariance.transpose(), 1e-12))
            throw ConfigError("GaussianSpec: covariance must be symmetric");
        Eigen::LLT<Mat> llt(covariance);
        if (llt.info() != Eigen::Success) {
            llt.compute(covariance + 1e-12 * Mat::Identity(covariance.rows(), covariance.cols()));
            if (llt.info() != Eigen::Success)
                throw ConfigError("GaussianSpec: covariance is not positive definite");
        }
        chol_ = llt;
    }

    static GaussianSpec isotropic(Vec mu, double variance = 1.0) {
        const Index d = mu.size();
        return GaussianSpec(std::move(mu), variance * Mat::Identity(d, d));
    }

    static GaussianSpec standard(Index d) { return isotropic(Vec::Zero(d)); }

    Index dim() const { return mean.size(); }
    const Eigen::LLT<Mat>& chol() const { return chol_; }

    double log_det_covariance() const {
        return 2.0 * chol_.matrixL().toDenseMatrix().diagonal().array().log().sum();
    }

private:
    Eigen::LLT<Mat> chol_;
};

inline Vec log_density_batch(const GaussianSpec& g, const Mat& X) {
    if (X.rows() != g.dim()) throw ConfigError("log_density: dimension mismatch");
    const Mat centered = X.colwise() - g.mean;
    const Mat solved = g.chol().solve(centered);
    const double c = -0.5 * (g.dim() * kLogTwoPi + g.log_det_covariance());
    return (-0.5 * (centered.array() * solved.array()).colwise().sum()).transpose().matrix() +
           Vec::Constant(X.cols(), c);
}

inline double log_density(const GaussianSpec& g, const Vec& x) {
    return log_density_batch(g, x)[0];
}

inline double analytic_log_ratio(const GaussianSpec& q, const GaussianSpec& q2, const Vec& x) {
    if (q.dim() != q2.dim()) throw ConfigError("analytic_log_ratio: dimension mismatch");
    return log_density(q, x) - log_density(q2, x);
}

inline Vec analytic_log_ratio_batch(const GaussianSpec& q, const GaussianSpec& q2, const Mat& X) {
    if (q.dim() != q2.dim()) throw ConfigError("analytic_log_ratio: dimension mismatch");
    return log_density_batch(q, X) - log_density_batch(q2, X);
}

/// Time-marginal N(m_t, C_t) of Gaussian data transported along a schedule:
/// m_t = alpha_t mu, C_t = alpha_t^2 Sigma + sigma_t^2 I. Built from
/// sigma_t^2 and its derivative only, so it is regular on all of [0, 1].
struct MarginalGaussian {
    double t;
    double a;      // alpha_t
    double ad;     // alpha_dot_t
    double s2;     // sigma_t^2
    double ssd;    // sigma_t sigma_dot_t
    Vec m;
    Mat C;
    Eigen::LLT<Mat> chol;

    MarginalGaussian(const GaussianSpec& g, const Schedule& sched, double t_in) : t(t_in) {
        a = alpha(sched, t);
        ad = alpha_dot(sched, t);
        s2 = sched.sigma_sq(t);
        ssd = sched.sigma_sigma_dot(t);
        m = a * g.mean;
        C = a * a * g.covariance + s2 * Mat::Identity(g.dim(), g.dim());
        chol.compute(C);
        if (chol.info() != Eigen::Success) {
            chol.compute(C + 1e-12 * Mat::Identity(g.dim(), g.dim()));
            if (chol.info() != Eigen::Success)
                throw std::domain_error("marginal covariance is singular at t=" + std::to_string(t));
        }
    }
};

inline Mat marginal_score_batch(const GaussianSpec& g, const Schedule& s, const Mat& X, double t) {
    MarginalGaussian mg(g, s, t);
    return -mg.chol.solve(X.colwise() - mg.m);
}

inline Vec marginal_score(const GaussianSpec& g, const Schedule& s, const Vec& x, double t) {
    return marginal_score_batch(g, s, x, t);
}

/// E[x1 | x_t] = mu + alpha Sigma C_t^{-1} (x - m_t)
inline Mat marginal_posterior_mean_batch(const GaussianSpec& g, const Schedule& s, const Mat& X,
                                         double t) {
    MarginalGaussian mg(g, s, t);
    const Mat solved = mg.chol.solve(X.colwise() - mg.m);
    return (mg.a * (g.covariance * solved)).colwise() + g.mean;
}

inline Vec marginal_posterior_mean(const GaussianSpec& g, const Schedule& s, const Vec& x,
                                   double t) {
    return marginal_posterior_mean_batch(g, s, x, t);
}

/// Marginal velocity in covariance-derivative form,
///   u(x, t) = m_dot + (alpha alpha_dot Sigma + sigma sigma_dot I) C_t^{-1} (x - m_t),
/// which equals velocity_from_posterior_mean(s, x, E[x1|x_t], t) wherever
/// sigma_t > 0 and stays finite at the endpoints.
inline Mat marginal_velocity_batch(const GaussianSpec& g, const Schedule& s, const Mat& X,
                                   double t) {
    MarginalGaussian mg(g, s, t);
    const Mat solved = mg.chol.solve(X.colwise() - mg.m);
    Mat u = mg.a * mg.ad * (g.covariance * solved) + mg.ssd * solved;
    u.colwise() += mg.ad * g.mean;
    return u;
}

inline Vec marginal_velocity(const GaussianSpec& g, const Schedule& s, const Vec& x, double t) {
    return marginal_velocity_batch(g, s, x, t);
}

/// div u(x, t) = alpha alpha_dot tr(Sigma C^{-1}) + sigma sigma_dot tr(C^{-1});
/// the velocity is affine in x, so the divergence is x-independent.
inline double marginal_divergence(const GaussianSpec& g, const Schedule& s, double t) {
    MarginalGaussian mg(g, s, t);
    const Mat cinv_sigma = mg.chol.solve(g.covariance);
    const Mat cinv = mg.chol.solve(Mat::Identity(g.dim(), g.dim()));
    return mg.a * mg.ad * cinv_sigma.trace() + mg.ssd * cinv.trace();
}

/// The law the oracle flow actually reaches at t = 1: N(mu, Sigma + sigma_1^2 I).
/// Equals the data law for schedules with sigma_1 = 0; with a sigma floor the
/// terminal marginal is the smoothed one, and ratio estimates made along the
/// flow converge to the ratio of these terminal laws.
inline GaussianSpec terminal_marginal_spec(const GaussianSpec& g, const Schedule& s) {
    const double a = alpha(s, 1.0);
    return GaussianSpec(a * g.mean,
                        a * a * g.covariance +
                            s.sigma_sq(1.0) * Mat::Identity(g.dim(), g.dim()));
}

inline FieldProvider oracle_field_provider(const GaussianSpec& g, const Schedule& s) {
    auto gp = std::make_shared<const GaussianSpec>(g);
    FieldProvider f;
    f.velocity = [gp, s](const Mat& X, double t) { return marginal_velocity_batch(*gp, s, X, t); };
    f.score = [gp, s](const Mat& X, double t) { return marginal_score_batch(*gp, s, X, t); };
    f.divergence = [gp, s](const Mat& X, double t) {
        return Vec::Constant(X.cols(), marginal_divergence(*gp, s, t)).eval();
    };
    return f;
}

/// Fields of a finite Gaussian mixture transported along the schedule. Each
/// component satisfies the continuity equation with its own affine field, so
/// the mixture field is the responsibility-weighted combination
///   u = sum_k r_k u_k,  score = sum_k r_k s_k,
///   div u = sum_k r_k (div u_k + (s_k - score)^T u_k).
/// At t = 0 every component is N(0, I), matching the shared prior.
class MixtureOracle {
public:
    MixtureOracle(std::vector<GaussianSpec> components, Vec weights, Schedule sched)
        : components_(std::move(components)), weights_(std::move(weights)), sched_(sched) {
        if (components_.empty()) throw ConfigError("mixture needs at least one component");
        if (weights_.size() != static_cast<Index>(components_.size()))
            throw ConfigError("mixture weight count mismatch");
        if ((weights_.array() <= 0.0).any()) throw ConfigError("mixture weights must be positive");
        weights_ /= weights_.sum();
    }

    struct Eval {
        Mat velocity;
        Mat score;
        Vec divergence;
    };

    Eval eval(const Mat& X, double t) const {
        const Index K = static_cast<Index>(components_.size());
        const Index B = X.cols();
        const Index d = X.rows();

        Mat log_resp(K, B);
        std::vector<Mat> scores(static_cast<std::size_t>(K));
        std::vector<Mat> vels(static_cast<std::size_t>(K));
        Vec divs(K);
        for (Index k = 0; k < K; ++k) {
            const auto& g = components_[static_cast<std::size_t>(k)];
            MarginalGaussian mg(g, sched_, t);
            const Mat centered = X.colwise() - mg.m;
            const Mat solved = mg.chol.solve(centered);
            const double logdet = 2.0 * mg.chol.matrixL().toDenseMatrix().diagonal().array().log().sum();
            log_resp.row(k) =
                (-0.5 * (centered.array() * solved.array()).colwise().sum()).matrix() +
                RowVec::Constant(B, std::log(weights_[k]) - 0.5 * (d * kLogTwoPi + logdet));
            scores[static_cast<std::size_t>(k)] = -solved;
            Mat u = mg.a * mg.ad * (g.covariance * solved) + mg.ssd * solved;
            u.colwise() += mg.ad * g.mean;
            vels[static_cast<std::size_t>(k)] = std::move(u);
            divs[k] = marginal_divergence(g, sched_, t);
        }

        // responsibilities via log-sum-exp
        const RowVec mx = log_resp.colwise().maxCoeff();
        Mat resp = (log_resp.rowwise() - mx).array().exp();
        const RowVec norm = resp.colwise().sum();
        resp.array().rowwise() /= norm.array();

        Eval out;
        out.velocity = Mat::Zero(d, B);
        out.score = Mat::Zero(d, B);
        for (Index k = 0; k < K; ++k) {
            out.velocity +=
                (vels[static_cast<std::size_t>(k)].array().rowwise() * resp.row(k).array())
                    .matrix();
            out.score +=
                (scores[static_cast<std::size_t>(k)].array().rowwise() * resp.row(k).array())
                    .matrix();
        }
        out.divergence = Vec::Zero(B);
        for (Index k = 0; k < K; ++k) {
            const Mat& sk = scores[static_cast<std::size_t>(k)];
            const Mat& uk = vels[static_cast<std::size_t>(k)];
            const RowVec dot = ((sk - out.score).array() * uk.array()).colwise().sum();
            out.divergence +=
                (resp.row(k).array() * (dot.array() + divs[k])).matrix().transpose();
        }
        return out;
    }

private:
    std::vector<GaussianSpec> components_;
    Vec weights_;
    Schedule sched_;
};

inline FieldProvider mixture_oracle_field_provider(std::vector<GaussianSpec> components,
                                                   Vec weights, const Schedule& s) {
    auto mix = std::make_shared<const MixtureOracle>(std::move(components), std::move(weights), s);
    FieldProvider f;
    f.velocity = [mix](const Mat& X, double t) { return mix->eval(X, t).velocity; };
    f.score = [mix](const Mat& X, double t) { return mix->eval(X, t).score; };
    f.divergence = [mix](const Mat& X, double t) { return mix->eval(X, t).divergence; };
    return f;
}

/// 2x2 correlated blocks along the diagonal: 1 on the diagonal, rho off it.
inline Mat block_correlated_covariance(int d, double rho = 0.8) {
    if (d <= 0 || d % 2 != 0) throw ConfigError("block covariance needs even positive d");
    Mat cov = Mat::Identity(d, d);
    for (int b = 0; b < d / 2; ++b) {
        cov(2 * b, 2 * b + 1) = rho;
        cov(2 * b + 1, 2 * b) = rho;
    }
    return cov;
}

/// Closed-form mutual information between the odd and even coordinate blocks
/// of N(0, Sigma) with 2x2 blocks [[1, rho], [rho, 1]]:
///   I = (1/2) log(1 / |Sigma|), |Sigma| = (1 - rho^2)^{d/2}.
inline double mi_ground_truth(int d, double rho = 0.8) {
    if (d <= 0 || d % 2 != 0) throw ConfigError("mi_ground_truth requires even positive d");
    const double block_det = 1.0 - rho * rho;
    return -0.25 * d * std::log(block_det);
}

}  // namespace ratioflow
