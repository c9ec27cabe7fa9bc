#pragma once

#include "ratioflow/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

namespace ratioflow {

inline double metric_mse(const Vec& pred, const Vec& truth) {
    if (pred.size() != truth.size() || pred.size() == 0)
        throw ConfigError("metric_mse: size mismatch or empty input");
    return (pred - truth).squaredNorm() / static_cast<double>(pred.size());
}

inline double metric_mae(const Vec& pred, const Vec& truth) {
    if (pred.size() != truth.size() || pred.size() == 0)
        throw ConfigError("metric_mae: size mismatch or empty input");
    return (pred - truth).cwiseAbs().sum() / static_cast<double>(pred.size());
}

namespace detail {

/// Average ranks (1-based), ties get the mean of their rank range.
inline Vec average_ranks(const Vec& xs) {
    const Index n = xs.size();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index a, Index b) { return xs[a] < xs[b]; });
    Vec ranks(n);
    Index i = 0;
    while (i < n) {
        Index j = i;
        while (j + 1 < n && xs[order[static_cast<std::size_t>(j + 1)]] ==
                                xs[order[static_cast<std::size_t>(i)]])
            ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (Index k = i; k <= j; ++k) ranks[order[static_cast<std::size_t>(k)]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace detail

/// Spearman rank correlation with average ranks for ties.
inline double metric_spearman(const Vec& xs, const Vec& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw ConfigError("metric_spearman: need two equally sized vectors of length >= 2");
    const Vec rx = detail::average_ranks(xs);
    const Vec ry = detail::average_ranks(ys);
    const Vec cx = rx.array() - rx.mean();
    const Vec cy = ry.array() - ry.mean();
    const double denom = std::sqrt(cx.squaredNorm() * cy.squaredNorm());
    if (denom == 0.0) throw ConfigError("metric_spearman: constant input has no rank correlation");
    return cx.dot(cy) / denom;
}

/// Area under the precision-recall curve: thresholds at each distinct score
/// (descending), step interpolation sum_k (R_k - R_{k-1}) P_k.
inline double metric_auc_pr(const Vec& scores, const std::vector<int>& labels) {
    if (scores.size() != static_cast<Index>(labels.size()) || scores.size() == 0)
        throw ConfigError("metric_auc_pr: size mismatch or empty input");
    Index n_pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw ConfigError("metric_auc_pr: labels must be 0/1");
        n_pos += l;
    }
    if (n_pos == 0 || n_pos == scores.size())
        throw ConfigError("metric_auc_pr: both classes must be present");

    std::vector<Index> order(static_cast<std::size_t>(scores.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(),
              [&](Index a, Index b) { return scores[a] > scores[b]; });

    double auc = 0.0;
    double prev_recall = 0.0;
    Index tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        // absorb the whole tie group before emitting an operating point
        const double thr = scores[order[i]];
        while (i < order.size() && scores[order[i]] == thr) {
            if (labels[static_cast<std::size_t>(order[i])] == 1)
                ++tp;
            else
                ++fp;
            ++i;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        auc += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return auc;
}

struct NarResult {
    double value = 0.0;
    bool finite_denominator = true;
};

/// Mean |log r| over clusters {2, 3} divided by mean |log r| over {1, 4}
/// (1-based cluster ids as produced by the mixture generator, 0-based here).
inline NarResult metric_nar(const Vec& ratios, const std::vector<int>& cluster_ids) {
    if (ratios.size() != static_cast<Index>(cluster_ids.size()) || ratios.size() == 0)
        throw ConfigError("metric_nar: size mismatch or empty input");
    double da_sum = 0.0, bg_sum = 0.0;
    Index da_n = 0, bg_n = 0;
    for (Index i = 0; i < ratios.size(); ++i) {
        const int c = cluster_ids[static_cast<std::size_t>(i)];
        if (c == 1 || c == 2) {
            da_sum += std::abs(ratios[i]);
            ++da_n;
        } else if (c == 0 || c == 3) {
            bg_sum += std::abs(ratios[i]);
            ++bg_n;
        } else {
            throw ConfigError("metric_nar: cluster ids must be 0..3");
        }
    }
    if (da_n == 0 || bg_n == 0) throw ConfigError("metric_nar: a cluster group is empty");
    const double denom = bg_sum / static_cast<double>(bg_n);
    if (denom == 0.0)
        return NarResult{std::numeric_limits<double>::infinity(), false};
    return NarResult{(da_sum / static_cast<double>(da_n)) / denom, true};
}

/// Proportion of differentially-abundant points whose ratio sign matches the
/// true log-odds: positive in cluster 2, negative in cluster 3 (1-based).
/// Undefined at a == 0.
inline std::optional<double> metric_csp(const Vec& ratios, const std::vector<int>& cluster_ids,
                                        double a) {
    if (ratios.size() != static_cast<Index>(cluster_ids.size()) || ratios.size() == 0)
        throw ConfigError("metric_csp: size mismatch or empty input");
    if (a == 0.0) return std::nullopt;
    Index correct = 0, total = 0;
    for (Index i = 0; i < ratios.size(); ++i) {
        const int c = cluster_ids[static_cast<std::size_t>(i)];
        if (c == 1) {
            ++total;
            if (ratios[i] > 0.0) ++correct;
        } else if (c == 2) {
            ++total;
            if (ratios[i] < 0.0) ++correct;
        }
    }
    if (total == 0) throw ConfigError("metric_csp: no points in the DA clusters");
    return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace ratioflow
