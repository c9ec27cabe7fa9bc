#pragma once

#include "ratioflow/common.hpp"
#include "ratioflow/gaussian_oracles.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace ratioflow {

struct ConditionVariable {
    std::string name;
    int cardinality = 0;  // valid data labels are 0 .. cardinality-1
};

/// Categorical conditioning vocabulary. Each variable reserves one extra
/// token index (== cardinality) for the empty condition.
struct ConditionSpec {
    std::vector<ConditionVariable> variables;

    std::size_t n_variables() const { return variables.size(); }

    int null_index(std::size_t var) const { return variables[var].cardinality; }

    void validate() const {
        for (const auto& v : variables) {
            if (v.name.empty()) throw ConfigError("condition variable with empty name");
            if (v.cardinality < 1) throw ConfigError("condition variable '" + v.name +
                                                     "' needs cardinality >= 1");
        }
        for (std::size_t i = 0; i < variables.size(); ++i)
            for (std::size_t j = i + 1; j < variables.size(); ++j)
                if (variables[i].name == variables[j].name)
                    throw ConfigError("duplicate condition variable '" + variables[i].name + "'");
    }

    /// Accepts the null token; rejects anything past it.
    void validate_labels(const std::vector<int>& labels, bool allow_null = true) const {
        if (labels.size() != variables.size())
            throw ConfigError("label count does not match condition variables");
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const int hi = allow_null ? variables[i].cardinality : variables[i].cardinality - 1;
            if (labels[i] < 0 || labels[i] > hi)
                throw ConfigError("label " + std::to_string(labels[i]) + " out of range for '" +
                                  variables[i].name + "' (cardinality " +
                                  std::to_string(variables[i].cardinality) + ")");
        }
    }

    std::vector<int> all_null() const {
        std::vector<int> l(variables.size());
        for (std::size_t i = 0; i < variables.size(); ++i) l[i] = null_index(i);
        return l;
    }
};

struct LabeledDataset {
    Mat points;                               // N x d
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> labels;  // N x V
    std::vector<std::string> condition_names;

    Index size() const { return points.rows(); }
    Index dim() const { return points.cols(); }
    Index n_condition_vars() const { return labels.cols(); }

    void validate() const {
        if (points.rows() != labels.rows()) throw ConfigError("dataset points/labels row mismatch");
        if (static_cast<Index>(condition_names.size()) != labels.cols())
            throw ConfigError("dataset label column names mismatch");
        if (!points.allFinite()) throw ConfigError("dataset contains non-finite points");
        if ((labels.array() < 0).any()) throw ConfigError("dataset labels must be non-negative");
    }

    /// Condition vocabulary implied by the data: cardinality = max label + 1.
    ConditionSpec infer_condition_spec() const {
        ConditionSpec spec;
        for (Index v = 0; v < labels.cols(); ++v)
            spec.variables.push_back(
                ConditionVariable{condition_names[static_cast<std::size_t>(v)],
                                  labels.col(v).maxCoeff() + 1});
        spec.validate();
        return spec;
    }
};

/// Equal sample counts from q = N(s 1, I) labeled 1 and q' = N(0, I) labeled 0.
inline LabeledDataset gen_shifted_gaussian(int d, double s, Index n_per_condition, Rng& rng) {
    if (d < 1 || n_per_condition < 1) throw ConfigError("gen_shifted_gaussian: bad d or n");
    LabeledDataset ds;
    ds.points.resize(2 * n_per_condition, d);
    ds.labels.resize(2 * n_per_condition, 1);
    ds.condition_names = {"cond"};
    for (Index i = 0; i < n_per_condition; ++i) {
        ds.points.row(i) = (Vec::Constant(d, s) + rng.normal_vec(d)).transpose();
        ds.labels(i, 0) = 1;
    }
    for (Index i = 0; i < n_per_condition; ++i) {
        ds.points.row(n_per_condition + i) = rng.normal_vec(d).transpose();
        ds.labels(n_per_condition + i, 0) = 0;
    }
    return ds;
}

/// Label 1 ~ N(0, Sigma) with correlated 2x2 blocks (sampled per block as
/// z2 = rho z1 + sqrt(1-rho^2) w); label 0 ~ N(0, I).
inline LabeledDataset gen_block_correlated(int d, Index n_per_condition, Rng& rng,
                                           double rho = 0.8) {
    if (d < 2 || d % 2 != 0) throw ConfigError("gen_block_correlated: d must be even and >= 2");
    LabeledDataset ds;
    ds.points.resize(2 * n_per_condition, d);
    ds.labels.resize(2 * n_per_condition, 1);
    ds.condition_names = {"cond"};
    const double cross = std::sqrt(1.0 - rho * rho);
    for (Index i = 0; i < n_per_condition; ++i) {
        for (int b = 0; b < d / 2; ++b) {
            const double z1 = rng.normal();
            const double z2 = rho * z1 + cross * rng.normal();
            ds.points(i, 2 * b) = z1;
            ds.points(i, 2 * b + 1) = z2;
        }
        ds.labels(i, 0) = 1;
    }
    for (Index i = 0; i < n_per_condition; ++i) {
        ds.points.row(n_per_condition + i) = rng.normal_vec(d).transpose();
        ds.labels(n_per_condition + i, 0) = 0;
    }
    return ds;
}

inline std::vector<Vec> default_da_cluster_means() {
    std::vector<Vec> m(4, Vec(2));
    m[0] << -3.0, -3.0;
    m[1] << -3.0, 3.0;
    m[2] << 3.0, -3.0;
    m[3] << 3.0, 3.0;
    return m;
}

struct DaMixture {
    LabeledDataset data;          // condition column "treatment"
    std::vector<int> clusters;    // ground-truth component per row (0-based)
};

/// Four unit-variance clusters; each point draws a binary treatment label with
/// its cluster's probability from {0.5, 0.5+a, 0.5-a, 0.5}.
inline DaMixture gen_da_mixture(double a, Index n_per_cluster, Rng& rng,
                                const std::vector<Vec>& means = default_da_cluster_means()) {
    if (!(a >= 0.0 && a <= 0.5)) throw ConfigError("gen_da_mixture: a must be in [0, 0.5]");
    if (means.size() != 4) throw ConfigError("gen_da_mixture: need 4 cluster means");
    const double pis[4] = {0.5, 0.5 + a, 0.5 - a, 0.5};

    DaMixture out;
    const Index n = 4 * n_per_cluster;
    const Index d = means[0].size();
    out.data.points.resize(n, d);
    out.data.labels.resize(n, 1);
    out.data.condition_names = {"treatment"};
    out.clusters.resize(static_cast<std::size_t>(n));
    Index row = 0;
    for (int k = 0; k < 4; ++k) {
        for (Index i = 0; i < n_per_cluster; ++i, ++row) {
            out.data.points.row(row) = (means[static_cast<std::size_t>(k)] + rng.normal_vec(d)).transpose();
            out.data.labels(row, 0) = rng.uniform() < pis[k] ? 1 : 0;
            out.clusters[static_cast<std::size_t>(row)] = k;
        }
    }
    return out;
}

// Dataset CSV: header "x0,...,x{d-1},<cond1>[,<cond2>...]"; floats with 17
// significant digits, label columns non-negative integers.

inline void write_dataset_csv(const std::string& path, const LabeledDataset& ds) {
    ds.validate();
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    for (Index c = 0; c < ds.dim(); ++c) out << "x" << c << ",";
    for (Index v = 0; v < ds.n_condition_vars(); ++v) {
        out << ds.condition_names[static_cast<std::size_t>(v)];
        out << (v + 1 < ds.n_condition_vars() ? "," : "");
    }
    out << "\n";
    char buf[64];
    for (Index i = 0; i < ds.size(); ++i) {
        for (Index c = 0; c < ds.dim(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", ds.points(i, c));
            out << buf << ",";
        }
        for (Index v = 0; v < ds.n_condition_vars(); ++v)
            out << ds.labels(i, v) << (v + 1 < ds.n_condition_vars() ? "," : "");
        out << "\n";
    }
    if (!out) throw ConfigError("failed writing '" + path + "'");
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
}

inline LabeledDataset read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open dataset '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("dataset '" + path + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_line(line);

    Index d = 0;
    while (d < static_cast<Index>(header.size()) &&
           header[static_cast<std::size_t>(d)] == "x" + std::to_string(d))
        ++d;
    if (d == 0) throw ConfigError("dataset header must start with x0,x1,...");
    if (d == static_cast<Index>(header.size()))
        throw ConfigError("dataset needs at least one condition column after x0..x" +
                          std::to_string(d - 1));

    LabeledDataset ds;
    ds.condition_names.assign(header.begin() + d, header.end());
    const Index V = static_cast<Index>(ds.condition_names.size());

    std::vector<double> coords;
    std::vector<int> labels;
    Index rows = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (static_cast<Index>(cells.size()) != d + V)
            throw ConfigError("dataset row " + std::to_string(rows + 1) + " has " +
                              std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(d + V));
        for (Index c = 0; c < d; ++c) {
            std::size_t pos = 0;
            const double v = std::stod(cells[static_cast<std::size_t>(c)], &pos);
            if (pos != cells[static_cast<std::size_t>(c)].size())
                throw ConfigError("bad float in dataset row " + std::to_string(rows + 1));
            coords.push_back(v);
        }
        for (Index v = 0; v < V; ++v) {
            std::size_t pos = 0;
            const long lv = std::stol(cells[static_cast<std::size_t>(d + v)], &pos);
            if (pos != cells[static_cast<std::size_t>(d + v)].size() || lv < 0)
                throw ConfigError("bad label in dataset row " + std::to_string(rows + 1));
            labels.push_back(static_cast<int>(lv));
        }
        ++rows;
    }
    ds.points.resize(rows, d);
    ds.labels.resize(rows, V);
    for (Index i = 0; i < rows; ++i) {
        for (Index c = 0; c < d; ++c) ds.points(i, c) = coords[static_cast<std::size_t>(i * d + c)];
        for (Index v = 0; v < V; ++v) ds.labels(i, v) = labels[static_cast<std::size_t>(i * V + v)];
    }
    ds.validate();
    return ds;
}

}  // namespace ratioflow
