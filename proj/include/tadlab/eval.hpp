#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tadlab/common.hpp"

namespace tadlab::eval {

// Midranks (average rank of tied groups, 1-based) of a value vector.
std::vector<double> midranks(const std::vector<double>& v);

// Area under the ROC curve in [0, 100] via the rank-sum form with midrank
// tie handling; equals pair counting P(anomaly > normal) + 0.5 P(equal).
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Pearson correlation of midranks; quiet NaN when either vector is constant.
double spearman_corr(const std::vector<double>& a, const std::vector<double>& b);

// ---------------------------------------------------------------------------
// Score table and rank statistics
// ---------------------------------------------------------------------------

// AUROC grid: one row per dataset/config cell, one column per method.
// Absent entries (failed or skipped runs) are NaN; rank statistics use only
// complete rows.
struct ScoreTable {
    std::vector<std::string> methods;
    std::vector<std::string> row_labels;
    std::vector<std::vector<double>> values;  // [row][method], NaN = absent

    std::size_t add_row(const std::string& label);
    void set(std::size_t row, const std::string& method, double value);
    double get(std::size_t row, const std::string& method) const;
    std::vector<std::size_t> complete_rows() const;
    void validate() const;  // entries in [0,100] or NaN

    std::string to_csv() const;
    static ScoreTable from_csv(const std::string& text);
};

struct RankDiagram {
    std::vector<std::string> methods;
    std::vector<double> avg_rank;  // 1 = best
    double friedman_stat = 0.0;
    double critical_difference = 0.0;
    double alpha = 0.05;
    std::size_t rows_used = 0;
    std::vector<std::pair<std::size_t, std::size_t>> significant_pairs;

    std::string to_json() const;
};

// Friedman ranks plus the Nemenyi critical difference
// CD = q_alpha * sqrt(k (k+1) / (6 N)); alpha must be 0.05 or 0.10
// (tabulated studentized-range constants, k up to 20).
RankDiagram rank_compare(const ScoreTable& table, double alpha = 0.05);

// ---------------------------------------------------------------------------
// Linear probe
// ---------------------------------------------------------------------------

struct ProbeConfig {
    double l2 = 1e-3;
    std::size_t epochs = 5000;
    double grad_tol = 1e-6;
};

// L2-regularized logistic regression, full-batch gradient descent with a
// curvature-bounded step, AUROC of the test probabilities. Features are
// standardized internally on probe-train.
double linear_probe(const Matrix& train_x, const std::vector<int>& train_y,
                    const Matrix& test_x, const std::vector<int>& test_y,
                    const ProbeConfig& config = {});

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

struct MethodSummary {
    std::string method;
    double mean = 0.0;
    double median = 0.0;
    std::size_t count = 0;
};

struct EvalReport {
    ScoreTable table;
    std::vector<MethodSummary> summaries;  // over present entries per method
    RankDiagram ranks;
    std::vector<std::string> plot_files;

    std::string to_json() const;
};

std::vector<MethodSummary> summarize(const ScoreTable& table);
EvalReport make_report(const ScoreTable& table, double alpha = 0.05);

}  // namespace tadlab::eval
