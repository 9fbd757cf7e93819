#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tadlab/common.hpp"
#include "tadlab/kdtree.hpp"
#include "tadlab/linalg.hpp"

namespace tadlab::detectors {

// Scores are oriented so that higher means more anomalous, for every
// detector in this module.
struct ScoreVector {
    std::vector<double> scores;

    std::size_t size() const { return scores.size(); }
    double operator[](std::size_t i) const { return scores[i]; }
};

std::string scores_to_csv(const ScoreVector& s);

enum class KnnAggregate { mean, kth };

struct NeighborOptions {
    KnnAggregate aggregate = KnnAggregate::mean;
    // One zero-distance train row is dropped per query, so train rows can be
    // scored against their own training set.
    bool leave_one_out = false;
    // Seeded subsample cap applied before fitting; 0 disables.
    std::size_t max_train_rows = 50000;
    std::uint64_t subsample_seed = 0;
};

ScoreVector knn(const Matrix& train, const Matrix& queries, std::size_t k,
                const NeighborOptions& opts = {});

// Standard local outlier factor. density_floored (optional) reports whether
// any reachability sum was clamped at 1e-12 (duplicate-heavy data).
ScoreVector lof(const Matrix& train, const Matrix& queries, std::size_t k,
                const NeighborOptions& opts = {}, bool* density_floored = nullptr);

// ---------------------------------------------------------------------------
// Isolation forest
// ---------------------------------------------------------------------------

// Average unsuccessful-search path length c(m) = 2 H(m-1) - 2 (m-1)/m with
// H(i) = ln i + Euler's constant; 0 for m < 2.
double average_path_length(std::size_t m);

struct IsolationTree {
    struct Node {
        std::size_t split_dim = 0;
        double split_val = 0.0;
        std::int64_t left = -1, right = -1;  // -1 marks a leaf
        std::size_t size = 0;                // rows reaching this node
    };
    std::vector<Node> nodes;

    double path_length(const double* q) const;
    std::size_t depth() const;
};

struct IsolationForest {
    std::vector<IsolationTree> trees;
    std::size_t subsample = 0;  // effective ψ
    double c_psi = 0.0;
    std::size_t d = 0;
};

IsolationForest fit_iforest(const Matrix& train, std::size_t n_trees, std::size_t subsample,
                            std::uint64_t seed);

// Same fit, but each tree grows from a caller-chosen row set; used to pin
// down seed semantics independently of the subsampling draw.
IsolationForest fit_iforest_on_rows(const Matrix& train,
                                    const std::vector<std::vector<std::size_t>>& tree_rows,
                                    std::uint64_t seed);

ScoreVector score_iforest(const IsolationForest& forest, const Matrix& queries);

ScoreVector iforest(const Matrix& train, const Matrix& queries, std::size_t n_trees = 100,
                    std::size_t subsample = 256, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// One-class SVM (RBF kernel, SMO on the normalized dual)
// ---------------------------------------------------------------------------

// gamma <= 0 selects the data-driven width 1/(d * var(train)).
constexpr double kGammaScale = 0.0;

double rbf_gamma_scale(const Matrix& train);

struct OcsvmModel {
    Matrix support;                 // train rows with alpha > 0
    std::vector<double> alpha;      // matching dual weights, sum = 1
    double rho = 0.0;
    double gamma = 0.0;
    double nu = 0.0;
    std::size_t iterations = 0;
    double gap = 0.0;               // KKT gap at termination
};

OcsvmModel fit_ocsvm(const Matrix& train, double nu, double gamma = kGammaScale,
                     double tol = 1e-3, std::size_t max_iter = 0);

// score = rho - sum_i alpha_i k(x_i, q); positive outside the boundary.
ScoreVector score_ocsvm(const OcsvmModel& model, const Matrix& queries);

ScoreVector ocsvm(const Matrix& train, const Matrix& queries, double nu = 0.5,
                  double gamma = kGammaScale);

// ---------------------------------------------------------------------------
// Residual-norm detector
// ---------------------------------------------------------------------------

// score = norm of the query projected onto the eigenvectors of the
// ceil(fraction * d) smallest eigenvalues of train's second-moment matrix.
ScoreVector residual_norm(const Matrix& train, const Matrix& queries,
                          double keep_smallest_fraction);

// ---------------------------------------------------------------------------
// Uniform fit/score facade
// ---------------------------------------------------------------------------

enum class DetectorKind { knn, lof, iforest, ocsvm, residual_norm };

std::string kind_name(DetectorKind k);
DetectorKind kind_from_name(const std::string& name);

struct DetectorConfig {
    DetectorKind kind = DetectorKind::knn;
    std::size_t k = 5;                  // knn/lof
    NeighborOptions neighbors;          // knn/lof
    std::size_t n_trees = 100;          // iforest
    std::size_t subsample = 256;        // iforest
    std::uint64_t seed = 0;             // iforest
    double nu = 0.5;                    // ocsvm
    double gamma = kGammaScale;         // ocsvm
    double fraction = 0.5;              // residual_norm
};

struct DetectorModel {
    DetectorConfig config;
    Matrix train;                       // knn/lof fitted data (post subsample)
    IsolationForest forest;             // iforest
    OcsvmModel svm;                     // ocsvm
    linalg::PrincipalBasis basis;       // residual_norm
};

DetectorModel fit(const DetectorConfig& config, const Matrix& train);
ScoreVector score(const DetectorModel& model, const Matrix& queries);

void save_model(const DetectorModel& model, const std::string& path);
DetectorModel load_model(const std::string& path);

}  // namespace tadlab::detectors
