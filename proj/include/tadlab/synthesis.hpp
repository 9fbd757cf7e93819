#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tadlab/common.hpp"
#include "tadlab/core.hpp"
#include "tadlab/rng.hpp"

namespace tadlab::synthesis {

// ============================================================================
// Gaussian mixture model
// ============================================================================

// Covariance eigenvalues are floored at this value after every M step, which
// keeps each component invertible on degenerate data.
constexpr double kCovarianceEigenFloor = 1e-6;

struct Gmm {
    std::size_t d = 0;
    std::vector<double> weights;      // K entries, nonnegative, sum 1
    Matrix means;                     // K x d
    std::vector<Matrix> covariances;  // K symmetric positive-definite d x d
    double log_likelihood = 0.0;      // training log-likelihood at convergence
    std::size_t floored_components = 0;  // components that needed eigenvalue flooring
    std::vector<double> loglik_trace;    // one entry per EM iteration of the winning K

    std::size_t k() const { return weights.size(); }
    bool fitted() const { return d > 0 && !weights.empty(); }
    void validate() const;  // throws ValidationError on invariant breach
};

// EM per candidate K (k-means++ seeding, stop when the log-likelihood gain
// falls below 1e-6 or after 200 iterations), then BIC selection across
// k_range with p = (K-1) + K*d + K*d*(d+1)/2 free parameters. A component
// that empties is reseeded once; emptying again raises NumericError.
// Requires n >= 2 * max(k_range).
Gmm fit_gmm(const Matrix& x, const std::vector<std::size_t>& k_range, std::uint64_t seed);

// n mixture draws; component by weight, then mean plus a covariance
// square-root transform of standard Gaussian noise.
Matrix sample_gmm(const Gmm& gmm, std::size_t n, Rng& rng);

// ============================================================================
// Synthetic anomalies
// ============================================================================

enum class AnomalyKind { kLocal, kCluster, kGlobal, kDependency };

AnomalyKind anomaly_kind_from_string(const std::string& name);
std::string to_string(AnomalyKind kind);

struct AnomalyParams {
    double alpha = 2.0;        // local: covariance scale
    double beta = 2.0;         // cluster: mean scale
    double delta = 0.01;       // global: uniform range scale
    const Gmm* gmm = nullptr;  // required by local and cluster
};

// local: GMM draws with every covariance scaled by alpha.
// cluster: GMM draws with every mean scaled by beta.
// global: per column i.i.d. Uniform[delta*min(col), delta*max(col)].
// dependency: per column independent Gaussian-KDE resampling of the train
// marginal (uniform train value plus N(0, h^2), Silverman bandwidth h), which
// keeps marginals while destroying cross-column structure.
Matrix synthesize_anomalies(AnomalyKind kind, const Matrix& x_train, std::size_t n,
                            const AnomalyParams& params, std::uint64_t seed);

// Provenance JSON: kind, sample count, parameters, seed, and an FNV-1a
// checksum of the source rows.
std::string generation_manifest(AnomalyKind kind, const Matrix& x_train, std::size_t n,
                                const AnomalyParams& params, std::uint64_t seed);

// ============================================================================
// Random-forest feature importance
// ============================================================================

struct ForestConfig {
    std::size_t n_trees = 100;
    std::size_t max_depth = 8;
    std::size_t features_per_split = 0;  // 0 means ceil(sqrt(d))
};

struct ImportanceRanking {
    std::vector<double> importance;  // per feature, >= 0, sums to 1
    std::vector<std::size_t> order;  // feature indices, descending importance

    void validate() const;
};

// Gini impurity decrease accumulated over bagged randomized trees (bootstrap
// rows, random feature subset per node, midpoint thresholds), normalized to
// sum 1. Labels must be 0/1 with both classes present. When no tree finds a
// split the mass falls back to uniform.
ImportanceRanking forest_importance(const Matrix& x, const std::vector<int>& y,
                                    const ForestConfig& config, std::uint64_t seed);

// ============================================================================
// Corruption pipelines
// ============================================================================

enum class CorruptionKind {
    kAddUninformative,
    kMissingValues,
    kRemoveImportant,
    kSelectImportant,
};

CorruptionKind corruption_kind_from_string(const std::string& name);
std::string to_string(CorruptionKind kind);

// Train/val/test feature blocks that move through a corruption together.
struct DataSplits {
    Matrix train;
    Matrix val;
    Matrix test;
};

// add_uninformative: append floor(proportion*d) columns, each drawn i.i.d.
//   from N(mean, (IQR/1.349)^2) of a randomly chosen template column, with
//   statistics taken from train only; the same templates apply to all splits.
// missing_values: blank floor(proportion*entries) cells in train and test
//   independently (val untouched), then impute every blank with the mean of
//   the column's observed train entries.
// remove_important: drop the floor(proportion*d) least important columns;
//   survivors keep their original order.
// select_important: keep the ceil(proportion*d) most important columns,
//   reordered by descending importance.
// remove/select require `ranking`; proportion must lie in (0, 1]; a result
// with zero columns raises ContractError.
DataSplits corrupt(CorruptionKind kind, const DataSplits& splits, double proportion,
                   const ImportanceRanking* ranking, std::uint64_t seed);

// ============================================================================
// Two-dimensional toys
// ============================================================================

// noise feeds the Gaussian jitter of the curve-like families (curve, flower,
// moons, spiral); blob and ring shapes fix their own spread so their
// pinned geometry (ring radii in [0.8, 1.2]*R) survives any noise setting.
struct ToySpec {
    std::string name;           // one of toy_names()
    std::size_t n_normal = 500;
    std::size_t n_anomaly = 0;  // 0 means max(1, n_normal / 20)
    double noise = 0.05;
    std::uint64_t seed = 0;
};

const std::vector<std::string>& toy_names();

core::Dataset make_toy(const ToySpec& spec);

std::string toy_manifest(const ToySpec& spec, const core::Dataset& ds);

}  // namespace tadlab::synthesis
