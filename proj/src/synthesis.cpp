#include "tadlab/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "tadlab/io.hpp"
#include "tadlab/linalg.hpp"

namespace tadlab::synthesis {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

// Quantile with linear interpolation at h = (n-1)p over a sorted vector.
double quantile_sorted(const std::vector<double>& v, double p) {
    if (v.empty()) throw ContractError("quantile of empty vector");
    if (v.size() == 1) return v[0];
    const double h = static_cast<double>(v.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(h);
    if (lo + 1 >= v.size()) return v.back();
    const double frac = h - static_cast<double>(lo);
    return v[lo] + frac * (v[lo + 1] - v[lo]);
}

double column_iqr(const Matrix& x, std::size_t j) {
    std::vector<double> col(x.rows);
    for (std::size_t i = 0; i < x.rows; ++i) col[i] = x(i, j);
    std::sort(col.begin(), col.end());
    return quantile_sorted(col, 0.75) - quantile_sorted(col, 0.25);
}

double column_mean(const Matrix& x, std::size_t j) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) s += x(i, j);
    return s / static_cast<double>(x.rows);
}

Matrix take_cols(const Matrix& x, const std::vector<std::size_t>& cols) {
    Matrix out(x.rows, cols.size());
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t c = 0; c < cols.size(); ++c) out(i, c) = x(i, cols[c]);
    return out;
}

std::uint64_t matrix_checksum(const Matrix& x) {
    return io::fnv1a(x.data.data(), x.data.size() * sizeof(double));
}

// ============================================================================
// GMM internals
// ============================================================================

struct Decomp {
    Matrix vecs;
    std::vector<double> vals;
    double logdet = 0.0;
};

// Floors eigenvalues in place and reports whether any were below the floor.
bool floor_covariance(Matrix& cov) {
    auto eig = linalg::sym_eig(cov);
    bool floored = false;
    for (double& v : eig.values)
        if (v < kCovarianceEigenFloor) {
            v = kCovarianceEigenFloor;
            floored = true;
        }
    if (!floored) return false;
    const std::size_t d = cov.rows;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < d; ++t)
                s += eig.vectors(i, t) * eig.values[t] * eig.vectors(j, t);
            cov(i, j) = s;
            cov(j, i) = s;
        }
    return true;
}

Decomp decompose(const Matrix& cov) {
    Decomp dc;
    auto eig = linalg::sym_eig(cov);
    dc.vecs = std::move(eig.vectors);
    dc.vals = std::move(eig.values);
    for (double v : dc.vals) {
        if (v <= 0.0) throw NumericError("covariance not positive definite");
        dc.logdet += std::log(v);
    }
    return dc;
}

double log_density(const double* x, const double* mu, const Decomp& dc, std::size_t d) {
    double quad = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double y = 0.0;
        for (std::size_t i = 0; i < d; ++i) y += dc.vecs(i, j) * (x[i] - mu[i]);
        quad += y * y / dc.vals[j];
    }
    return -0.5 * (static_cast<double>(d) * kLogTwoPi + dc.logdet + quad);
}

Matrix mle_covariance(const Matrix& x) {
    const std::size_t n = x.rows, d = x.cols;
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += x(i, j);
    for (double& m : mean) m /= static_cast<double>(n);
    Matrix cov(d, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a) {
            const double da = x(i, a) - mean[a];
            for (std::size_t b = a; b < d; ++b) cov(a, b) += da * (x(i, b) - mean[b]);
        }
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a; b < d; ++b) {
            cov(a, b) /= static_cast<double>(n);
            cov(b, a) = cov(a, b);
        }
    return cov;
}

// k-means++ style seeding: each next center drawn proportional to squared
// distance from the nearest already-chosen center.
std::vector<std::size_t> seed_centers(const Matrix& x, std::size_t k, Rng& rng) {
    const std::size_t n = x.rows;
    std::vector<std::size_t> centers;
    centers.push_back(static_cast<std::size_t>(rng.below(n)));
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    while (centers.size() < k) {
        const double* c = x.row(centers.back());
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], sq_dist(x.row(i), c, x.cols));
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total <= 0.0) {
            pick = static_cast<std::size_t>(rng.below(n));
        } else {
            const double u = rng.uniform() * total;
            double cum = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                cum += d2[i];
                if (u < cum) {
                    pick = i;
                    break;
                }
            }
        }
        centers.push_back(pick);
    }
    return centers;
}

Gmm fit_single_k(const Matrix& x, std::size_t k, Rng& rng) {
    const std::size_t n = x.rows, d = x.cols;
    Gmm g;
    g.d = d;
    g.weights.assign(k, 1.0 / static_cast<double>(k));
    g.means = Matrix(k, d);
    Matrix base_cov = mle_covariance(x);
    if (floor_covariance(base_cov)) g.floored_components = k;
    const auto centers = seed_centers(x, k, rng);
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t j = 0; j < d; ++j) g.means(c, j) = x(centers[c], j);
    g.covariances.assign(k, base_cov);

    std::vector<Decomp> dcs(k);
    for (std::size_t c = 0; c < k; ++c) dcs[c] = decompose(g.covariances[c]);

    std::vector<double> resp(n * k);
    std::vector<bool> reseeded(k, false);
    double prev_ll = -std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < 200; ++iter) {
        // E step in log space with a per-row log-sum-exp.
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double lp =
                    std::log(g.weights[c]) + log_density(x.row(i), g.means.row(c), dcs[c], d);
                resp[i * k + c] = lp;
                mx = std::max(mx, lp);
            }
            double sum = 0.0;
            for (std::size_t c = 0; c < k; ++c) sum += std::exp(resp[i * k + c] - mx);
            const double lse = mx + std::log(sum);
            ll += lse;
            for (std::size_t c = 0; c < k; ++c) resp[i * k + c] = std::exp(resp[i * k + c] - lse);
        }
        if (!std::isfinite(ll)) throw NumericError("GMM log-likelihood non-finite");

        // A component with no responsibility mass gets one fresh start.
        bool restarted = false;
        for (std::size_t c = 0; c < k; ++c) {
            double nk = 0.0;
            for (std::size_t i = 0; i < n; ++i) nk += resp[i * k + c];
            if (nk > 1e-10 * static_cast<double>(n)) continue;
            if (reseeded[c])
                throw NumericError("GMM component emptied twice; reduce K or add data");
            reseeded[c] = true;
            restarted = true;
            const std::size_t pick = static_cast<std::size_t>(rng.below(n));
            for (std::size_t j = 0; j < d; ++j) g.means(c, j) = x(pick, j);
            g.covariances[c] = base_cov;
            dcs[c] = decompose(base_cov);
            double wsum = 0.0;
            g.weights[c] = 1.0 / static_cast<double>(k);
            for (double w : g.weights) wsum += w;
            for (double& w : g.weights) w /= wsum;
        }
        if (restarted) {
            prev_ll = -std::numeric_limits<double>::infinity();
            g.loglik_trace.clear();
            continue;
        }
        g.loglik_trace.push_back(ll);

        if (ll - prev_ll < 1e-6 && iter > 0) {
            g.log_likelihood = ll;
            return g;
        }
        prev_ll = ll;

        // M step.
        for (std::size_t c = 0; c < k; ++c) {
            double nk = 0.0;
            for (std::size_t i = 0; i < n; ++i) nk += resp[i * k + c];
            g.weights[c] = nk / static_cast<double>(n);
            for (std::size_t j = 0; j < d; ++j) {
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i) s += resp[i * k + c] * x(i, j);
                g.means(c, j) = s / nk;
            }
            Matrix& cov = g.covariances[c];
            for (std::size_t a = 0; a < d; ++a)
                for (std::size_t b = a; b < d; ++b) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < n; ++i)
                        s += resp[i * k + c] * (x(i, a) - g.means(c, a)) *
                             (x(i, b) - g.means(c, b));
                    cov(a, b) = s / nk;
                    cov(b, a) = cov(a, b);
                }
            if (floor_covariance(cov)) g.floored_components += 1;
            dcs[c] = decompose(cov);
        }
        g.log_likelihood = ll;
    }
    return g;
}

double bic(const Gmm& g, std::size_t n) {
    const double k = static_cast<double>(g.k());
    const double d = static_cast<double>(g.d);
    const double p = (k - 1.0) + k * d + k * d * (d + 1.0) / 2.0;
    return -2.0 * g.log_likelihood + p * std::log(static_cast<double>(n));
}

double silverman_bandwidth(std::vector<double> col) {
    const std::size_t n = col.size();
    if (n < 2) return 0.0;
    double mean = 0.0;
    for (double v : col) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : col) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(n - 1));
    std::sort(col.begin(), col.end());
    const double iqr = quantile_sorted(col, 0.75) - quantile_sorted(col, 0.25);
    const double scale = iqr > 0.0 ? std::min(sd, iqr / 1.349) : sd;
    return 0.9 * scale * std::pow(static_cast<double>(n), -0.2);
}

}  // namespace

// ============================================================================
// GMM public surface
// ============================================================================

void Gmm::validate() const {
    if (!fitted()) throw ValidationError("gmm is unfitted");
    if (means.rows != k() || means.cols != d || covariances.size() != k())
        throw ValidationError("gmm field shapes disagree");
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw ValidationError("gmm weight negative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw ValidationError("gmm weights do not sum to 1");
    for (const Matrix& cov : covariances) {
        if (cov.rows != d || cov.cols != d) throw ValidationError("gmm covariance shape");
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b)
                if (cov(a, b) != cov(b, a)) throw ValidationError("gmm covariance asymmetric");
        const auto eig = linalg::sym_eig(cov);
        if (eig.values.back() <= 0.0) throw ValidationError("gmm covariance not PD");
    }
}

Gmm fit_gmm(const Matrix& x, const std::vector<std::size_t>& k_range, std::uint64_t seed) {
    if (x.empty()) throw ContractError("fit_gmm: empty matrix");
    if (!x.all_finite()) throw ContractError("fit_gmm: non-finite input");
    if (k_range.empty()) throw ContractError("fit_gmm: empty K range");
    std::size_t k_max = 0;
    for (std::size_t k : k_range) {
        if (k < 1) throw ContractError("fit_gmm: K must be >= 1");
        k_max = std::max(k_max, k);
    }
    if (x.rows < 2 * k_max) throw ContractError("fit_gmm: need n >= 2*max(K)");

    Gmm best;
    double best_bic = std::numeric_limits<double>::infinity();
    const Rng base(seed);
    for (std::size_t k : k_range) {
        Rng rng = base.split(k);
        Gmm g = fit_single_k(x, k, rng);
        const double b = bic(g, x.rows);
        if (b < best_bic) {
            best_bic = b;
            best = std::move(g);
        }
    }
    return best;
}

Matrix sample_gmm(const Gmm& gmm, std::size_t n, Rng& rng) {
    if (!gmm.fitted()) throw ContractError("sample_gmm: unfitted gmm");
    if (n < 1) throw ContractError("sample_gmm: n must be >= 1");
    const std::size_t d = gmm.d, k = gmm.k();
    std::vector<Decomp> dcs(k);
    for (std::size_t c = 0; c < k; ++c) dcs[c] = decompose(gmm.covariances[c]);
    Matrix out(n, d);
    std::vector<double> z(d);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform();
        std::size_t c = k - 1;
        double cum = 0.0;
        for (std::size_t t = 0; t < k; ++t) {
            cum += gmm.weights[t];
            if (u < cum) {
                c = t;
                break;
            }
        }
        for (std::size_t j = 0; j < d; ++j) z[j] = rng.gaussian() * std::sqrt(dcs[c].vals[j]);
        for (std::size_t a = 0; a < d; ++a) {
            double s = gmm.means(c, a);
            for (std::size_t j = 0; j < d; ++j) s += dcs[c].vecs(a, j) * z[j];
            out(i, a) = s;
        }
    }
    return out;
}

// ============================================================================
// Synthetic anomalies
// ============================================================================

AnomalyKind anomaly_kind_from_string(const std::string& name) {
    if (name == "local") return AnomalyKind::kLocal;
    if (name == "cluster") return AnomalyKind::kCluster;
    if (name == "global") return AnomalyKind::kGlobal;
    if (name == "dependency") return AnomalyKind::kDependency;
    throw ContractError("unknown anomaly kind: " + name);
}

std::string to_string(AnomalyKind kind) {
    switch (kind) {
        case AnomalyKind::kLocal: return "local";
        case AnomalyKind::kCluster: return "cluster";
        case AnomalyKind::kGlobal: return "global";
        case AnomalyKind::kDependency: return "dependency";
    }
    throw ContractError("unknown anomaly kind");
}

Matrix synthesize_anomalies(AnomalyKind kind, const Matrix& x_train, std::size_t n,
                            const AnomalyParams& params, std::uint64_t seed) {
    if (n < 1) throw ContractError("synthesize_anomalies: n must be >= 1");
    Rng rng(seed);

    if (kind == AnomalyKind::kLocal || kind == AnomalyKind::kCluster) {
        if (params.gmm == nullptr || !params.gmm->fitted())
            throw ContractError("synthesize_anomalies: local/cluster need a fitted gmm");
        if (!x_train.empty() && x_train.cols != params.gmm->d)
            throw ContractError("synthesize_anomalies: gmm dimension mismatch");
        Gmm scaled = *params.gmm;
        if (kind == AnomalyKind::kLocal) {
            if (params.alpha <= 0.0) throw ContractError("alpha must be positive");
            for (Matrix& cov : scaled.covariances)
                for (double& v : cov.data) v *= params.alpha;
        } else {
            for (double& v : scaled.means.data) v *= params.beta;
        }
        return sample_gmm(scaled, n, rng);
    }

    if (x_train.empty()) throw ContractError("synthesize_anomalies: empty training matrix");
    const std::size_t d = x_train.cols;
    Matrix out(n, d);

    if (kind == AnomalyKind::kGlobal) {
        if (params.delta <= 0.0) throw ContractError("delta must be positive");
        std::vector<double> lo(d), hi(d);
        for (std::size_t j = 0; j < d; ++j) {
            double mn = x_train(0, j), mx = x_train(0, j);
            for (std::size_t i = 1; i < x_train.rows; ++i) {
                mn = std::min(mn, x_train(i, j));
                mx = std::max(mx, x_train(i, j));
            }
            lo[j] = params.delta * mn;
            hi[j] = params.delta * mx;
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) out(i, j) = rng.uniform(lo[j], hi[j]);
        return out;
    }

    // Dependency: independent per-column KDE resampling. Columns lose their
    // joint structure but keep their marginals.
    std::vector<double> h(d);
    for (std::size_t j = 0; j < d; ++j) {
        std::vector<double> col(x_train.rows);
        for (std::size_t i = 0; i < x_train.rows; ++i) col[i] = x_train(i, j);
        h[j] = silverman_bandwidth(std::move(col));
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const std::size_t pick = static_cast<std::size_t>(rng.below(x_train.rows));
            out(i, j) = x_train(pick, j) + rng.gaussian() * h[j];
        }
    return out;
}

std::string generation_manifest(AnomalyKind kind, const Matrix& x_train, std::size_t n,
                                const AnomalyParams& params, std::uint64_t seed) {
    nlohmann::json j;
    j["kind"] = to_string(kind);
    j["n"] = n;
    j["params"] = {{"alpha", params.alpha}, {"beta", params.beta}, {"delta", params.delta}};
    j["seed"] = seed;
    j["columns"] = x_train.cols;
    j["source_checksum"] = io::hex64(matrix_checksum(x_train));
    return j.dump(2);
}

// ============================================================================
// Random-forest feature importance
// ============================================================================

void ImportanceRanking::validate() const {
    if (importance.empty() || order.size() != importance.size())
        throw ValidationError("importance ranking shape");
    double sum = 0.0;
    for (double v : importance) {
        if (v < 0.0) throw ValidationError("negative importance");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("importance does not sum to 1");
    for (std::size_t i = 1; i < order.size(); ++i)
        if (importance[order[i - 1]] < importance[order[i]])
            throw ValidationError("importance order not descending");
}

ImportanceRanking forest_importance(const Matrix& x, const std::vector<int>& y,
                                    const ForestConfig& config, std::uint64_t seed) {
    if (x.empty()) throw ContractError("forest_importance: empty matrix");
    if (y.size() != x.rows) throw ContractError("forest_importance: label count mismatch");
    std::size_t n1 = 0;
    for (int v : y) {
        if (v != 0 && v != 1) throw ContractError("forest_importance: labels must be 0/1");
        n1 += static_cast<std::size_t>(v);
    }
    if (n1 == 0 || n1 == y.size())
        throw ContractError("forest_importance: both classes must be present");
    if (config.n_trees < 1 || config.max_depth < 1)
        throw ContractError("forest_importance: bad config");

    const std::size_t n = x.rows, d = x.cols;
    const std::size_t m = config.features_per_split > 0
                              ? std::min(config.features_per_split, d)
                              : static_cast<std::size_t>(
                                    std::ceil(std::sqrt(static_cast<double>(d))));
    std::vector<double> imp(d, 0.0);
    const Rng base(seed);

    for (std::size_t t = 0; t < config.n_trees; ++t) {
        Rng rng = base.split(t);
        std::vector<std::size_t> boot(n);
        for (std::size_t i = 0; i < n; ++i) boot[i] = static_cast<std::size_t>(rng.below(n));

        // DFS left-first; the rng draw order (feature subsets) is fixed by
        // the traversal, so trees are reproducible.
        std::function<void(std::vector<std::size_t>&, std::size_t)> grow =
            [&](std::vector<std::size_t>& idx, std::size_t depth) {
                const std::size_t nn = idx.size();
                std::size_t c1 = 0;
                for (std::size_t i : idx) c1 += static_cast<std::size_t>(y[i]);
                const std::size_t c0 = nn - c1;
                if (depth >= config.max_depth || nn < 2 || c0 == 0 || c1 == 0) return;
                const double p0 = static_cast<double>(c0) / static_cast<double>(nn);
                const double p1 = static_cast<double>(c1) / static_cast<double>(nn);
                const double gini = 1.0 - p0 * p0 - p1 * p1;

                const auto feats = rng.sample_without_replacement(d, m);
                double best_gain = 0.0;
                std::size_t best_f = d;
                double best_thr = 0.0;
                std::vector<std::pair<double, int>> vals(nn);
                for (std::size_t f : feats) {
                    for (std::size_t i = 0; i < nn; ++i)
                        vals[i] = {x(idx[i], f), y[idx[i]]};
                    std::sort(vals.begin(), vals.end());
                    std::size_t left1 = 0;
                    for (std::size_t i = 1; i < nn; ++i) {
                        left1 += static_cast<std::size_t>(vals[i - 1].second);
                        if (vals[i].first <= vals[i - 1].first) continue;
                        const double thr = 0.5 * (vals[i - 1].first + vals[i].first);
                        if (!(vals[i - 1].first < thr && thr < vals[i].first)) continue;
                        const double nl = static_cast<double>(i);
                        const double nr = static_cast<double>(nn - i);
                        const double p1l = static_cast<double>(left1) / nl;
                        const double p1r = static_cast<double>(c1 - left1) / nr;
                        const double gl = 1.0 - p1l * p1l - (1.0 - p1l) * (1.0 - p1l);
                        const double gr = 1.0 - p1r * p1r - (1.0 - p1r) * (1.0 - p1r);
                        const double gain = gini - (nl * gl + nr * gr) / static_cast<double>(nn);
                        if (gain > best_gain) {
                            best_gain = gain;
                            best_f = f;
                            best_thr = thr;
                        }
                    }
                }
                if (best_f == d) return;
                imp[best_f] +=
                    best_gain * static_cast<double>(nn) / static_cast<double>(n);

                std::vector<std::size_t> left, right;
                for (std::size_t i : idx)
                    (x(i, best_f) < best_thr ? left : right).push_back(i);
                grow(left, depth + 1);
                grow(right, depth + 1);
            };
        grow(boot, 0);
    }

    ImportanceRanking out;
    double total = 0.0;
    for (double v : imp) total += v;
    if (total > 0.0)
        for (double& v : imp) v /= total;
    else
        for (double& v : imp) v = 1.0 / static_cast<double>(d);
    out.importance = imp;
    out.order.resize(d);
    std::iota(out.order.begin(), out.order.end(), std::size_t{0});
    std::stable_sort(out.order.begin(), out.order.end(),
                     [&](std::size_t a, std::size_t b) { return imp[a] > imp[b]; });
    return out;
}

// ============================================================================
// Corruption pipelines
// ============================================================================

CorruptionKind corruption_kind_from_string(const std::string& name) {
    if (name == "add_uninformative") return CorruptionKind::kAddUninformative;
    if (name == "missing_values") return CorruptionKind::kMissingValues;
    if (name == "remove_important") return CorruptionKind::kRemoveImportant;
    if (name == "select_important") return CorruptionKind::kSelectImportant;
    throw ContractError("unknown corruption kind: " + name);
}

std::string to_string(CorruptionKind kind) {
    switch (kind) {
        case CorruptionKind::kAddUninformative: return "add_uninformative";
        case CorruptionKind::kMissingValues: return "missing_values";
        case CorruptionKind::kRemoveImportant: return "remove_important";
        case CorruptionKind::kSelectImportant: return "select_important";
    }
    throw ContractError("unknown corruption kind");
}

namespace {

void blank_and_impute(Matrix& m, double proportion, const std::vector<double>& col_means,
                      std::vector<std::vector<bool>>* observed, Rng& rng) {
    const std::size_t total = m.rows * m.cols;
    const auto k = static_cast<std::size_t>(proportion * static_cast<double>(total));
    const auto holes = rng.sample_without_replacement(total, k);
    std::vector<bool> missing(total, false);
    for (std::size_t flat : holes) missing[flat] = true;
    if (observed) {
        observed->assign(m.cols, std::vector<bool>(m.rows, true));
        for (std::size_t flat : holes)
            (*observed)[flat % m.cols][flat / m.cols] = false;
        return;  // caller imputes after computing observed means
    }
    for (std::size_t flat : holes) m.data[flat] = col_means[flat % m.cols];
}

}  // namespace

DataSplits corrupt(CorruptionKind kind, const DataSplits& splits, double proportion,
                   const ImportanceRanking* ranking, std::uint64_t seed) {
    if (!(proportion > 0.0 && proportion <= 1.0))
        throw ContractError("corrupt: proportion must lie in (0, 1]");
    if (splits.train.empty()) throw ContractError("corrupt: empty training split");
    const std::size_t d = splits.train.cols;
    for (const Matrix* m : {&splits.val, &splits.test})
        if (m->rows > 0 && m->cols != d) throw ContractError("corrupt: split widths disagree");

    DataSplits out = splits;
    Rng rng(seed);

    switch (kind) {
        case CorruptionKind::kAddUninformative: {
            const auto n_new = static_cast<std::size_t>(proportion * static_cast<double>(d));
            if (n_new == 0) return out;
            auto widen = [&](const Matrix& m) {
                Matrix w(m.rows, d + n_new);
                for (std::size_t i = 0; i < m.rows; ++i)
                    for (std::size_t j = 0; j < d; ++j) w(i, j) = m(i, j);
                return w;
            };
            out.train = widen(splits.train);
            out.val = splits.val.rows ? widen(splits.val) : splits.val;
            out.test = splits.test.rows ? widen(splits.test) : splits.test;
            for (std::size_t c = 0; c < n_new; ++c) {
                const auto tmpl = static_cast<std::size_t>(rng.below(d));
                const double mean = column_mean(splits.train, tmpl);
                const double sigma = column_iqr(splits.train, tmpl) / 1.349;
                for (Matrix* m : {&out.train, &out.val, &out.test})
                    for (std::size_t i = 0; i < m->rows; ++i)
                        (*m)(i, d + c) = rng.gaussian(mean, sigma);
            }
            return out;
        }
        case CorruptionKind::kMissingValues: {
            std::vector<std::vector<bool>> observed;
            blank_and_impute(out.train, proportion, {}, &observed, rng);
            std::vector<double> means(d, 0.0);
            for (std::size_t j = 0; j < d; ++j) {
                double s = 0.0;
                std::size_t cnt = 0;
                for (std::size_t i = 0; i < out.train.rows; ++i)
                    if (observed[j][i]) {
                        s += out.train(i, j);
                        ++cnt;
                    }
                means[j] = cnt > 0 ? s / static_cast<double>(cnt) : 0.0;
            }
            for (std::size_t j = 0; j < d; ++j)
                for (std::size_t i = 0; i < out.train.rows; ++i)
                    if (!observed[j][i]) out.train(i, j) = means[j];
            if (out.test.rows) blank_and_impute(out.test, proportion, means, nullptr, rng);
            return out;
        }
        case CorruptionKind::kRemoveImportant:
        case CorruptionKind::kSelectImportant: {
            if (ranking == nullptr) throw ContractError("corrupt: ranking required");
            if (ranking->order.size() != d)
                throw ContractError("corrupt: ranking width mismatch");
            std::vector<std::size_t> keep;
            if (kind == CorruptionKind::kRemoveImportant) {
                const auto n_drop =
                    static_cast<std::size_t>(proportion * static_cast<double>(d));
                if (n_drop >= d) throw ContractError("corrupt: no columns would remain");
                std::vector<bool> dropped(d, false);
                for (std::size_t i = 0; i < n_drop; ++i)
                    dropped[ranking->order[d - 1 - i]] = true;
                for (std::size_t j = 0; j < d; ++j)
                    if (!dropped[j]) keep.push_back(j);
            } else {
                const auto n_keep = static_cast<std::size_t>(
                    std::ceil(proportion * static_cast<double>(d)));
                if (n_keep == 0) throw ContractError("corrupt: no columns would remain");
                keep.assign(ranking->order.begin(),
                            ranking->order.begin() +
                                static_cast<std::ptrdiff_t>(std::min(n_keep, d)));
            }
            out.train = take_cols(splits.train, keep);
            out.val = splits.val.rows ? take_cols(splits.val, keep) : Matrix();
            out.test = splits.test.rows ? take_cols(splits.test, keep) : Matrix();
            return out;
        }
    }
    throw ContractError("unknown corruption kind");
}

// ============================================================================
// Two-dimensional toys
// ============================================================================

const std::vector<std::string>& toy_names() {
    static const std::vector<std::string> names = {
        "curve",  "flower",      "gaussians", "multi_gaussians",
        "moons",  "ring",        "pinched_ring", "spiral",
    };
    return names;
}

namespace {

// Uniform draws over the normals' expanded bounding box, rejecting any point
// within `margin` of a normal row. Keeps anomalies genuinely off-manifold.
Matrix scatter_anomalies(const Matrix& normals, std::size_t n, double margin, double expand,
                         Rng& rng) {
    double lo[2], hi[2];
    for (std::size_t j = 0; j < 2; ++j) {
        lo[j] = normals(0, j);
        hi[j] = normals(0, j);
        for (std::size_t i = 1; i < normals.rows; ++i) {
            lo[j] = std::min(lo[j], normals(i, j));
            hi[j] = std::max(hi[j], normals(i, j));
        }
        const double pad = expand * (hi[j] - lo[j]);
        lo[j] -= pad;
        hi[j] += pad;
    }
    Matrix out(n, 2);
    const double m2 = margin * margin;
    std::size_t attempts = 0;
    const std::size_t cap = 10000 * n;
    for (std::size_t i = 0; i < n;) {
        if (++attempts > cap) throw NumericError("toy anomaly rejection sampling stalled");
        double p[2] = {rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1])};
        bool clear = true;
        for (std::size_t r = 0; r < normals.rows && clear; ++r)
            clear = sq_dist(p, normals.row(r), 2) >= m2;
        if (!clear) continue;
        out(i, 0) = p[0];
        out(i, 1) = p[1];
        ++i;
    }
    return out;
}

}  // namespace

core::Dataset make_toy(const ToySpec& spec) {
    if (spec.n_normal < 50) throw ContractError("make_toy: n_normal must be >= 50");
    if (std::find(toy_names().begin(), toy_names().end(), spec.name) == toy_names().end())
        throw ContractError("make_toy: unknown toy name: " + spec.name);
    const std::size_t n = spec.n_normal;
    const std::size_t na = spec.n_anomaly > 0 ? spec.n_anomaly : std::max<std::size_t>(1, n / 20);
    const double noise = spec.noise;
    Rng rng(spec.seed);

    Matrix normals(n, 2);
    Matrix anomalies;

    if (spec.name == "gaussians") {
        for (std::size_t i = 0; i < n; ++i) {
            normals(i, 0) = rng.gaussian();
            normals(i, 1) = rng.gaussian();
        }
        anomalies = Matrix(na, 2);
        for (std::size_t i = 0; i < na; ++i) {
            anomalies(i, 0) = rng.gaussian(5.0, 0.5);
            anomalies(i, 1) = rng.gaussian(5.0, 0.5);
        }
    } else if (spec.name == "multi_gaussians") {
        static const double centers[3][2] = {{0.0, 0.0}, {4.0, 0.0}, {2.0, 3.5}};
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = i % 3;
            normals(i, 0) = rng.gaussian(centers[c][0], 0.7);
            normals(i, 1) = rng.gaussian(centers[c][1], 0.7);
        }
        anomalies = scatter_anomalies(normals, na, 1.5, 0.2, rng);
    } else if (spec.name == "moons") {
        const std::size_t n1 = n - n / 2;
        for (std::size_t i = 0; i < n; ++i) {
            const bool upper = i < n1;
            const double t = rng.uniform() * 3.14159265358979323846;
            const double bx = upper ? std::cos(t) : 1.0 - std::cos(t);
            const double by = upper ? std::sin(t) : 0.5 - std::sin(t);
            normals(i, 0) = bx + rng.gaussian() * noise;
            normals(i, 1) = by + rng.gaussian() * noise;
        }
        anomalies = scatter_anomalies(normals, na, 0.25, 0.25, rng);
    } else if (spec.name == "ring" || spec.name == "pinched_ring") {
        const bool pinched = spec.name == "pinched_ring";
        for (std::size_t i = 0; i < n; ++i) {
            const double theta = rng.uniform() * 6.28318530717958647692;
            const double mod = pinched ? 0.35 + 0.65 * std::abs(std::cos(theta)) : 1.0;
            const double r = mod * (1.0 + 0.2 * rng.uniform(-1.0, 1.0));
            normals(i, 0) = r * std::cos(theta);
            normals(i, 1) = r * std::sin(theta);
        }
        const double disc = pinched ? 0.12 : 0.3;
        anomalies = Matrix(na, 2);
        for (std::size_t i = 0; i < na; ++i) {
            const double theta = rng.uniform() * 6.28318530717958647692;
            const double r = disc * std::sqrt(rng.uniform());
            anomalies(i, 0) = r * std::cos(theta);
            anomalies(i, 1) = r * std::sin(theta);
        }
    } else if (spec.name == "spiral") {
        for (std::size_t i = 0; i < n; ++i) {
            const double t = rng.uniform(1.57079632679489661923, 3.0 * 3.14159265358979323846);
            const double r = t / (3.0 * 3.14159265358979323846);
            normals(i, 0) = r * std::cos(t) + rng.gaussian() * noise;
            normals(i, 1) = r * std::sin(t) + rng.gaussian() * noise;
        }
        anomalies = scatter_anomalies(normals, na, 0.15, 0.15, rng);
    } else if (spec.name == "curve") {
        for (std::size_t i = 0; i < n; ++i) {
            const double t = rng.uniform(-2.0, 2.0);
            normals(i, 0) = t + rng.gaussian() * noise;
            normals(i, 1) = 0.5 * t * t - 1.0 + rng.gaussian() * noise;
        }
        anomalies = scatter_anomalies(normals, na, 0.2, 0.2, rng);
    } else {  // flower
        for (std::size_t i = 0; i < n; ++i) {
            const double theta = rng.uniform() * 6.28318530717958647692;
            const double r = std::abs(std::cos(3.0 * theta));
            normals(i, 0) = r * std::cos(theta) + rng.gaussian() * noise;
            normals(i, 1) = r * std::sin(theta) + rng.gaussian() * noise;
        }
        anomalies = scatter_anomalies(normals, na, 0.15, 0.3, rng);
    }

    core::Dataset ds;
    ds.name = spec.name;
    ds.X = Matrix(n + na, 2);
    ds.y.assign(n + na, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < 2; ++j) ds.X(i, j) = normals(i, j);
    for (std::size_t i = 0; i < na; ++i) {
        for (std::size_t j = 0; j < 2; ++j) ds.X(n + i, j) = anomalies(i, j);
        ds.y[n + i] = 1;
    }
    ds.source_path = "toy://" + spec.name;
    ds.source_checksum = matrix_checksum(ds.X);
    ds.validate();
    return ds;
}

std::string toy_manifest(const ToySpec& spec, const core::Dataset& ds) {
    nlohmann::json j;
    j["kind"] = "toy";
    j["name"] = spec.name;
    j["n_normal"] = ds.n_normals();
    j["n_anomaly"] = ds.n_anomalies();
    j["noise"] = spec.noise;
    j["seed"] = spec.seed;
    j["source_checksum"] = io::hex64(ds.source_checksum);
    return j.dump(2);
}

}  // namespace tadlab::synthesis
