#include "tadlab/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <unordered_map>

#include "tadlab/io.hpp"
#include "tadlab/kernels.hpp"
#include "tadlab/rng.hpp"

namespace tadlab::detectors {

namespace {

constexpr std::size_t kKdTreeMaxDim = 16;
constexpr double kDensityFloor = 1e-12;

// Neighbor backend: exact tree for low dimension, full scan above.
struct NeighborIndex {
    const Matrix& train;
    std::unique_ptr<KdTree> tree;

    explicit NeighborIndex(const Matrix& t) : train(t) {
        if (t.cols <= kKdTreeMaxDim) tree = std::make_unique<KdTree>(t);
    }
    std::vector<Neighbor> query(const double* q, std::size_t k) const {
        return tree ? tree->query(q, k) : scan_neighbors(train, q, k);
    }
};

// Applies the seeded row cap; the kept rows stay in their original order so
// lowest-index tie-breaking matches the subsampled matrix consistently.
const Matrix& capped_train(const Matrix& train, const NeighborOptions& opts, Matrix& holder) {
    if (opts.max_train_rows == 0 || train.rows <= opts.max_train_rows) return train;
    Rng rng(opts.subsample_seed);
    auto idx = rng.sample_without_replacement(train.rows, opts.max_train_rows);
    std::sort(idx.begin(), idx.end());
    holder = train.take_rows(idx);
    return holder;
}

// kNN scoring of external queries works with k = n_train; leave-one-out and
// LOF need a spare row, so they demand k < n_train.
void check_neighbor_args(const Matrix& train, const Matrix& queries, std::size_t k,
                         bool strict) {
    if (train.rows < 2) throw ContractError("neighbor detector: need at least 2 train rows");
    if (queries.cols != train.cols)
        throw ContractError("neighbor detector: query dimension differs from train");
    if (k < 1 || k > train.rows - (strict ? 1 : 0))
        throw ContractError("neighbor detector: require 1 <= k < n_train");
}

// Neighbors of an external query. In leave-one-out mode the single best
// zero-distance candidate is dropped, so a train row queried against its own
// training set sees only the other rows.
std::vector<Neighbor> query_neighbors(const NeighborIndex& index, const double* q, std::size_t k,
                                      bool leave_one_out) {
    std::vector<Neighbor> nb = index.query(q, leave_one_out ? k + 1 : k);
    if (leave_one_out) {
        for (std::size_t i = 0; i < nb.size(); ++i)
            if (nb[i].d2 == 0.0) {
                nb.erase(nb.begin() + static_cast<std::ptrdiff_t>(i));
                break;
            }
        if (nb.size() > k) nb.resize(k);
    }
    return nb;
}

// Neighbors of train row i within its own matrix, excluding i itself.
std::vector<Neighbor> self_neighbors(const NeighborIndex& index, const Matrix& train,
                                     std::size_t i, std::size_t k) {
    std::vector<Neighbor> nb = index.query(train.row(i), k + 1);
    for (std::size_t p = 0; p < nb.size(); ++p)
        if (nb[p].idx == i) {
            nb.erase(nb.begin() + static_cast<std::ptrdiff_t>(p));
            break;
        }
    if (nb.size() > k) nb.resize(k);
    return nb;
}

}  // namespace

std::string scores_to_csv(const ScoreVector& s) {
    std::ostringstream os;
    os.precision(17);
    os << "row_id,score\n";
    for (std::size_t i = 0; i < s.scores.size(); ++i) os << i << ',' << s.scores[i] << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// kNN
// ---------------------------------------------------------------------------

ScoreVector knn(const Matrix& train, const Matrix& queries, std::size_t k,
                const NeighborOptions& opts) {
    Matrix holder;
    const Matrix& fit = capped_train(train, opts, holder);
    check_neighbor_args(fit, queries, k, opts.leave_one_out);
    NeighborIndex index(fit);

    ScoreVector out;
    out.scores.resize(queries.rows);
    const auto m = static_cast<std::int64_t>(queries.rows);
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
    for (std::int64_t i = 0; i < m; ++i) {
        const auto nb =
            query_neighbors(index, queries.row(static_cast<std::size_t>(i)), k, opts.leave_one_out);
        double s = 0.0;
        if (opts.aggregate == KnnAggregate::kth) {
            s = std::sqrt(nb.back().d2);
        } else {
            for (const Neighbor& n : nb) s += std::sqrt(n.d2);
            s /= static_cast<double>(nb.size());
        }
        out.scores[static_cast<std::size_t>(i)] = s;
    }
    return out;
}

// ---------------------------------------------------------------------------
// LOF
// ---------------------------------------------------------------------------

ScoreVector lof(const Matrix& train, const Matrix& queries, std::size_t k,
                const NeighborOptions& opts, bool* density_floored) {
    Matrix holder;
    const Matrix& fit = capped_train(train, opts, holder);
    check_neighbor_args(fit, queries, k, true);
    NeighborIndex index(fit);
    const std::size_t n = fit.rows;

    std::vector<std::vector<Neighbor>> hood(n);
    std::vector<double> kdist(n), lrd(n);
    std::vector<char> floored(n, 0);

    const auto nn = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
    for (std::int64_t i = 0; i < nn; ++i) {
        hood[static_cast<std::size_t>(i)] = self_neighbors(index, fit, static_cast<std::size_t>(i), k);
        kdist[static_cast<std::size_t>(i)] = std::sqrt(hood[static_cast<std::size_t>(i)].back().d2);
    }

#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
    for (std::int64_t i = 0; i < nn; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        double reach = 0.0;
        for (const Neighbor& o : hood[ui]) reach += std::max(kdist[o.idx], std::sqrt(o.d2));
        if (reach < kDensityFloor) {
            reach = kDensityFloor;
            floored[ui] = 1;
        }
        lrd[ui] = static_cast<double>(k) / reach;
    }

    ScoreVector out;
    out.scores.resize(queries.rows);
    std::vector<char> qfloored(queries.rows, 0);
    const auto m = static_cast<std::int64_t>(queries.rows);
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
    for (std::int64_t qi = 0; qi < m; ++qi) {
        const auto uq = static_cast<std::size_t>(qi);
        const auto nb = query_neighbors(index, queries.row(uq), k, opts.leave_one_out);
        double reach = 0.0, neighbor_lrd = 0.0;
        for (const Neighbor& o : nb) {
            reach += std::max(kdist[o.idx], std::sqrt(o.d2));
            neighbor_lrd += lrd[o.idx];
        }
        if (reach < kDensityFloor) {
            reach = kDensityFloor;
            qfloored[uq] = 1;
        }
        const double lrd_q = static_cast<double>(nb.size()) / reach;
        out.scores[uq] = neighbor_lrd / (static_cast<double>(nb.size()) * lrd_q);
    }

    if (density_floored) {
        bool any = false;
        for (char f : floored) any |= (f != 0);
        for (char f : qfloored) any |= (f != 0);
        *density_floored = any;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Isolation forest
// ---------------------------------------------------------------------------

double average_path_length(std::size_t m) {
    if (m < 2) return 0.0;
    const double md = static_cast<double>(m);
    const double harmonic = std::log(md - 1.0) + 0.5772156649;
    return 2.0 * harmonic - 2.0 * (md - 1.0) / md;
}

namespace {

std::int64_t grow_tree(IsolationTree& t, const Matrix& x, const std::vector<std::size_t>& rows,
                       std::size_t depth, std::size_t limit, Rng& rng) {
    const std::size_t id = t.nodes.size();
    t.nodes.push_back({});
    t.nodes[id].size = rows.size();
    if (depth >= limit || rows.size() <= 1) return static_cast<std::int64_t>(id);

    std::vector<std::size_t> splittable;
    for (std::size_t j = 0; j < x.cols; ++j) {
        double lo = x(rows[0], j), hi = lo;
        for (std::size_t r : rows) {
            lo = std::min(lo, x(r, j));
            hi = std::max(hi, x(r, j));
        }
        if (hi > lo) splittable.push_back(j);
    }
    if (splittable.empty()) return static_cast<std::int64_t>(id);  // constant block

    const std::size_t dim = splittable[rng.below(splittable.size())];
    double lo = x(rows[0], dim), hi = lo;
    for (std::size_t r : rows) {
        lo = std::min(lo, x(r, dim));
        hi = std::max(hi, x(r, dim));
    }
    // Open-interval draw keeps both children nonempty.
    const double split = lo + rng.uniform_open() * (hi - lo);

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) (x(r, dim) < split ? left : right).push_back(r);

    const std::int64_t l = grow_tree(t, x, left, depth + 1, limit, rng);
    const std::int64_t r = grow_tree(t, x, right, depth + 1, limit, rng);
    t.nodes[id].split_dim = dim;
    t.nodes[id].split_val = split;
    t.nodes[id].left = l;
    t.nodes[id].right = r;
    return static_cast<std::int64_t>(id);
}

}  // namespace

double IsolationTree::path_length(const double* q) const {
    std::size_t node = 0, depth = 0;
    while (nodes[node].left >= 0) {
        node = static_cast<std::size_t>(q[nodes[node].split_dim] < nodes[node].split_val
                                            ? nodes[node].left
                                            : nodes[node].right);
        ++depth;
    }
    return static_cast<double>(depth) + average_path_length(nodes[node].size);
}

std::size_t IsolationTree::depth() const {
    std::size_t best = 0;
    // Node depths via a parent-indexed walk; nodes store children, so replay.
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
        const auto [node, depth] = stack.back();
        stack.pop_back();
        best = std::max(best, depth);
        if (nodes[node].left >= 0) {
            stack.push_back({static_cast<std::size_t>(nodes[node].left), depth + 1});
            stack.push_back({static_cast<std::size_t>(nodes[node].right), depth + 1});
        }
    }
    return best;
}

IsolationForest fit_iforest_on_rows(const Matrix& train,
                                    const std::vector<std::vector<std::size_t>>& tree_rows,
                                    std::uint64_t seed) {
    if (train.rows < 2 || train.cols < 1) throw ContractError("iforest: need n >= 2 and d >= 1");
    if (tree_rows.empty()) throw ContractError("iforest: need at least one tree");
    std::size_t psi = 0;
    for (const auto& rows : tree_rows) psi = std::max(psi, rows.size());
    if (psi < 2) throw ContractError("iforest: subsample must hold at least 2 rows");

    const auto limit = static_cast<std::size_t>(
        std::ceil(std::log2(static_cast<double>(psi))));

    IsolationForest forest;
    forest.subsample = psi;
    forest.c_psi = average_path_length(psi);
    forest.d = train.cols;
    Rng rng(seed);
    for (std::size_t t = 0; t < tree_rows.size(); ++t) {
        Rng tree_rng = rng.split(t);
        IsolationTree tree;
        grow_tree(tree, train, tree_rows[t], 0, limit, tree_rng);
        forest.trees.push_back(std::move(tree));
    }
    return forest;
}

IsolationForest fit_iforest(const Matrix& train, std::size_t n_trees, std::size_t subsample,
                            std::uint64_t seed) {
    if (n_trees < 1) throw ContractError("iforest: need at least one tree");
    if (subsample < 2) throw ContractError("iforest: subsample must be at least 2");
    if (train.rows < 2 || train.cols < 1) throw ContractError("iforest: need n >= 2 and d >= 1");

    const std::size_t psi = std::min(subsample, train.rows);
    const auto limit = static_cast<std::size_t>(
        std::ceil(std::log2(static_cast<double>(psi))));

    IsolationForest forest;
    forest.subsample = psi;
    forest.c_psi = average_path_length(psi);
    forest.d = train.cols;
    Rng rng(seed);
    for (std::size_t t = 0; t < n_trees; ++t) {
        Rng tree_rng = rng.split(t);
        const auto rows = tree_rng.sample_without_replacement(train.rows, psi);
        IsolationTree tree;
        grow_tree(tree, train, rows, 0, limit, tree_rng);
        forest.trees.push_back(std::move(tree));
    }
    return forest;
}

ScoreVector score_iforest(const IsolationForest& forest, const Matrix& queries) {
    if (queries.cols != forest.d) throw ContractError("iforest: query dimension differs from fit");
    ScoreVector out;
    out.scores.resize(queries.rows);
    const auto m = static_cast<std::int64_t>(queries.rows);
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
    for (std::int64_t i = 0; i < m; ++i) {
        double h = 0.0;
        for (const IsolationTree& t : forest.trees)
            h += t.path_length(queries.row(static_cast<std::size_t>(i)));
        h /= static_cast<double>(forest.trees.size());
        out.scores[static_cast<std::size_t>(i)] = std::exp2(-h / forest.c_psi);
    }
    return out;
}

ScoreVector iforest(const Matrix& train, const Matrix& queries, std::size_t n_trees,
                    std::size_t subsample, std::uint64_t seed) {
    return score_iforest(fit_iforest(train, n_trees, subsample, seed), queries);
}

// ---------------------------------------------------------------------------
// One-class SVM
// ---------------------------------------------------------------------------

double rbf_gamma_scale(const Matrix& train) {
    if (train.empty()) throw ContractError("ocsvm: empty train matrix");
    double mean = 0.0;
    for (double v : train.data) mean += v;
    mean /= static_cast<double>(train.data.size());
    double var = 0.0;
    for (double v : train.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(train.data.size());
    if (var <= 0.0) var = 1.0;  // constant data: any width works
    return 1.0 / (static_cast<double>(train.cols) * var);
}

namespace {

// On-demand kernel columns with FIFO eviction; full-matrix behavior for
// small n, bounded memory for large n.
class KernelCache {
public:
    KernelCache(const Matrix& x, double gamma, std::size_t budget_bytes = 256ull << 20)
        : x_(x), gamma_(gamma) {
        max_cols_ = std::max<std::size_t>(2, budget_bytes / (8 * x.rows));
    }

    const std::vector<double>& column(std::size_t i) {
        auto it = cols_.find(i);
        if (it != cols_.end()) return it->second;
        if (cols_.size() >= max_cols_) {
            cols_.erase(order_.front());
            order_.pop_front();
        }
        std::vector<double> col(x_.rows);
        const double* xi = x_.row(i);
        const auto n = static_cast<std::int64_t>(x_.rows);
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
        for (std::int64_t r = 0; r < n; ++r)
            col[static_cast<std::size_t>(r)] =
                std::exp(-gamma_ * sq_dist(xi, x_.row(static_cast<std::size_t>(r)), x_.cols));
        order_.push_back(i);
        return cols_.emplace(i, std::move(col)).first->second;
    }

private:
    const Matrix& x_;
    double gamma_;
    std::size_t max_cols_;
    std::unordered_map<std::size_t, std::vector<double>> cols_;
    std::deque<std::size_t> order_;
};

}  // namespace

OcsvmModel fit_ocsvm(const Matrix& train, double nu, double gamma, double tol,
                     std::size_t max_iter) {
    const std::size_t n = train.rows;
    if (n < 2) throw ContractError("ocsvm: need at least 2 train rows");
    if (!(nu > 0.0) || nu > 1.0) throw ContractError("ocsvm: nu must lie in (0, 1]");
    if (nu * static_cast<double>(n) < 1.0)
        throw ContractError("ocsvm: nu * n_train must be at least 1");
    if (gamma <= 0.0) gamma = rbf_gamma_scale(train);
    if (max_iter == 0) max_iter = std::max<std::size_t>(200000, 200 * n);

    const double c = 1.0 / (nu * static_cast<double>(n));
    std::vector<double> alpha(n, 0.0);
    const auto n_cap = static_cast<std::size_t>(nu * static_cast<double>(n));
    for (std::size_t i = 0; i < n_cap && i < n; ++i) alpha[i] = c;
    if (n_cap < n) {
        const double rest = 1.0 - static_cast<double>(n_cap) * c;
        if (rest > 0.0) alpha[n_cap] = rest;
    }

    KernelCache cache(train, gamma);

    // g = Q alpha, built from the initially active columns.
    std::vector<double> g(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (alpha[i] <= 0.0) continue;
        const auto& col = cache.column(i);
        const double a = alpha[i];
        for (std::size_t r = 0; r < n; ++r) g[r] += a * col[r];
    }

    double gap = 0.0;
    std::size_t iter = 0;
    for (; iter < max_iter; ++iter) {
        std::size_t up = n, down = n;
        double g_up = 0.0, g_down = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (alpha[i] < c && (up == n || g[i] < g_up)) {
                up = i;
                g_up = g[i];
            }
            if (alpha[i] > 0.0 && (down == n || g[i] > g_down)) {
                down = i;
                g_down = g[i];
            }
        }
        gap = g_down - g_up;
        if (up == n || down == n || gap <= tol) break;

        const auto& col_up = cache.column(up);
        const auto& col_down = cache.column(down);
        const double curvature =
            std::max(col_up[up] + col_down[down] - 2.0 * col_up[down], kDensityFloor);
        double delta = gap / curvature;
        const double room_up = c - alpha[up];
        delta = std::min(delta, std::min(room_up, alpha[down]));

        // Snap box hits exactly so the active-set tests stay crisp.
        if (delta == room_up)
            alpha[up] = c;
        else
            alpha[up] += delta;
        if (delta == alpha[down])
            alpha[down] = 0.0;
        else
            alpha[down] -= delta;

        for (std::size_t r = 0; r < n; ++r) g[r] += delta * (col_up[r] - col_down[r]);
    }
    if (iter >= max_iter) {
        std::ostringstream os;
        os << "ocsvm: no convergence after " << max_iter << " iterations, KKT gap " << gap;
        throw NumericError(os.str());
    }

    // rho from free support vectors, else the midpoint of the KKT bracket.
    double free_sum = 0.0;
    std::size_t free_count = 0;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        if (alpha[i] > 0.0 && alpha[i] < c) {
            free_sum += g[i];
            ++free_count;
        } else if (alpha[i] == 0.0) {
            hi = std::min(hi, g[i]);
        } else {
            lo = std::max(lo, g[i]);
        }
    }
    OcsvmModel model;
    if (free_count > 0)
        model.rho = free_sum / static_cast<double>(free_count);
    else if (std::isfinite(lo) && std::isfinite(hi))
        model.rho = 0.5 * (lo + hi);
    else
        model.rho = std::isfinite(lo) ? lo : hi;

    std::vector<std::size_t> sv;
    for (std::size_t i = 0; i < n; ++i)
        if (alpha[i] > 0.0) sv.push_back(i);
    model.support = train.take_rows(sv);
    model.alpha.reserve(sv.size());
    for (std::size_t i : sv) model.alpha.push_back(alpha[i]);
    model.gamma = gamma;
    model.nu = nu;
    model.iterations = iter;
    model.gap = gap;
    return model;
}

ScoreVector score_ocsvm(const OcsvmModel& model, const Matrix& queries) {
    if (queries.cols != model.support.cols)
        throw ContractError("ocsvm: query dimension differs from fit");
    ScoreVector out;
    out.scores.resize(queries.rows);
    const auto m = static_cast<std::int64_t>(queries.rows);
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
    for (std::int64_t i = 0; i < m; ++i) {
        const double* q = queries.row(static_cast<std::size_t>(i));
        double s = 0.0;
        for (std::size_t v = 0; v < model.support.rows; ++v)
            s += model.alpha[v] *
                 std::exp(-model.gamma * sq_dist(model.support.row(v), q, queries.cols));
        out.scores[static_cast<std::size_t>(i)] = model.rho - s;
    }
    return out;
}

ScoreVector ocsvm(const Matrix& train, const Matrix& queries, double nu, double gamma) {
    return score_ocsvm(fit_ocsvm(train, nu, gamma), queries);
}

// ---------------------------------------------------------------------------
// Residual norm
// ---------------------------------------------------------------------------

ScoreVector residual_norm(const Matrix& train, const Matrix& queries,
                          double keep_smallest_fraction) {
    const linalg::PrincipalBasis basis = linalg::principal_basis(train);
    const Matrix proj = linalg::residual_project(basis, queries, keep_smallest_fraction);
    ScoreVector out;
    out.scores.resize(proj.rows);
    for (std::size_t i = 0; i < proj.rows; ++i) out.scores[i] = norm2(proj.row(i), proj.cols);
    return out;
}

// ---------------------------------------------------------------------------
// Facade
// ---------------------------------------------------------------------------

std::string kind_name(DetectorKind k) {
    switch (k) {
        case DetectorKind::knn: return "knn";
        case DetectorKind::lof: return "lof";
        case DetectorKind::iforest: return "iforest";
        case DetectorKind::ocsvm: return "ocsvm";
        case DetectorKind::residual_norm: return "residual_norm";
    }
    throw ContractError("unknown detector kind");
}

DetectorKind kind_from_name(const std::string& name) {
    if (name == "knn") return DetectorKind::knn;
    if (name == "lof") return DetectorKind::lof;
    if (name == "iforest") return DetectorKind::iforest;
    if (name == "ocsvm") return DetectorKind::ocsvm;
    if (name == "residual_norm") return DetectorKind::residual_norm;
    throw SchemaError("unknown detector kind '" + name + "'");
}

DetectorModel fit(const DetectorConfig& config, const Matrix& train) {
    DetectorModel model;
    model.config = config;
    switch (config.kind) {
        case DetectorKind::knn:
        case DetectorKind::lof: {
            Matrix holder;
            const Matrix& fit_rows = capped_train(train, config.neighbors, holder);
            const bool strict = config.kind == DetectorKind::lof || config.neighbors.leave_one_out;
            if (config.k < 1 || config.k > fit_rows.rows - (strict ? 1 : 0))
                throw ContractError("neighbor detector: require 1 <= k < n_train");
            model.train = fit_rows;
            break;
        }
        case DetectorKind::iforest:
            model.forest = fit_iforest(train, config.n_trees, config.subsample, config.seed);
            break;
        case DetectorKind::ocsvm:
            model.svm = fit_ocsvm(train, config.nu, config.gamma);
            break;
        case DetectorKind::residual_norm:
            (void)linalg::residual_width(train.cols, config.fraction);
            model.basis = linalg::principal_basis(train);
            break;
    }
    return model;
}

ScoreVector score(const DetectorModel& model, const Matrix& queries) {
    NeighborOptions opts = model.config.neighbors;
    opts.max_train_rows = 0;  // the cap already ran at fit time
    switch (model.config.kind) {
        case DetectorKind::knn:
            return knn(model.train, queries, model.config.k, opts);
        case DetectorKind::lof:
            return lof(model.train, queries, model.config.k, opts);
        case DetectorKind::iforest:
            return score_iforest(model.forest, queries);
        case DetectorKind::ocsvm:
            return score_ocsvm(model.svm, queries);
        case DetectorKind::residual_norm: {
            const Matrix proj =
                linalg::residual_project(model.basis, queries, model.config.fraction);
            ScoreVector out;
            out.scores.resize(proj.rows);
            for (std::size_t i = 0; i < proj.rows; ++i)
                out.scores[i] = norm2(proj.row(i), proj.cols);
            return out;
        }
    }
    throw ContractError("unknown detector kind");
}

// ---------------------------------------------------------------------------
// Binary model cache
// ---------------------------------------------------------------------------

namespace {
constexpr std::uint32_t kModelVersion = 1;

void write_config(std::ostream& os, const DetectorConfig& c) {
    io::write_u32(os, static_cast<std::uint32_t>(c.kind));
    io::write_u64(os, c.k);
    io::write_u32(os, static_cast<std::uint32_t>(c.neighbors.aggregate));
    io::write_u32(os, c.neighbors.leave_one_out ? 1 : 0);
    io::write_u64(os, c.neighbors.max_train_rows);
    io::write_u64(os, c.neighbors.subsample_seed);
    io::write_u64(os, c.n_trees);
    io::write_u64(os, c.subsample);
    io::write_u64(os, c.seed);
    io::write_f64(os, c.nu);
    io::write_f64(os, c.gamma);
    io::write_f64(os, c.fraction);
}

DetectorConfig read_config(std::istream& is) {
    DetectorConfig c;
    c.kind = static_cast<DetectorKind>(io::read_u32(is));
    c.k = io::read_u64(is);
    c.neighbors.aggregate = static_cast<KnnAggregate>(io::read_u32(is));
    c.neighbors.leave_one_out = io::read_u32(is) != 0;
    c.neighbors.max_train_rows = io::read_u64(is);
    c.neighbors.subsample_seed = io::read_u64(is);
    c.n_trees = io::read_u64(is);
    c.subsample = io::read_u64(is);
    c.seed = io::read_u64(is);
    c.nu = io::read_f64(is);
    c.gamma = io::read_f64(is);
    c.fraction = io::read_f64(is);
    return c;
}

}  // namespace

void save_model(const DetectorModel& model, const std::string& path) {
    std::ostringstream os(std::ios::binary);
    io::write_u32(os, kModelVersion);
    write_config(os, model.config);
    switch (model.config.kind) {
        case DetectorKind::knn:
        case DetectorKind::lof:
            io::write_matrix(os, model.train);
            break;
        case DetectorKind::iforest: {
            io::write_u64(os, model.forest.subsample);
            io::write_f64(os, model.forest.c_psi);
            io::write_u64(os, model.forest.d);
            io::write_u64(os, model.forest.trees.size());
            for (const IsolationTree& t : model.forest.trees) {
                io::write_u64(os, t.nodes.size());
                for (const auto& nd : t.nodes) {
                    io::write_u64(os, nd.split_dim);
                    io::write_f64(os, nd.split_val);
                    io::write_u64(os, static_cast<std::uint64_t>(nd.left));
                    io::write_u64(os, static_cast<std::uint64_t>(nd.right));
                    io::write_u64(os, nd.size);
                }
            }
            break;
        }
        case DetectorKind::ocsvm: {
            io::write_matrix(os, model.svm.support);
            io::write_u64(os, model.svm.alpha.size());
            io::write_f64_block(os, model.svm.alpha.data(), model.svm.alpha.size());
            io::write_f64(os, model.svm.rho);
            io::write_f64(os, model.svm.gamma);
            io::write_f64(os, model.svm.nu);
            io::write_u64(os, model.svm.iterations);
            io::write_f64(os, model.svm.gap);
            break;
        }
        case DetectorKind::residual_norm: {
            io::write_u64(os, model.basis.d);
            io::write_u64(os, model.basis.source_rows);
            io::write_u64(os, model.basis.centered ? 1 : 0);
            io::write_f64_block(os, model.basis.decomposition.values.data(), model.basis.d);
            io::write_matrix(os, model.basis.decomposition.vectors);
            break;
        }
    }
    io::write_file(path, os.str());
}

DetectorModel load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("detector cache: cannot open '" + path + "'");
    if (io::read_u32(is) != kModelVersion)
        throw ParseError("detector cache: unsupported version in '" + path + "'");
    DetectorModel model;
    model.config = read_config(is);
    switch (model.config.kind) {
        case DetectorKind::knn:
        case DetectorKind::lof:
            model.train = io::read_matrix(is);
            break;
        case DetectorKind::iforest: {
            model.forest.subsample = io::read_u64(is);
            model.forest.c_psi = io::read_f64(is);
            model.forest.d = io::read_u64(is);
            const std::size_t n_trees = io::read_u64(is);
            model.forest.trees.resize(n_trees);
            for (IsolationTree& t : model.forest.trees) {
                t.nodes.resize(io::read_u64(is));
                for (auto& nd : t.nodes) {
                    nd.split_dim = io::read_u64(is);
                    nd.split_val = io::read_f64(is);
                    nd.left = static_cast<std::int64_t>(io::read_u64(is));
                    nd.right = static_cast<std::int64_t>(io::read_u64(is));
                    nd.size = io::read_u64(is);
                }
            }
            break;
        }
        case DetectorKind::ocsvm: {
            model.svm.support = io::read_matrix(is);
            model.svm.alpha.resize(io::read_u64(is));
            io::read_f64_block(is, model.svm.alpha.data(), model.svm.alpha.size());
            model.svm.rho = io::read_f64(is);
            model.svm.gamma = io::read_f64(is);
            model.svm.nu = io::read_f64(is);
            model.svm.iterations = io::read_u64(is);
            model.svm.gap = io::read_f64(is);
            break;
        }
        case DetectorKind::residual_norm: {
            model.basis.d = io::read_u64(is);
            model.basis.source_rows = io::read_u64(is);
            model.basis.centered = io::read_u64(is) != 0;
            model.basis.decomposition.values.resize(model.basis.d);
            io::read_f64_block(is, model.basis.decomposition.values.data(), model.basis.d);
            model.basis.decomposition.vectors = io::read_matrix(is);
            break;
        }
        default:
            throw ParseError("detector cache: unknown kind in '" + path + "'");
    }
    if (!is) throw ParseError("detector cache: truncated file '" + path + "'");
    return model;
}

}  // namespace tadlab::detectors
