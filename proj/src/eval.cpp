#include "tadlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "tadlab/core.hpp"
#include "tadlab/kernels.hpp"
#include "tadlab/linalg.hpp"

namespace tadlab::eval {

using json = nlohmann::json;

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Studentized-range constants q_alpha(k) / sqrt(2) for the Nemenyi test,
// k = 2..20.
constexpr double kQ05[] = {1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164,
                           3.219, 3.268, 3.313, 3.354, 3.391, 3.426, 3.458, 3.489, 3.517, 3.544};
constexpr double kQ10[] = {1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920,
                           2.978, 3.030, 3.077, 3.120, 3.159, 3.196, 3.230, 3.261, 3.291, 3.319};

double nemenyi_q(std::size_t k, double alpha) {
    if (k < 2 || k > 20) throw ContractError("rank_compare: tabulated q only for 2 <= k <= 20");
    if (alpha == 0.05) return kQ05[k - 2];
    if (alpha == 0.10) return kQ10[k - 2];
    throw ContractError("rank_compare: alpha must be 0.05 or 0.10");
}

}  // namespace

std::vector<double> midranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t p = i; p <= j; ++p) ranks[order[p]] = mid;
        i = j + 1;
    }
    return ranks;
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw ContractError("auroc: length mismatch");
    std::size_t n1 = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw ContractError("auroc: labels must be 0/1");
        n1 += (y == 1);
    }
    const std::size_t n0 = labels.size() - n1;
    if (n0 == 0 || n1 == 0) throw ContractError("auroc: both classes required");
    for (double s : scores)
        if (!std::isfinite(s)) throw ContractError("auroc: non-finite score");

    const std::vector<double> ranks = midranks(scores);
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == 1) rank_sum += ranks[i];
    const double u = rank_sum - 0.5 * static_cast<double>(n1) * static_cast<double>(n1 + 1);
    return 100.0 * u / (static_cast<double>(n0) * static_cast<double>(n1));
}

double spearman_corr(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ContractError("spearman: length mismatch");
    if (a.size() < 3) throw ContractError("spearman: need at least 3 observations");
    const std::vector<double> ra = midranks(a);
    const std::vector<double> rb = midranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) return kNaN;  // constant input: undefined
    return cov / std::sqrt(va * vb);
}

// ---------------------------------------------------------------------------
// ScoreTable
// ---------------------------------------------------------------------------

std::size_t ScoreTable::add_row(const std::string& label) {
    row_labels.push_back(label);
    values.emplace_back(methods.size(), kNaN);
    return row_labels.size() - 1;
}

void ScoreTable::set(std::size_t row, const std::string& method, double value) {
    if (row >= values.size()) throw ContractError("score table: row out of range");
    if (!(value >= 0.0 && value <= 100.0))
        throw ContractError("score table: AUROC must lie in [0, 100]");
    const auto it = std::find(methods.begin(), methods.end(), method);
    std::size_t col;
    if (it == methods.end()) {
        methods.push_back(method);
        col = methods.size() - 1;
        for (auto& r : values) r.resize(methods.size(), kNaN);
    } else {
        col = static_cast<std::size_t>(it - methods.begin());
    }
    values[row][col] = value;
}

double ScoreTable::get(std::size_t row, const std::string& method) const {
    const auto it = std::find(methods.begin(), methods.end(), method);
    if (row >= values.size() || it == methods.end())
        throw ContractError("score table: unknown cell");
    return values[row][static_cast<std::size_t>(it - methods.begin())];
}

std::vector<std::size_t> ScoreTable::complete_rows() const {
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < values.size(); ++r) {
        bool complete = true;
        for (double v : values[r]) complete &= !std::isnan(v);
        if (complete) out.push_back(r);
    }
    return out;
}

void ScoreTable::validate() const {
    for (const auto& row : values) {
        if (row.size() != methods.size()) throw ValidationError("score table: ragged row");
        for (double v : row)
            if (!std::isnan(v) && !(v >= 0.0 && v <= 100.0))
                throw ValidationError("score table: entry outside [0, 100]");
    }
    if (values.size() != row_labels.size()) throw ValidationError("score table: label mismatch");
}

std::string ScoreTable::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "row";
    for (const auto& m : methods) os << ',' << m;
    os << '\n';
    for (std::size_t r = 0; r < values.size(); ++r) {
        os << row_labels[r];
        for (double v : values[r]) {
            os << ',';
            if (!std::isnan(v)) os << v;
        }
        os << '\n';
    }
    return os.str();
}

ScoreTable ScoreTable::from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw ParseError("score table: empty csv");
    ScoreTable t;
    {
        std::istringstream hs(line);
        std::string cell;
        bool first = true;
        while (std::getline(hs, cell, ',')) {
            if (!cell.empty() && cell.back() == '\r') cell.pop_back();
            if (first) {
                if (cell != "row") throw SchemaError("score table: first column must be 'row'");
                first = false;
            } else {
                t.methods.push_back(cell);
            }
        }
    }
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") continue;
        std::istringstream ls(line);
        std::string cell;
        std::getline(ls, cell, ',');
        const std::size_t r = t.add_row(cell);
        std::size_t col = 0;
        while (std::getline(ls, cell, ',')) {
            if (!cell.empty() && cell.back() == '\r') cell.pop_back();
            if (col >= t.methods.size()) throw ParseError("score table: too many cells in a row");
            if (!cell.empty()) t.values[r][col] = std::stod(cell);
            ++col;
        }
    }
    t.validate();
    return t;
}

// ---------------------------------------------------------------------------
// rank_compare
// ---------------------------------------------------------------------------

RankDiagram rank_compare(const ScoreTable& table, double alpha) {
    table.validate();
    const std::size_t k = table.methods.size();
    if (k < 3) throw ContractError("rank_compare: need at least 3 methods");
    const auto rows = table.complete_rows();
    const std::size_t n = rows.size();
    if (n < 5) throw ContractError("rank_compare: need at least 5 complete rows");

    RankDiagram out;
    out.methods = table.methods;
    out.avg_rank.assign(k, 0.0);
    out.alpha = alpha;
    out.rows_used = n;

    for (std::size_t r : rows) {
        // Rank 1 = best = highest AUROC, so rank the negated values.
        std::vector<double> neg(k);
        for (std::size_t j = 0; j < k; ++j) neg[j] = -table.values[r][j];
        const auto ranks = midranks(neg);
        for (std::size_t j = 0; j < k; ++j) out.avg_rank[j] += ranks[j];
    }
    for (double& r : out.avg_rank) r /= static_cast<double>(n);

    const double kd = static_cast<double>(k), nd = static_cast<double>(n);
    double sum_sq = 0.0;
    for (double r : out.avg_rank) sum_sq += nd * r * nd * r;  // (N * avg)^2 = R_j^2
    out.friedman_stat =
        12.0 / (nd * kd * (kd + 1.0)) * sum_sq - 3.0 * nd * (kd + 1.0);
    out.critical_difference = nemenyi_q(k, alpha) * std::sqrt(kd * (kd + 1.0) / (6.0 * nd));

    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j)
            if (std::abs(out.avg_rank[i] - out.avg_rank[j]) > out.critical_difference)
                out.significant_pairs.emplace_back(i, j);
    return out;
}

std::string RankDiagram::to_json() const {
    json j;
    j["alpha"] = alpha;
    j["rows_used"] = rows_used;
    j["friedman_stat"] = friedman_stat;
    j["critical_difference"] = critical_difference;
    json arr = json::array();
    for (std::size_t i = 0; i < methods.size(); ++i)
        arr.push_back({{"method", methods[i]}, {"avg_rank", avg_rank[i]}});
    j["methods"] = arr;
    json pairs = json::array();
    for (const auto& [a, b] : significant_pairs)
        pairs.push_back({{"better", avg_rank[a] < avg_rank[b] ? methods[a] : methods[b]},
                         {"worse", avg_rank[a] < avg_rank[b] ? methods[b] : methods[a]}});
    j["significant_pairs"] = pairs;
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// Linear probe
// ---------------------------------------------------------------------------

double linear_probe(const Matrix& train_x, const std::vector<int>& train_y,
                    const Matrix& test_x, const std::vector<int>& test_y,
                    const ProbeConfig& config) {
    if (train_x.rows != train_y.size() || test_x.rows != test_y.size())
        throw ContractError("linear_probe: label/row mismatch");
    if (train_x.cols != test_x.cols) throw ContractError("linear_probe: dimension mismatch");
    bool has0 = false, has1 = false;
    for (int y : train_y) {
        has0 |= (y == 0);
        has1 |= (y == 1);
    }
    if (!has0 || !has1) throw ContractError("linear_probe: both classes required in train");

    const auto [standardizer, xs] = core::standardize(train_x, train_x);
    const Matrix ts = standardizer.transform(test_x);
    const std::size_t n = xs.rows, d = xs.cols;

    // Step size from the logistic-loss curvature bound 0.25 * lambda_max(X'X/n).
    Matrix g = kernels::gram(xs);
    for (double& v : g.data) v /= static_cast<double>(n);
    const double lmax = linalg::sym_eig(g).values[0];
    const double lr = 1.0 / (0.25 * lmax + config.l2);

    std::vector<double> w(d, 0.0);
    double b = 0.0;
    std::vector<double> margin(n), grad(d);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = 0; i < n; ++i)
            margin[i] = 1.0 / (1.0 + std::exp(-(dot(xs.row(i), w.data(), d) + b))) -
                        static_cast<double>(train_y[i]);
        std::fill(grad.begin(), grad.end(), 0.0);
        double gb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* xi = xs.row(i);
            for (std::size_t j = 0; j < d; ++j) grad[j] += margin[i] * xi[j];
            gb += margin[i];
        }
        gb /= static_cast<double>(n);
        double gnorm = gb * gb;
        for (std::size_t j = 0; j < d; ++j) {
            grad[j] = grad[j] / static_cast<double>(n) + config.l2 * w[j];
            gnorm += grad[j] * grad[j];
        }
        if (std::sqrt(gnorm) < config.grad_tol) break;
        for (std::size_t j = 0; j < d; ++j) w[j] -= lr * grad[j];
        b -= lr * gb;
    }

    std::vector<double> prob(ts.rows);
    for (std::size_t i = 0; i < ts.rows; ++i)
        prob[i] = 1.0 / (1.0 + std::exp(-(dot(ts.row(i), w.data(), d) + b)));
    return auroc(prob, test_y);
}

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

std::vector<MethodSummary> summarize(const ScoreTable& table) {
    std::vector<MethodSummary> out;
    for (std::size_t j = 0; j < table.methods.size(); ++j) {
        std::vector<double> present;
        for (const auto& row : table.values)
            if (!std::isnan(row[j])) present.push_back(row[j]);
        MethodSummary s;
        s.method = table.methods[j];
        s.count = present.size();
        if (!present.empty()) {
            s.mean = std::accumulate(present.begin(), present.end(), 0.0) /
                     static_cast<double>(present.size());
            std::sort(present.begin(), present.end());
            const std::size_t m = present.size();
            s.median = m % 2 == 1 ? present[m / 2]
                                  : 0.5 * (present[m / 2 - 1] + present[m / 2]);
        }
        out.push_back(std::move(s));
    }
    return out;
}

EvalReport make_report(const ScoreTable& table, double alpha) {
    EvalReport rep;
    rep.table = table;
    rep.summaries = summarize(table);
    rep.ranks = rank_compare(table, alpha);
    return rep;
}

std::string EvalReport::to_json() const {
    json j;
    j["methods"] = table.methods;
    json rows = json::array();
    for (std::size_t r = 0; r < table.row_labels.size(); ++r) {
        json row;
        row["label"] = table.row_labels[r];
        json cells = json::object();
        for (std::size_t c = 0; c < table.methods.size(); ++c)
            if (!std::isnan(table.values[r][c])) cells[table.methods[c]] = table.values[r][c];
        row["auroc"] = cells;
        rows.push_back(row);
    }
    j["rows"] = rows;
    json sums = json::array();
    for (const auto& s : summaries)
        sums.push_back(
            {{"method", s.method}, {"mean", s.mean}, {"median", s.median}, {"count", s.count}});
    j["summaries"] = sums;
    j["ranks"] = json::parse(ranks.to_json());
    j["plots"] = plot_files;
    return j.dump(2);
}

}  // namespace tadlab::eval
