#include "tadlab/pretext.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <json.hpp>

#include "tadlab/io.hpp"
#include "tadlab/linalg.hpp"

namespace tadlab::pretext {
namespace {

using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t uniform_index(Rng& rng, std::size_t n) {
    const auto k = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n));
    return k < n ? k : n - 1;
}

// Saturating count of permutations / mask patterns for feasibility checks.
std::size_t saturating_factorial(std::size_t d) {
    std::size_t f = 1;
    for (std::size_t i = 2; i <= d; ++i) {
        if (f > std::numeric_limits<std::size_t>::max() / i) return std::numeric_limits<std::size_t>::max();
        f *= i;
    }
    return f;
}

std::size_t saturating_binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    std::size_t r = 1;
    for (std::size_t i = 1; i <= k; ++i) {
        if (r > std::numeric_limits<std::size_t>::max() / (n - k + i)) return std::numeric_limits<std::size_t>::max();
        r = r * (n - k + i) / i;
    }
    return r;
}

Matrix identity_matrix(std::size_t d) {
    Matrix m(d, d);
    for (std::size_t i = 0; i < d; ++i) m(i, i) = 1.0;
    return m;
}

// Orthonormalized seeded Gaussian with the positive-diagonal convention.
Matrix random_rotation(std::size_t d, Rng& rng) {
    Matrix g(d, d);
    for (double& v : g.data) v = rng.gaussian();
    Matrix q = linalg::orthonormalize_columns(g);
    for (std::size_t j = 0; j < d; ++j)
        if (q(j, j) < 0.0)
            for (std::size_t i = 0; i < d; ++i) q(i, j) = -q(i, j);
    return q;
}

std::size_t ceil_count(double rate, std::size_t d) {
    return static_cast<std::size_t>(std::ceil(rate * static_cast<double>(d)));
}

}  // namespace

// ===========================================================================
// Names and kind predicates
// ===========================================================================

PretextKind pretext_kind_from_string(const std::string& name) {
    if (name == "rotation") return PretextKind::kRotation;
    if (name == "shuffle") return PretextKind::kShuffle;
    if (name == "mask_class") return PretextKind::kMaskClass;
    if (name == "mask_columns") return PretextKind::kMaskColumns;
    if (name == "autoencoder") return PretextKind::kAutoencoder;
    if (name == "contrastive_rotation") return PretextKind::kContrastiveRotation;
    if (name == "contrastive_shuffle") return PretextKind::kContrastiveShuffle;
    if (name == "contrastive_mask") return PretextKind::kContrastiveMask;
    if (name == "eicl") return PretextKind::kEicl;
    throw ContractError("unknown pretext kind: " + name);
}

std::string to_string(PretextKind kind) {
    switch (kind) {
        case PretextKind::kRotation: return "rotation";
        case PretextKind::kShuffle: return "shuffle";
        case PretextKind::kMaskClass: return "mask_class";
        case PretextKind::kMaskColumns: return "mask_columns";
        case PretextKind::kAutoencoder: return "autoencoder";
        case PretextKind::kContrastiveRotation: return "contrastive_rotation";
        case PretextKind::kContrastiveShuffle: return "contrastive_shuffle";
        case PretextKind::kContrastiveMask: return "contrastive_mask";
        case PretextKind::kEicl: return "eicl";
    }
    throw ContractError("unknown pretext kind");
}

bool is_classification(PretextKind kind) {
    return kind == PretextKind::kRotation || kind == PretextKind::kShuffle ||
           kind == PretextKind::kMaskClass;
}

bool is_contrastive(PretextKind kind) {
    return kind == PretextKind::kContrastiveRotation ||
           kind == PretextKind::kContrastiveShuffle || kind == PretextKind::kContrastiveMask;
}

bool uses_swap_corruption(PretextKind kind) {
    return kind == PretextKind::kMaskClass || kind == PretextKind::kMaskColumns ||
           kind == PretextKind::kAutoencoder || kind == PretextKind::kContrastiveMask;
}

// ===========================================================================
// build_task
// ===========================================================================

namespace {

std::vector<Matrix> build_rotations(std::size_t d, std::size_t c, Rng& rng) {
    std::vector<Matrix> out;
    out.push_back(identity_matrix(d));
    std::size_t attempts = 0;
    while (out.size() < c) {
        if (++attempts > 64 * c)
            throw ContractError("rotation task: cannot draw enough distinct orthonormal matrices");
        Matrix q = random_rotation(d, rng);
        bool fresh = true;
        for (const auto& seen : out) fresh &= !(q == seen);
        if (fresh) out.push_back(std::move(q));
    }
    return out;
}

std::vector<std::vector<std::size_t>> build_permutations(std::size_t d, std::size_t c, Rng& rng) {
    if (c > saturating_factorial(d))
        throw ContractError("shuffle task: more classes than distinct permutations");
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> idx(d);
    std::iota(idx.begin(), idx.end(), 0);
    out.push_back(idx);
    std::set<std::vector<std::size_t>> seen{idx};
    std::size_t attempts = 0;
    while (out.size() < c) {
        if (++attempts > 1000 * c)
            throw ContractError("shuffle task: cannot draw enough distinct permutations");
        auto p = idx;
        rng.shuffle(p);
        if (seen.insert(p).second) out.push_back(std::move(p));
    }
    return out;
}

std::vector<std::vector<std::uint8_t>> build_patterns(std::size_t d, std::size_t c,
                                                      std::size_t ones, Rng& rng) {
    if (c > saturating_binomial(d, ones))
        throw ContractError("mask task: more classes than distinct mask patterns");
    std::vector<std::vector<std::uint8_t>> out;
    std::set<std::vector<std::uint8_t>> seen;
    std::size_t attempts = 0;
    while (out.size() < c) {
        if (++attempts > 1000 * c)
            throw ContractError("mask task: cannot draw enough distinct mask patterns");
        const auto cols = rng.sample_without_replacement(d, ones);
        std::vector<std::uint8_t> pat(d, 0);
        for (std::size_t j : cols) pat[j] = 1;
        if (seen.insert(pat).second) out.push_back(std::move(pat));
    }
    return out;
}

}  // namespace

PretextTask build_task(PretextKind kind, std::size_t d, const TaskConfig& config,
                       std::uint64_t seed) {
    if (d < 1) throw ContractError("build_task: d must be positive");
    PretextTask task;
    task.kind = kind;
    task.d = d;
    task.seed = seed;
    task.rate = config.rate;
    Rng rng(seed);

    const bool needs_classes = is_classification(kind) ||
                               kind == PretextKind::kContrastiveRotation ||
                               kind == PretextKind::kContrastiveShuffle;
    if (needs_classes) {
        if (config.n_classes < 2) throw ContractError("build_task: need at least 2 classes");
        task.n_classes = config.n_classes;
    }

    const bool needs_rate = kind == PretextKind::kMaskClass ||
                            kind == PretextKind::kMaskColumns ||
                            kind == PretextKind::kAutoencoder ||
                            kind == PretextKind::kContrastiveMask;
    if (needs_rate && !(config.rate > 0.0 && config.rate < 1.0))
        throw ContractError("build_task: mask rate must lie in (0, 1)");

    switch (kind) {
        case PretextKind::kRotation:
        case PretextKind::kContrastiveRotation:
            task.rotations = build_rotations(d, task.n_classes, rng);
            break;
        case PretextKind::kShuffle:
        case PretextKind::kContrastiveShuffle:
            task.permutations = build_permutations(d, task.n_classes, rng);
            break;
        case PretextKind::kMaskClass:
            task.patterns = build_patterns(d, task.n_classes, ceil_count(task.rate, d), rng);
            break;
        case PretextKind::kMaskColumns:
        case PretextKind::kAutoencoder:
        case PretextKind::kContrastiveMask:
            break;  // per-row masks are drawn at batch time
        case PretextKind::kEicl: {
            if (d < 2) throw ContractError("eicl: needs at least 2 columns");
            std::size_t w = config.window;
            if (w == 0) w = std::min(std::max<std::size_t>(2, d / 4), d - 1);
            if (w < 1 || w >= d) throw ContractError("eicl: window must satisfy 1 <= k_w < d");
            task.window = w;
            break;
        }
    }
    return task;
}

std::size_t mask_width(const PretextTask& task) { return ceil_count(task.rate, task.d); }

std::size_t autoencoder_width(const PretextTask& task) {
    return static_cast<std::size_t>(std::floor(task.rate * static_cast<double>(task.d)));
}

std::size_t default_d_out(const PretextTask& task) {
    switch (task.kind) {
        case PretextKind::kRotation:
        case PretextKind::kShuffle:
        case PretextKind::kMaskClass:
            return task.n_classes;
        case PretextKind::kMaskColumns:
        case PretextKind::kAutoencoder:
            return task.d;
        case PretextKind::kContrastiveRotation:
        case PretextKind::kContrastiveShuffle:
        case PretextKind::kContrastiveMask:
        case PretextKind::kEicl:
            return 128;
    }
    throw ContractError("unknown pretext kind");
}

std::vector<nn::LossKind> compatible_losses(PretextKind kind) {
    if (is_classification(kind))
        return {nn::LossKind::kCrossEntropy, nn::LossKind::kArpl, nn::LossKind::kAam};
    if (kind == PretextKind::kMaskColumns) return {nn::LossKind::kBceMultilabel};
    if (kind == PretextKind::kAutoencoder) return {nn::LossKind::kMse, nn::LossKind::kMae};
    if (is_contrastive(kind)) return {nn::LossKind::kInfoNce, nn::LossKind::kVicReg};
    return {};  // eicl carries its own loss
}

// ===========================================================================
// Serialization
// ===========================================================================

void save_task(const PretextTask& task, const std::string& json_path,
               const std::string& bin_path) {
    json j;
    j["kind"] = to_string(task.kind);
    j["d"] = task.d;
    j["n_classes"] = task.n_classes;
    j["rate"] = task.rate;
    j["window"] = task.window;
    j["seed"] = task.seed;
    j["permutations"] = task.permutations;
    j["patterns"] = task.patterns;
    j["n_rotations"] = task.rotations.size();
    io::write_file(json_path, j.dump(2));

    if (!task.rotations.empty()) {
        std::ofstream os(bin_path, std::ios::binary);
        if (!os) throw ParseError("cannot open rotation file for writing: " + bin_path);
        io::write_u64(os, task.rotations.size());
        for (const auto& q : task.rotations) io::write_matrix(os, q);
    }
}

PretextTask load_task(const std::string& json_path, const std::string& bin_path) {
    json j;
    try {
        j = json::parse(io::read_file(json_path));
    } catch (const json::exception& e) {
        throw ParseError(std::string("task json: ") + e.what());
    }
    PretextTask task;
    try {
        task.kind = pretext_kind_from_string(j.at("kind").get<std::string>());
        task.d = j.at("d").get<std::size_t>();
        task.n_classes = j.at("n_classes").get<std::size_t>();
        task.rate = j.at("rate").get<double>();
        task.window = j.at("window").get<std::size_t>();
        task.seed = j.at("seed").get<std::uint64_t>();
        task.permutations = j.at("permutations").get<std::vector<std::vector<std::size_t>>>();
        task.patterns = j.at("patterns").get<std::vector<std::vector<std::uint8_t>>>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("task json: ") + e.what());
    }
    const auto n_rot = j.at("n_rotations").get<std::size_t>();
    if (n_rot > 0) {
        std::ifstream is(bin_path, std::ios::binary);
        if (!is) throw ParseError("cannot open rotation file: " + bin_path);
        const std::uint64_t count = io::read_u64(is);
        if (count != n_rot) throw SchemaError("rotation file does not match the task json");
        for (std::uint64_t i = 0; i < count; ++i) task.rotations.push_back(io::read_matrix(is));
    }
    return task;
}

// ===========================================================================
// make_batch
// ===========================================================================

namespace {

void swap_corrupt_row(double* row, const Matrix& pool, const std::vector<std::size_t>& cols,
                      Rng& rng) {
    const std::size_t donor = uniform_index(rng, pool.rows);
    for (std::size_t j : cols) row[j] = pool(donor, j);
}

Matrix rotate_rows(const Matrix& x, const std::vector<Matrix>& rotations,
                   const std::vector<int>& classes) {
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const Matrix& q = rotations[static_cast<std::size_t>(classes[i])];
        for (std::size_t j = 0; j < x.cols; ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < x.cols; ++t) s += x(i, t) * q(t, j);
            out(i, j) = s;
        }
    }
    return out;
}

Matrix permute_rows(const Matrix& x, const std::vector<std::vector<std::size_t>>& perms,
                    const std::vector<int>& classes) {
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const auto& p = perms[static_cast<std::size_t>(classes[i])];
        for (std::size_t j = 0; j < x.cols; ++j) out(i, j) = x(i, p[j]);
    }
    return out;
}

std::vector<int> draw_classes(Rng& rng, std::size_t rows, std::size_t c) {
    std::vector<int> cls(rows);
    for (auto& v : cls) v = static_cast<int>(uniform_index(rng, c));
    return cls;
}

// One contrastive view: class-conditioned transform or fresh-mask corruption.
Matrix contrastive_view(const PretextTask& task, const Matrix& x, const Matrix& pool, Rng& rng) {
    switch (task.kind) {
        case PretextKind::kContrastiveRotation:
            return rotate_rows(x, task.rotations, draw_classes(rng, x.rows, task.n_classes));
        case PretextKind::kContrastiveShuffle:
            return permute_rows(x, task.permutations, draw_classes(rng, x.rows, task.n_classes));
        case PretextKind::kContrastiveMask: {
            Matrix out = x;
            const std::size_t m = mask_width(task);
            for (std::size_t i = 0; i < out.rows; ++i) {
                const auto cols = rng.sample_without_replacement(task.d, m);
                swap_corrupt_row(out.row(i), pool, cols, rng);
            }
            return out;
        }
        default:
            throw ContractError("contrastive view: wrong task kind");
    }
}

}  // namespace

std::size_t eicl_window_count(const PretextTask& task) {
    if (task.kind != PretextKind::kEicl) throw ContractError("eicl window count: wrong kind");
    return task.d - task.window + 1;
}

PretextBatch make_batch(const PretextTask& task, const Matrix& x, const Matrix& train_pool,
                        Rng& rng) {
    if (x.empty()) throw ContractError("make_batch: empty batch");
    if (x.cols != task.d) throw ContractError("make_batch: batch width mismatch");
    if (uses_swap_corruption(task.kind)) {
        if (train_pool.empty()) throw ContractError("make_batch: swap corruption needs a donor pool");
        if (train_pool.cols != task.d) throw ContractError("make_batch: donor pool width mismatch");
    }

    PretextBatch out;
    switch (task.kind) {
        case PretextKind::kRotation: {
            const auto cls = draw_classes(rng, x.rows, task.n_classes);
            out.batch.x = rotate_rows(x, task.rotations, cls);
            out.batch.classes = cls;
            break;
        }
        case PretextKind::kShuffle: {
            const auto cls = draw_classes(rng, x.rows, task.n_classes);
            out.batch.x = permute_rows(x, task.permutations, cls);
            out.batch.classes = cls;
            break;
        }
        case PretextKind::kMaskClass: {
            out.batch.x = x;
            for (std::size_t i = 0; i < x.rows; ++i) {
                const auto c = uniform_index(rng, task.n_classes);
                std::vector<std::size_t> cols;
                for (std::size_t j = 0; j < task.d; ++j)
                    if (task.patterns[c][j]) cols.push_back(j);
                swap_corrupt_row(out.batch.x.row(i), train_pool, cols, rng);
                out.batch.classes.push_back(static_cast<int>(c));
            }
            break;
        }
        case PretextKind::kMaskColumns: {
            out.batch.x = x;
            out.batch.targets = Matrix(x.rows, task.d);
            const std::size_t m = mask_width(task);
            for (std::size_t i = 0; i < x.rows; ++i) {
                const auto cols = rng.sample_without_replacement(task.d, m);
                swap_corrupt_row(out.batch.x.row(i), train_pool, cols, rng);
                for (std::size_t j : cols) out.batch.targets(i, j) = 1.0;
            }
            break;
        }
        case PretextKind::kAutoencoder: {
            out.batch.targets = x;
            out.batch.x = x;
            const std::size_t m = autoencoder_width(task);
            for (std::size_t i = 0; i < x.rows && m > 0; ++i) {
                const auto cols = rng.sample_without_replacement(task.d, m);
                swap_corrupt_row(out.batch.x.row(i), train_pool, cols, rng);
            }
            break;
        }
        case PretextKind::kContrastiveRotation:
        case PretextKind::kContrastiveShuffle:
        case PretextKind::kContrastiveMask:
            out.batch.x = contrastive_view(task, x, train_pool, rng);
            out.batch.x_alt = contrastive_view(task, x, train_pool, rng);
            break;
        case PretextKind::kEicl: {
            const std::size_t k = task.window, n_s = eicl_window_count(task);
            const std::size_t comp = task.d - k;
            out.eicl_anchor = Matrix(x.rows, k);
            out.eicl_candidates = Matrix(x.rows * n_s, comp);
            for (std::size_t i = 0; i < x.rows; ++i) {
                const std::size_t start = uniform_index(rng, n_s);
                out.eicl_targets.push_back(static_cast<int>(start));
                for (std::size_t j = 0; j < k; ++j) out.eicl_anchor(i, j) = x(i, start + j);
                for (std::size_t t = 0; t < n_s; ++t) {
                    double* row = out.eicl_candidates.row(i * n_s + t);
                    std::size_t w = 0;
                    for (std::size_t j = 0; j < task.d; ++j)
                        if (j < t || j >= t + k) row[w++] = x(i, j);
                }
            }
            break;
        }
    }
    return out;
}

// ===========================================================================
// EICL training
// ===========================================================================

namespace {

// Cosine-similarity cross entropy over window positions; gradients flow into
// both branch outputs. Anchors are rows of ua; candidates rows of vb grouped
// per anchor in window order.
double eicl_loss(const Matrix& ua, const Matrix& vb, const std::vector<int>& targets, double tau,
                 Matrix* d_ua, Matrix* d_vb) {
    const std::size_t B = ua.rows, D = ua.cols, n_s = vb.rows / B;
    std::vector<double> nu(B), nv(vb.rows);
    Matrix uhat(B, D), vhat(vb.rows, D);
    for (std::size_t i = 0; i < B; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < D; ++j) s += ua(i, j) * ua(i, j);
        nu[i] = std::sqrt(s) + 1e-12;
        for (std::size_t j = 0; j < D; ++j) uhat(i, j) = ua(i, j) / nu[i];
    }
    for (std::size_t r = 0; r < vb.rows; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < D; ++j) s += vb(r, j) * vb(r, j);
        nv[r] = std::sqrt(s) + 1e-12;
        for (std::size_t j = 0; j < D; ++j) vhat(r, j) = vb(r, j) / nv[r];
    }

    if (d_ua) *d_ua = Matrix(B, D);
    if (d_vb) *d_vb = Matrix(vb.rows, D);
    double loss = 0.0;
    std::vector<double> logits(n_s), probs(n_s);
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t t = 0; t < n_s; ++t) {
            double c = 0.0;
            for (std::size_t j = 0; j < D; ++j) c += uhat(i, j) * vhat(i * n_s + t, j);
            logits[t] = c / tau;
        }
        const double m = *std::max_element(logits.begin(), logits.end());
        double zsum = 0.0;
        for (double l : logits) zsum += std::exp(l - m);
        const double log_z = std::log(zsum) + m;
        const auto y = static_cast<std::size_t>(targets[i]);
        loss += log_z - logits[y];
        if (!d_ua) continue;
        for (std::size_t t = 0; t < n_s; ++t) {
            const double p = std::exp(logits[t] - log_z);
            const double dcos = (p - (t == y ? 1.0 : 0.0)) / (static_cast<double>(B) * tau);
            const double c = logits[t] * tau;
            const std::size_t r = i * n_s + t;
            for (std::size_t j = 0; j < D; ++j) {
                (*d_ua)(i, j) += dcos * (vhat(r, j) - c * uhat(i, j)) / nu[i];
                (*d_vb)(r, j) += dcos * (uhat(i, j) - c * vhat(r, j)) / nv[r];
            }
        }
    }
    return loss / static_cast<double>(B);
}

std::vector<std::vector<std::size_t>> index_batches(std::size_t n, std::size_t batch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t stop = std::min(n, start + batch);
        if (stop - start < 2) break;
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return out;
}

}  // namespace

EiclEncoder train_eicl(const PretextTask& task, const Matrix& train_x, const Matrix& val_x,
                       const nn::TrainConfig& cfg, std::size_t n_blocks, std::size_t d_out) {
    if (task.kind != PretextKind::kEicl) throw ContractError("train_eicl: wrong task kind");
    if (train_x.rows < 2 || val_x.empty()) throw ContractError("train_eicl: empty split");
    if (train_x.cols != task.d || val_x.cols != task.d)
        throw ContractError("train_eicl: input width mismatch");

    EiclEncoder enc;
    enc.seed = cfg.seed;
    enc.best_val_loss = kInf;
    nn::Network net_a = nn::build_network(task.window, d_out, n_blocks, nn::mix_seed(cfg.seed, 0xA1));
    nn::Network net_b =
        nn::build_network(task.d - task.window, d_out, n_blocks, nn::mix_seed(cfg.seed, 0xB2));

    nn::Gradients ga, gb;
    ga.init_like(net_a, 0);
    gb.init_like(net_b, 0);
    const nn::LossSpec plain;  // packing helper only; neither branch trains arpl slots
    nn::AdamState adam;

    auto batch_loss = [&](const Matrix& rows, std::uint64_t aug_seed, bool train,
                          std::uint64_t drop_seed) {
        Rng rng(aug_seed);
        const PretextBatch pb = make_batch(task, rows, Matrix(), rng);
        const nn::Mode mode = train ? nn::Mode::kTrain : nn::Mode::kEval;
        nn::ForwardCache ca, cb;
        const auto ra = nn::forward_embed(net_a, pb.eicl_anchor, mode, nn::mix_seed(drop_seed, 1),
                                          train ? &ca : nullptr);
        const auto rb = nn::forward_embed(net_b, pb.eicl_candidates, mode,
                                          nn::mix_seed(drop_seed, 2), train ? &cb : nullptr);
        Matrix d_ua, d_vb;
        const double loss = eicl_loss(ra.output, rb.output, pb.eicl_targets, enc.tau,
                                      train ? &d_ua : nullptr, train ? &d_vb : nullptr);
        if (train) {
            ga.zero();
            gb.zero();
            nn::backward(net_a, ca, d_ua, Matrix(), ga);
            nn::backward(net_b, cb, d_vb, Matrix(), gb);
        }
        return loss;
    };

    const auto val_batches = index_batches(val_x.rows, cfg.batch);
    if (val_batches.empty()) throw ContractError("train_eicl: validation set too small");
    auto validation_loss = [&]() {
        double total = 0.0;
        std::size_t rows = 0;
        for (std::size_t b = 0; b < val_batches.size(); ++b) {
            const Matrix rows_x = val_x.take_rows(val_batches[b]);
            total += batch_loss(rows_x, nn::mix_seed(cfg.seed, 0x7a11, b), false, 0) *
                     static_cast<double>(rows_x.rows);
            rows += rows_x.rows;
        }
        return total / static_cast<double>(rows);
    };

    std::vector<std::size_t> order(train_x.rows);
    std::iota(order.begin(), order.end(), 0);
    std::size_t stale = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng perm_rng(nn::mix_seed(cfg.seed, 0x0e0c4, epoch));
        perm_rng.shuffle(order);

        double epoch_loss = 0.0;
        std::size_t epoch_rows = 0, n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch);
            if (stop - start < 2) break;
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
            const Matrix rows_x = train_x.take_rows(idx);
            const double l = batch_loss(rows_x, nn::mix_seed(cfg.seed, epoch, n_batches, 1), true,
                                        nn::mix_seed(cfg.seed, epoch, n_batches, 2));
            if (!std::isfinite(l))
                throw NumericError("training loss non-finite at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(n_batches));
            auto params = nn::pack_params(net_a, plain);
            auto grads = nn::pack_grads(ga);
            {
                const auto pb = nn::pack_params(net_b, plain);
                const auto gbv = nn::pack_grads(gb);
                params.insert(params.end(), pb.begin(), pb.end());
                grads.insert(grads.end(), gbv.begin(), gbv.end());
            }
            nn::adam_step(params, grads, adam, cfg.lr);
            const std::size_t na = nn::pack_params(net_a, plain).size();
            nn::LossSpec dummy;
            nn::unpack_params(net_a, dummy,
                              std::vector<double>(params.begin(),
                                                  params.begin() + static_cast<std::ptrdiff_t>(na)));
            nn::unpack_params(net_b, dummy,
                              std::vector<double>(params.begin() + static_cast<std::ptrdiff_t>(na),
                                                  params.end()));
            epoch_loss += l * static_cast<double>(rows_x.rows);
            epoch_rows += rows_x.rows;
            ++n_batches;
        }
        if (n_batches == 0) throw ContractError("train_eicl: training set too small for this batch");
        epoch_loss /= static_cast<double>(epoch_rows);

        const double vl = validation_loss();
        enc.curve.push_back({epoch_loss, vl});
        if (vl < enc.best_val_loss) {
            enc.best_val_loss = vl;
            enc.net_a = net_a;
            enc.net_b = net_b;
            stale = 0;
        } else {
            ++stale;
        }
        if (stale >= cfg.patience) break;
    }
    return enc;
}

Matrix eicl_embeddings(const EiclEncoder& enc, const PretextTask& task, const Matrix& x) {
    if (task.kind != PretextKind::kEicl) throw ContractError("eicl embeddings: wrong task kind");
    if (x.cols != task.d) throw ContractError("eicl embeddings: input width mismatch");
    const std::size_t k = task.window, n_s = eicl_window_count(task);
    Matrix mean(x.rows, nn::Network::kHidden);
    nn::Network net = enc.net_a;
    for (std::size_t s = 0; s < n_s; ++s) {
        Matrix window(x.rows, k);
        for (std::size_t i = 0; i < x.rows; ++i)
            for (std::size_t j = 0; j < k; ++j) window(i, j) = x(i, s + j);
        const Matrix emb = nn::forward_embed(net, window, nn::Mode::kEval).embedding;
        for (std::size_t t = 0; t < mean.data.size(); ++t) mean.data[t] += emb.data[t];
    }
    for (double& v : mean.data) v /= static_cast<double>(n_s);
    return mean;
}

// ===========================================================================
// Unified facade
// ===========================================================================

double EncoderArtifact::best_val_loss() const {
    return is_eicl() ? pair.best_val_loss : mono.best_val_loss;
}

const std::vector<nn::EpochStats>& EncoderArtifact::curve() const {
    return is_eicl() ? pair.curve : mono.curve;
}

Matrix EncoderArtifact::embed(const Matrix& x) const {
    if (is_eicl()) return eicl_embeddings(pair, task, x);
    return nn::extract_embeddings(mono, x);
}

void save_artifact(const EncoderArtifact& art, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::string base = dir + "/";
    save_task(art.task, base + "task.json", base + "task.bin");

    json j;
    j["loss"] = nn::to_string(art.loss_kind);
    j["eicl"] = art.is_eicl();
    j["best_val_loss"] = art.best_val_loss();
    json curve = json::array();
    for (const auto& e : art.curve()) curve.push_back({e.train_loss, e.val_loss});
    j["curve"] = curve;
    if (art.is_eicl()) {
        j["tau"] = art.pair.tau;
        j["seed"] = art.pair.seed;
        nn::save_network(art.pair.net_a, base + "net_a.bin");
        nn::save_network(art.pair.net_b, base + "net_b.bin");
    } else {
        j["task_name"] = art.mono.task_name;
        j["seed"] = art.mono.seed;
        nn::save_network(art.mono.net, base + "net.bin");
    }
    io::write_file(base + "encoder.json", j.dump(2));
}

EncoderArtifact load_artifact(const std::string& dir) {
    const std::string base = dir + "/";
    EncoderArtifact art;
    art.task = load_task(base + "task.json", base + "task.bin");

    json j;
    try {
        j = json::parse(io::read_file(base + "encoder.json"));
    } catch (const json::exception& e) {
        throw ParseError(std::string("encoder json: ") + e.what());
    }
    try {
        art.loss_kind = nn::loss_kind_from_string(j.at("loss").get<std::string>());
        if (j.at("eicl").get<bool>() != art.is_eicl())
            throw SchemaError("encoder json disagrees with the task kind");
        std::vector<nn::EpochStats> curve;
        for (const auto& e : j.at("curve"))
            curve.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
        const double best = j.at("best_val_loss").get<double>();
        const auto seed = j.at("seed").get<std::uint64_t>();
        if (art.is_eicl()) {
            art.pair.tau = j.at("tau").get<double>();
            art.pair.seed = seed;
            art.pair.best_val_loss = best;
            art.pair.curve = curve;
            art.pair.net_a = nn::load_network(base + "net_a.bin");
            art.pair.net_b = nn::load_network(base + "net_b.bin");
        } else {
            art.mono.task_name = j.at("task_name").get<std::string>();
            art.mono.seed = seed;
            art.mono.best_val_loss = best;
            art.mono.curve = curve;
            art.mono.loss.kind = art.loss_kind;
            art.mono.net = nn::load_network(base + "net.bin");
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("encoder json: ") + e.what());
    }
    return art;
}

EncoderArtifact train_pretext(const PretextTask& task, nn::LossKind loss, const Matrix& train_x,
                              const Matrix& val_x, const nn::TrainConfig& cfg,
                              std::size_t n_blocks, std::size_t d_out_override) {
    EncoderArtifact art;
    art.task = task;
    art.loss_kind = loss;
    const std::size_t d_out = d_out_override ? d_out_override : default_d_out(task);

    if (task.kind == PretextKind::kEicl) {
        art.pair = train_eicl(task, train_x, val_x, cfg, n_blocks, d_out);
        return art;
    }

    const auto allowed = compatible_losses(task.kind);
    if (std::find(allowed.begin(), allowed.end(), loss) == allowed.end())
        throw ContractError("train_pretext: loss kind incompatible with task " +
                            to_string(task.kind));

    nn::LossSpec spec;
    spec.kind = loss;
    if (loss == nn::LossKind::kArpl)
        nn::init_arpl(spec, task.n_classes, nn::mix_seed(cfg.seed, 0xa59));

    const nn::Network net =
        nn::build_network(task.d, d_out, n_blocks, nn::mix_seed(cfg.seed, 0x4e7));
    const Matrix pool = train_x;  // donors always come from the training split
    const PretextTask task_copy = task;
    nn::BatchFn fn = [task_copy, pool](const Matrix& rows, std::uint64_t aug_seed) {
        Rng rng(aug_seed);
        return make_batch(task_copy, rows, pool, rng).batch;
    };
    art.mono = nn::train_encoder(net, spec, train_x, val_x, fn, cfg, to_string(task.kind));
    return art;
}

// ===========================================================================
// Random search
// ===========================================================================

SearchResult random_search(const PretextTask& task, nn::LossKind loss, const Matrix& train_x,
                           const Matrix& val_x, std::uint64_t seed, std::size_t n_draws,
                           std::size_t max_epochs, std::size_t patience) {
    if (n_draws < 1) throw ContractError("random_search: need at least one draw");
    SearchResult res;
    double best = kInf;
    for (std::size_t i = 0; i < n_draws; ++i) {
        Rng rng(nn::mix_seed(seed, 0xD4a3, i));
        SearchDraw draw;
        draw.lr = std::pow(10.0, -4.0 + 2.0 * rng.uniform());
        draw.batch = rng.uniform() < 0.5 ? 64 : 256;
        draw.blocks = rng.uniform() < 0.5 ? 2 : 3;
        draw.d_out = default_d_out(task);
        if (is_contrastive(task.kind) || task.kind == PretextKind::kEicl) {
            const std::size_t widths[] = {128, 256, 512};
            draw.d_out = widths[uniform_index(rng, 3)];
        }

        nn::TrainConfig cfg;
        cfg.lr = draw.lr;
        cfg.batch = draw.batch;
        cfg.epochs = max_epochs;
        cfg.patience = patience;
        cfg.seed = nn::mix_seed(seed, 0x5eed, i);
        EncoderArtifact art =
            train_pretext(task, loss, train_x, val_x, cfg, draw.blocks, draw.d_out);
        draw.val_loss = art.best_val_loss();
        res.draws.push_back(draw);
        if (draw.val_loss < best) {
            best = draw.val_loss;
            res.best = std::move(art);
            res.best_draw = i;
        }
    }
    return res;
}

}  // namespace tadlab::pretext
