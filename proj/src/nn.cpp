#include "tadlab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>

#include "tadlab/io.hpp"
#include "tadlab/kernels.hpp"
#include "tadlab/rng.hpp"

namespace tadlab::nn {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_finite(const Matrix& m, const char* layer) {
    if (!m.all_finite()) throw NumericError(std::string("non-finite activation in ") + layer);
}

// y = x W + b over rows.
Matrix linear(const Matrix& x, const Matrix& w, const std::vector<double>& b) {
    Matrix y = kernels::matmul(x, w);
    for (std::size_t i = 0; i < y.rows; ++i)
        for (std::size_t j = 0; j < y.cols; ++j) y(i, j) += b[j];
    return y;
}

std::vector<double> col_sums(const Matrix& m) {
    std::vector<double> s(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) s[j] += m(i, j);
    return s;
}

void add_into(Matrix& acc, const Matrix& m) {
    for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += m.data[i];
}

double sq_norm_row(const double* p, std::size_t d) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += p[j] * p[j];
    return s;
}

}  // namespace

// ===========================================================================
// Loss kind names
// ===========================================================================

LossKind loss_kind_from_string(const std::string& name) {
    if (name == "cross_entropy") return LossKind::kCrossEntropy;
    if (name == "arpl") return LossKind::kArpl;
    if (name == "aam") return LossKind::kAam;
    if (name == "bce_multilabel") return LossKind::kBceMultilabel;
    if (name == "mse") return LossKind::kMse;
    if (name == "mae") return LossKind::kMae;
    if (name == "infonce") return LossKind::kInfoNce;
    if (name == "vicreg") return LossKind::kVicReg;
    throw ContractError("unknown loss kind: " + name);
}

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::kCrossEntropy: return "cross_entropy";
        case LossKind::kArpl: return "arpl";
        case LossKind::kAam: return "aam";
        case LossKind::kBceMultilabel: return "bce_multilabel";
        case LossKind::kMse: return "mse";
        case LossKind::kMae: return "mae";
        case LossKind::kInfoNce: return "infonce";
        case LossKind::kVicReg: return "vicreg";
    }
    throw ContractError("unknown loss kind");
}

bool is_contrastive(LossKind kind) {
    return kind == LossKind::kInfoNce || kind == LossKind::kVicReg;
}

// ===========================================================================
// Builder
// ===========================================================================

namespace {

void init_linear(Rng& rng, Matrix& w, std::vector<double>& b, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w.data) v = (2.0 * rng.uniform() - 1.0) * bound;
    for (double& v : b) v = (2.0 * rng.uniform() - 1.0) * bound;
}

}  // namespace

Network build_network(std::size_t d_in, std::size_t d_out, std::size_t n_blocks,
                      std::uint64_t seed) {
    if (d_in < 1 || d_out < 1 || n_blocks < 1)
        throw ContractError("build_network: d_in, d_out, n_blocks must be positive");
    Network net;
    net.d_in = d_in;
    net.d_out = d_out;
    const std::size_t h = Network::kHidden;
    Rng rng(seed);

    net.stem_w = Matrix(d_in, h);
    net.stem_b.assign(h, 0.0);
    init_linear(rng, net.stem_w, net.stem_b, d_in);

    net.blocks.resize(n_blocks);
    for (auto& blk : net.blocks) {
        blk.w = Matrix(h, h);
        blk.b.assign(h, 0.0);
        init_linear(rng, blk.w, blk.b, h);
        blk.bn.gamma.assign(h, 1.0);
        blk.bn.beta.assign(h, 0.0);
        blk.bn.running_mean.assign(h, 0.0);
        blk.bn.running_var.assign(h, 1.0);
    }

    net.head_w = Matrix(h, d_out);
    net.head_b.assign(d_out, 0.0);
    init_linear(rng, net.head_w, net.head_b, h);
    return net;
}

std::size_t parameter_count(const Network& net) {
    const std::size_t h = Network::kHidden;
    std::size_t n = net.d_in * h + h;                       // stem
    n += net.blocks.size() * (h * h + h + 2 * h);           // linear + BN affine
    n += h * net.d_out + net.d_out;                         // head
    return n;
}

namespace {

void write_vec(std::ostream& os, const std::vector<double>& v) {
    io::write_u64(os, v.size());
    io::write_f64_block(os, v.data(), v.size());
}

std::vector<double> read_vec(std::istream& is, std::size_t expect) {
    const std::uint64_t n = io::read_u64(is);
    if (n != expect) throw ParseError("network file: vector length mismatch");
    std::vector<double> v(n);
    io::read_f64_block(is, v.data(), n);
    return v;
}

Matrix read_mat(std::istream& is, std::size_t rows, std::size_t cols) {
    Matrix m = io::read_matrix(is);
    if (m.rows != rows || m.cols != cols) throw ParseError("network file: matrix shape mismatch");
    return m;
}

}  // namespace

void save_network(const Network& net, const std::string& path) {
    std::ostringstream os(std::ios::binary);
    io::write_u64(os, net.d_in);
    io::write_u64(os, net.d_out);
    io::write_u64(os, net.blocks.size());
    const double scalars[3] = {net.dropout, net.bn_eps, net.bn_momentum};
    io::write_f64_block(os, scalars, 3);
    io::write_matrix(os, net.stem_w);
    write_vec(os, net.stem_b);
    for (const Block& blk : net.blocks) {
        io::write_matrix(os, blk.w);
        write_vec(os, blk.b);
        write_vec(os, blk.bn.gamma);
        write_vec(os, blk.bn.beta);
        write_vec(os, blk.bn.running_mean);
        write_vec(os, blk.bn.running_var);
    }
    io::write_matrix(os, net.head_w);
    write_vec(os, net.head_b);
    io::write_file(path, os.str());
}

Network load_network(const std::string& path) {
    std::istringstream is(io::read_file(path), std::ios::binary);
    Network net;
    net.d_in = io::read_u64(is);
    net.d_out = io::read_u64(is);
    const std::uint64_t n_blocks = io::read_u64(is);
    const std::size_t h = Network::kHidden;
    if (net.d_in == 0 || net.d_out == 0) throw ParseError("network file: zero width");
    double scalars[3];
    io::read_f64_block(is, scalars, 3);
    net.dropout = scalars[0];
    net.bn_eps = scalars[1];
    net.bn_momentum = scalars[2];
    net.stem_w = read_mat(is, net.d_in, h);
    net.stem_b = read_vec(is, h);
    net.blocks.resize(n_blocks);
    for (Block& blk : net.blocks) {
        blk.w = read_mat(is, h, h);
        blk.b = read_vec(is, h);
        blk.bn.gamma = read_vec(is, h);
        blk.bn.beta = read_vec(is, h);
        blk.bn.running_mean = read_vec(is, h);
        blk.bn.running_var = read_vec(is, h);
    }
    net.head_w = read_mat(is, h, net.d_out);
    net.head_b = read_vec(is, net.d_out);
    if (!is) throw ParseError("network file: truncated");
    return net;
}

// ===========================================================================
// Forward
// ===========================================================================

ForwardResult forward_embed(Network& net, const Matrix& x, Mode mode, std::uint64_t drop_seed,
                            ForwardCache* cache) {
    if (x.cols != net.d_in) throw ContractError("forward: input width mismatch");
    if (x.empty()) throw ContractError("forward: empty batch");
    if (!x.all_finite()) throw NumericError("non-finite activation in input");
    const std::size_t B = x.rows, h = Network::kHidden;
    const bool train = (mode == Mode::kTrain);
    if (train && B < 2) throw ContractError("forward: train mode needs a batch of at least 2");

    if (cache) {
        cache->mode = mode;
        cache->input = x;
        cache->blocks.assign(net.blocks.size(), {});
    }
    Rng drop_rng(drop_seed);

    Matrix hcur = linear(x, net.stem_w, net.stem_b);
    check_finite(hcur, "stem");

    for (std::size_t l = 0; l < net.blocks.size(); ++l) {
        Block& blk = net.blocks[l];
        BlockCache* bc = cache ? &cache->blocks[l] : nullptr;
        if (bc) bc->input = hcur;

        Matrix z = linear(hcur, blk.w, blk.b);

        // Batch normalization: batch statistics in train mode, running in eval.
        Matrix zhat(B, h);
        std::vector<double> inv_std(h);
        if (train) {
            for (std::size_t j = 0; j < h; ++j) {
                double mean = 0.0;
                for (std::size_t i = 0; i < B; ++i) mean += z(i, j);
                mean /= static_cast<double>(B);
                double var = 0.0;
                for (std::size_t i = 0; i < B; ++i) {
                    const double c = z(i, j) - mean;
                    var += c * c;
                }
                var /= static_cast<double>(B);
                inv_std[j] = 1.0 / std::sqrt(var + net.bn_eps);
                for (std::size_t i = 0; i < B; ++i) zhat(i, j) = (z(i, j) - mean) * inv_std[j];
                blk.bn.running_mean[j] =
                    (1.0 - net.bn_momentum) * blk.bn.running_mean[j] + net.bn_momentum * mean;
                blk.bn.running_var[j] =
                    (1.0 - net.bn_momentum) * blk.bn.running_var[j] + net.bn_momentum * var;
            }
        } else {
            for (std::size_t j = 0; j < h; ++j) {
                inv_std[j] = 1.0 / std::sqrt(blk.bn.running_var[j] + net.bn_eps);
                for (std::size_t i = 0; i < B; ++i)
                    zhat(i, j) = (z(i, j) - blk.bn.running_mean[j]) * inv_std[j];
            }
        }

        Matrix act(B, h);
        for (std::size_t i = 0; i < B; ++i)
            for (std::size_t j = 0; j < h; ++j)
                act(i, j) = blk.bn.gamma[j] * zhat(i, j) + blk.bn.beta[j];

        Matrix branch(B, h);
        Matrix mask;
        const bool use_dropout = train && net.dropout > 0.0;
        if (use_dropout) {
            mask = Matrix(B, h);
            const double keep = 1.0 - net.dropout;
            for (double& v : mask.data) v = drop_rng.uniform() < keep ? 1.0 / keep : 0.0;
        }
        for (std::size_t i = 0; i < B * h; ++i) {
            const double r = act.data[i] > 0.0 ? act.data[i] : 0.0;
            branch.data[i] = use_dropout ? r * mask.data[i] : r;
        }

        if (bc) {
            bc->zhat = zhat;
            bc->act = act;
            bc->branch = branch;
            bc->drop_mask = mask;
            bc->inv_std = inv_std;
        }

        for (std::size_t i = 0; i < B * h; ++i) hcur.data[i] += branch.data[i];
        check_finite(hcur, ("block " + std::to_string(l)).c_str());
    }

    ForwardResult out;
    out.embedding = hcur;
    out.output = linear(hcur, net.head_w, net.head_b);
    check_finite(out.output, "head");
    if (cache) {
        cache->embedding = out.embedding;
        cache->output = out.output;
    }
    return out;
}

// ===========================================================================
// Backward
// ===========================================================================

void Gradients::init_like(const Network& net, std::size_t n_points) {
    const std::size_t h = Network::kHidden;
    stem_w = Matrix(net.d_in, h);
    stem_b.assign(h, 0.0);
    blocks.assign(net.blocks.size(), {});
    for (auto& b : blocks) {
        b.w = Matrix(h, h);
        b.b.assign(h, 0.0);
        b.gamma.assign(h, 0.0);
        b.beta.assign(h, 0.0);
    }
    head_w = Matrix(h, net.d_out);
    head_b.assign(net.d_out, 0.0);
    points = n_points ? Matrix(n_points, h) : Matrix();
    radius = 0.0;
}

void Gradients::zero() {
    auto z = [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); };
    z(stem_w.data);
    z(stem_b);
    for (auto& b : blocks) {
        z(b.w.data);
        z(b.b);
        z(b.gamma);
        z(b.beta);
    }
    z(head_w.data);
    z(head_b);
    z(points.data);
    radius = 0.0;
}

void backward(const Network& net, const ForwardCache& cache, const Matrix& d_output,
              const Matrix& d_embedding, Gradients& g) {
    if (cache.mode != Mode::kTrain) throw ContractError("backward: needs a train-mode cache");
    const std::size_t B = cache.input.rows, h = Network::kHidden;

    // Head and embedding tap.
    Matrix d_emb(B, h);
    if (!d_output.empty()) {
        add_into(g.head_w, kernels::matmul_tn(cache.embedding, d_output));
        const auto hb = col_sums(d_output);
        for (std::size_t j = 0; j < hb.size(); ++j) g.head_b[j] += hb[j];
        d_emb = kernels::matmul_nt(d_output, net.head_w);
    }
    if (!d_embedding.empty()) add_into(d_emb, d_embedding);

    Matrix grad = d_emb;  // gradient on the current block output
    for (std::size_t l = net.blocks.size(); l-- > 0;) {
        const Block& blk = net.blocks[l];
        const BlockCache& bc = cache.blocks[l];
        BlockGrads& bg = g.blocks[l];

        // Branch path: dropout, ReLU, BN affine.
        Matrix d_act(B, h);
        const bool used_dropout = !bc.drop_mask.empty();
        for (std::size_t i = 0; i < B * h; ++i) {
            double v = grad.data[i];
            if (used_dropout) v *= bc.drop_mask.data[i];
            d_act.data[i] = bc.act.data[i] > 0.0 ? v : 0.0;
        }

        Matrix d_z(B, h);
        for (std::size_t j = 0; j < h; ++j) {
            double sum_dzh = 0.0, sum_dzh_zh = 0.0, dgamma = 0.0, dbeta = 0.0;
            for (std::size_t i = 0; i < B; ++i) {
                const double da = d_act(i, j);
                dbeta += da;
                dgamma += da * bc.zhat(i, j);
                const double dzh = da * blk.bn.gamma[j];
                sum_dzh += dzh;
                sum_dzh_zh += dzh * bc.zhat(i, j);
            }
            bg.gamma[j] += dgamma;
            bg.beta[j] += dbeta;
            const double scale = bc.inv_std[j] / static_cast<double>(B);
            for (std::size_t i = 0; i < B; ++i) {
                const double dzh = d_act(i, j) * blk.bn.gamma[j];
                d_z(i, j) = scale * (static_cast<double>(B) * dzh - sum_dzh -
                                     bc.zhat(i, j) * sum_dzh_zh);
            }
        }

        add_into(bg.w, kernels::matmul_tn(bc.input, d_z));
        const auto db = col_sums(d_z);
        for (std::size_t j = 0; j < h; ++j) bg.b[j] += db[j];

        // Skip path keeps grad; branch adds through the linear.
        add_into(grad, kernels::matmul_nt(d_z, blk.w));
    }

    add_into(g.stem_w, kernels::matmul_tn(cache.input, grad));
    const auto sb = col_sums(grad);
    for (std::size_t j = 0; j < h; ++j) g.stem_b[j] += sb[j];
}

// ===========================================================================
// Losses
// ===========================================================================

void LossSpec::validate() const {
    if (gamma_logit <= 0.0 || lambda_margin <= 0.0 || aam_scale <= 0.0 || tau <= 0.0 ||
        lambda_inv <= 0.0 || lambda_var <= 0.0 || lambda_cov <= 0.0)
        throw ContractError("loss spec: hyperparameters must be strictly positive");
    if (!(aam_margin >= 0.0 && aam_margin < 1.5707963267948966))
        throw ContractError("loss spec: aam margin must lie in [0, pi/2)");
}

void init_arpl(LossSpec& spec, std::size_t n_classes, std::uint64_t seed) {
    if (n_classes < 2) throw ContractError("arpl: need at least 2 classes");
    const std::size_t h = Network::kHidden;
    spec.points = Matrix(n_classes, h);
    Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(h));
    for (double& v : spec.points.data) v = (2.0 * rng.uniform() - 1.0) * bound;
    spec.radius = 1.0;
}

namespace {

void check_classes(const std::vector<int>& y, std::size_t batch, std::size_t n_classes,
                   const char* kind) {
    if (y.size() != batch) throw ContractError(std::string(kind) + ": class count mismatch");
    for (int c : y)
        if (c < 0 || static_cast<std::size_t>(c) >= n_classes)
            throw ContractError(std::string(kind) + ": class index out of range");
}

// Softmax NLL over logit rows; d_logits = (softmax - onehot) / B.
double softmax_nll(const Matrix& logits, const std::vector<int>& y, Matrix& d_logits) {
    const std::size_t B = logits.rows, C = logits.cols;
    d_logits = Matrix(B, C);
    double loss = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        const double* row = logits.row(i);
        const double m = *std::max_element(row, row + C);
        double zsum = 0.0;
        for (std::size_t j = 0; j < C; ++j) zsum += std::exp(row[j] - m);
        const double log_z = std::log(zsum) + m;
        loss += log_z - row[static_cast<std::size_t>(y[i])];
        for (std::size_t j = 0; j < C; ++j) {
            const double p = std::exp(row[j] - log_z);
            d_logits(i, j) = (p - (static_cast<std::size_t>(y[i]) == j ? 1.0 : 0.0)) /
                             static_cast<double>(B);
        }
    }
    return loss / static_cast<double>(B);
}

double cross_entropy_loss(const Matrix& out, const std::vector<int>& y, Matrix& d_out) {
    check_classes(y, out.rows, out.cols, "cross_entropy");
    return softmax_nll(out, y, d_out);
}

double arpl_loss(const Matrix& emb, const std::vector<int>& y, const LossSpec& spec,
                 Matrix& d_emb, Matrix& d_points, double& d_radius) {
    const std::size_t B = emb.rows, h = emb.cols, C = spec.points.rows;
    if (C < 2) throw ContractError("arpl: loss spec has no reciprocal points");
    check_classes(y, B, C, "arpl");

    Matrix d2 = kernels::pairwise_sq_dists(emb, spec.points);
    Matrix logits(B, C);
    for (std::size_t i = 0; i < B * C; ++i) logits.data[i] = spec.gamma_logit * d2.data[i];

    Matrix d_logits;
    double loss = softmax_nll(logits, y, d_logits);

    d_emb = Matrix(B, h);
    d_points = Matrix(C, h);
    d_radius = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t k = 0; k < C; ++k) {
            const double coef = 2.0 * spec.gamma_logit * d_logits(i, k);
            for (std::size_t j = 0; j < h; ++j) {
                const double diff = emb(i, j) - spec.points(k, j);
                d_emb(i, j) += coef * diff;
                d_points(k, j) -= coef * diff;
            }
        }
        // Margin pushes the true-class distance out to at least radius.
        const auto yi = static_cast<std::size_t>(y[i]);
        const double gap = spec.radius - d2(i, yi);
        if (gap > 0.0) {
            loss += spec.lambda_margin * gap * gap / static_cast<double>(B);
            const double dgap = 2.0 * spec.lambda_margin * gap / static_cast<double>(B);
            d_radius += dgap;
            for (std::size_t j = 0; j < h; ++j) {
                const double diff = emb(i, j) - spec.points(yi, j);
                d_emb(i, j) -= dgap * 2.0 * diff;
                d_points(yi, j) += dgap * 2.0 * diff;
            }
        }
    }
    return loss;
}

// Additive angular margin on normalized embeddings against normalized head
// columns; the head bias is unused.
double aam_loss(const Matrix& emb, const Matrix& head_w, const std::vector<int>& y,
                const LossSpec& spec, Matrix& d_emb, Matrix& d_head_w) {
    const std::size_t B = emb.rows, h = emb.cols, C = head_w.cols;
    check_classes(y, B, C, "aam");
    constexpr double kClamp = 1e-7;

    std::vector<double> enorm(B), wnorm(C);
    for (std::size_t i = 0; i < B; ++i)
        enorm[i] = std::sqrt(sq_norm_row(emb.row(i), h)) + 1e-12;
    for (std::size_t k = 0; k < C; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < h; ++j) s += head_w(j, k) * head_w(j, k);
        wnorm[k] = std::sqrt(s) + 1e-12;
    }

    Matrix cosine(B, C);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t k = 0; k < C; ++k) {
            double s = 0.0;
            for (std::size_t j = 0; j < h; ++j) s += emb(i, j) * head_w(j, k);
            cosine(i, k) = std::clamp(s / (enorm[i] * wnorm[k]), -1.0 + kClamp, 1.0 - kClamp);
        }

    const double cos_m = std::cos(spec.aam_margin), sin_m = std::sin(spec.aam_margin);
    Matrix logits(B, C);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t k = 0; k < C; ++k) {
            const double c = cosine(i, k);
            if (static_cast<std::size_t>(y[i]) == k) {
                const double sin_t = std::sqrt(1.0 - c * c);
                logits(i, k) = spec.aam_scale * (c * cos_m - sin_t * sin_m);
            } else {
                logits(i, k) = spec.aam_scale * c;
            }
        }

    Matrix d_logits;
    const double loss = softmax_nll(logits, y, d_logits);

    d_emb = Matrix(B, h);
    d_head_w = Matrix(h, C);
    for (std::size_t i = 0; i < B; ++i) {
        const double* e = emb.row(i);
        for (std::size_t k = 0; k < C; ++k) {
            const double c = cosine(i, k);
            double dcos = d_logits(i, k) * spec.aam_scale;
            if (static_cast<std::size_t>(y[i]) == k) {
                const double sin_t = std::sqrt(1.0 - c * c);
                dcos *= cos_m + sin_m * c / sin_t;
            }
            for (std::size_t j = 0; j < h; ++j) {
                const double ehat = e[j] / enorm[i];
                const double what = head_w(j, k) / wnorm[k];
                d_emb(i, j) += dcos * (what - c * ehat) / enorm[i];
                d_head_w(j, k) += dcos * (ehat - c * what) / wnorm[k];
            }
        }
    }
    return loss;
}

double bce_loss(const Matrix& out, const Matrix& targets, Matrix& d_out) {
    if (targets.rows != out.rows || targets.cols != out.cols)
        throw ContractError("bce: target shape mismatch");
    const double denom = static_cast<double>(out.rows * out.cols);
    d_out = Matrix(out.rows, out.cols);
    double loss = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double z = out.data[i], t = targets.data[i];
        if (t != 0.0 && t != 1.0) throw ContractError("bce: targets must be 0/1");
        loss += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
        d_out.data[i] = (1.0 / (1.0 + std::exp(-z)) - t) / denom;
    }
    return loss / denom;
}

double mse_loss(const Matrix& out, const Matrix& targets, Matrix& d_out) {
    if (targets.rows != out.rows || targets.cols != out.cols)
        throw ContractError("mse: target shape mismatch");
    const double denom = static_cast<double>(out.rows * out.cols);
    d_out = Matrix(out.rows, out.cols);
    double loss = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double diff = out.data[i] - targets.data[i];
        loss += diff * diff;
        d_out.data[i] = 2.0 * diff / denom;
    }
    return loss / denom;
}

double mae_loss(const Matrix& out, const Matrix& targets, Matrix& d_out) {
    if (targets.rows != out.rows || targets.cols != out.cols)
        throw ContractError("mae: target shape mismatch");
    const double denom = static_cast<double>(out.rows * out.cols);
    d_out = Matrix(out.rows, out.cols);
    double loss = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double diff = out.data[i] - targets.data[i];
        loss += std::abs(diff);
        d_out.data[i] = (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) / denom;
    }
    return loss / denom;
}

// Symmetric InfoNCE over cosine similarities of the two view projections;
// row i of each view is the positive for row i of the other.
double infonce_loss(const Matrix& za, const Matrix& zb, double tau, Matrix& d_za, Matrix& d_zb) {
    const std::size_t B = za.rows, D = za.cols;
    std::vector<double> na(B), nb(B);
    Matrix ahat(B, D), bhat(B, D);
    for (std::size_t i = 0; i < B; ++i) {
        na[i] = std::sqrt(sq_norm_row(za.row(i), D)) + 1e-12;
        nb[i] = std::sqrt(sq_norm_row(zb.row(i), D)) + 1e-12;
        for (std::size_t j = 0; j < D; ++j) {
            ahat(i, j) = za(i, j) / na[i];
            bhat(i, j) = zb(i, j) / nb[i];
        }
    }
    Matrix sim = kernels::matmul_nt(ahat, bhat);

    // Softmax over rows (anchors in view A) and over columns (anchors in B).
    Matrix d_sim(B, B);
    double loss = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        double m = -kInf;
        for (std::size_t j = 0; j < B; ++j) m = std::max(m, sim(i, j) / tau);
        double zsum = 0.0;
        for (std::size_t j = 0; j < B; ++j) zsum += std::exp(sim(i, j) / tau - m);
        const double log_z = std::log(zsum) + m;
        loss += log_z - sim(i, i) / tau;
        for (std::size_t j = 0; j < B; ++j)
            d_sim(i, j) = (std::exp(sim(i, j) / tau - log_z) - (i == j ? 1.0 : 0.0)) /
                          (2.0 * static_cast<double>(B) * tau);
    }
    for (std::size_t j = 0; j < B; ++j) {
        double m = -kInf;
        for (std::size_t i = 0; i < B; ++i) m = std::max(m, sim(i, j) / tau);
        double zsum = 0.0;
        for (std::size_t i = 0; i < B; ++i) zsum += std::exp(sim(i, j) / tau - m);
        const double log_z = std::log(zsum) + m;
        loss += log_z - sim(j, j) / tau;
        for (std::size_t i = 0; i < B; ++i)
            d_sim(i, j) += (std::exp(sim(i, j) / tau - log_z) - (i == j ? 1.0 : 0.0)) /
                           (2.0 * static_cast<double>(B) * tau);
    }

    // d cos(a_i, b_j) / d a_i = (bhat_j - cos * ahat_i) / |a_i|.
    d_za = Matrix(B, D);
    d_zb = Matrix(B, D);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < B; ++j) {
            const double ds = d_sim(i, j), c = sim(i, j);
            if (ds == 0.0) continue;
            for (std::size_t t = 0; t < D; ++t) {
                d_za(i, t) += ds * (bhat(j, t) - c * ahat(i, t)) / na[i];
                d_zb(j, t) += ds * (ahat(i, t) - c * bhat(j, t)) / nb[j];
            }
        }
    return loss / (2.0 * static_cast<double>(B));
}

// Per-view variance hinge and covariance penalty, unbiased moments.
double vicreg_view_terms(const Matrix& z, const LossSpec& spec, Matrix& d_z) {
    const std::size_t B = z.rows, D = z.cols;
    const double bm1 = static_cast<double>(B - 1);
    std::vector<double> mean(D, 0.0);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < D; ++j) mean[j] += z(i, j);
    for (double& m : mean) m /= static_cast<double>(B);

    Matrix centered(B, D);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < D; ++j) centered(i, j) = z(i, j) - mean[j];

    double loss = 0.0;
    std::vector<double> stds(D);
    for (std::size_t j = 0; j < D; ++j) {
        double var = 0.0;
        for (std::size_t i = 0; i < B; ++i) var += centered(i, j) * centered(i, j);
        var /= bm1;
        stds[j] = std::sqrt(var + 1e-12);
        loss += spec.lambda_var * std::max(0.0, 1.0 - stds[j]) / static_cast<double>(D);
    }

    Matrix cov = kernels::matmul_tn(centered, centered);
    for (double& v : cov.data) v /= bm1;
    Matrix d_cov(D, D);
    for (std::size_t a = 0; a < D; ++a)
        for (std::size_t b = 0; b < D; ++b) {
            if (a == b) continue;
            loss += spec.lambda_cov * cov(a, b) * cov(a, b) / static_cast<double>(D);
            d_cov(a, b) = spec.lambda_cov * 2.0 * cov(a, b) / static_cast<double>(D);
        }

    // d/dZ of the covariance term: Zc (G + G^T) / (B-1) with symmetric G,
    // then the centering projection; the variance hinge keeps the same path.
    Matrix d_centered = kernels::matmul(centered, d_cov);
    for (double& v : d_centered.data) v *= 2.0 / bm1;
    for (std::size_t j = 0; j < D; ++j) {
        if (stds[j] >= 1.0) continue;
        const double coef = -spec.lambda_var / (static_cast<double>(D) * stds[j] * bm1);
        for (std::size_t i = 0; i < B; ++i) d_centered(i, j) += coef * centered(i, j);
    }
    d_z = Matrix(B, D);
    std::vector<double> colmean = col_sums(d_centered);
    for (double& v : colmean) v /= static_cast<double>(B);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < D; ++j) d_z(i, j) = d_centered(i, j) - colmean[j];
    return loss;
}

double vicreg_loss(const Matrix& za, const Matrix& zb, const LossSpec& spec, Matrix& d_za,
                   Matrix& d_zb) {
    const std::size_t B = za.rows, D = za.cols;
    double loss = vicreg_view_terms(za, spec, d_za) + vicreg_view_terms(zb, spec, d_zb);
    const double denom = static_cast<double>(B * D);
    for (std::size_t i = 0; i < za.data.size(); ++i) {
        const double diff = za.data[i] - zb.data[i];
        loss += spec.lambda_inv * diff * diff / denom;
        d_za.data[i] += spec.lambda_inv * 2.0 * diff / denom;
        d_zb.data[i] -= spec.lambda_inv * 2.0 * diff / denom;
    }
    return loss;
}

struct LossGrads {
    double loss = 0.0;
    Matrix d_out_a, d_emb_a;  // view A (or the only view)
    Matrix d_out_b;           // view B for contrastive kinds
    Matrix d_points;
    double d_radius = 0.0;
    Matrix d_head_w;  // aam reaches the head weights directly
};

LossGrads apply_loss(const LossSpec& spec, const ForwardResult& a, const ForwardResult* b,
                     const Network& net, const Batch& batch) {
    LossGrads r;
    switch (spec.kind) {
        case LossKind::kCrossEntropy:
            r.loss = cross_entropy_loss(a.output, batch.classes, r.d_out_a);
            break;
        case LossKind::kArpl:
            r.loss = arpl_loss(a.embedding, batch.classes, spec, r.d_emb_a, r.d_points,
                               r.d_radius);
            break;
        case LossKind::kAam:
            r.loss = aam_loss(a.embedding, net.head_w, batch.classes, spec, r.d_emb_a,
                              r.d_head_w);
            break;
        case LossKind::kBceMultilabel:
            r.loss = bce_loss(a.output, batch.targets, r.d_out_a);
            break;
        case LossKind::kMse:
            r.loss = mse_loss(a.output, batch.targets, r.d_out_a);
            break;
        case LossKind::kMae:
            r.loss = mae_loss(a.output, batch.targets, r.d_out_a);
            break;
        case LossKind::kInfoNce:
            r.loss = infonce_loss(a.output, b->output, spec.tau, r.d_out_a, r.d_out_b);
            break;
        case LossKind::kVicReg:
            r.loss = vicreg_loss(a.output, b->output, spec, r.d_out_a, r.d_out_b);
            break;
    }
    return r;
}

void check_batch(const LossSpec& spec, const Batch& batch, const Network& net) {
    if (batch.x.empty()) throw ContractError("loss: empty batch");
    if (batch.x.cols != net.d_in) throw ContractError("loss: batch width mismatch");
    if (is_contrastive(spec.kind)) {
        if (batch.x.rows < 2) throw ContractError("loss: contrastive batch needs at least 2 rows");
        if (batch.x_alt.rows != batch.x.rows || batch.x_alt.cols != batch.x.cols)
            throw ContractError("loss: contrastive batch needs a matching second view");
    }
}

}  // namespace

double loss_and_grad(Network& net, const LossSpec& spec, const Batch& batch,
                     std::uint64_t drop_seed, Gradients& g) {
    spec.validate();
    check_batch(spec, batch, net);
    ForwardCache ca;
    const ForwardResult a =
        forward_embed(net, batch.x, Mode::kTrain, mix_seed(drop_seed, 0xA), &ca);

    ForwardCache cb;
    ForwardResult b;
    const bool two_views = is_contrastive(spec.kind);
    if (two_views) b = forward_embed(net, batch.x_alt, Mode::kTrain, mix_seed(drop_seed, 0xB), &cb);

    const LossGrads lg = apply_loss(spec, a, two_views ? &b : nullptr, net, batch);

    backward(net, ca, lg.d_out_a, lg.d_emb_a, g);
    if (two_views) backward(net, cb, lg.d_out_b, Matrix(), g);
    if (!lg.d_points.empty()) {
        if (g.points.rows != lg.d_points.rows) throw ContractError("gradients: arpl slots missing");
        add_into(g.points, lg.d_points);
        g.radius += lg.d_radius;
    }
    if (!lg.d_head_w.empty()) add_into(g.head_w, lg.d_head_w);
    return lg.loss;
}

double loss_value(Network& net, const LossSpec& spec, const Batch& batch, Mode mode,
                  std::uint64_t drop_seed) {
    spec.validate();
    check_batch(spec, batch, net);
    const ForwardResult a = forward_embed(net, batch.x, mode, mix_seed(drop_seed, 0xA), nullptr);
    ForwardResult b;
    const bool two_views = is_contrastive(spec.kind);
    if (two_views) b = forward_embed(net, batch.x_alt, mode, mix_seed(drop_seed, 0xB), nullptr);
    const LossGrads lg = apply_loss(spec, a, two_views ? &b : nullptr, net, batch);
    return lg.loss;
}

// ===========================================================================
// Packing and Adam
// ===========================================================================

namespace {

template <typename Fn>
void visit_param_spans(const Network& net, const LossSpec& spec, Fn&& fn) {
    fn(net.stem_w.data);
    fn(net.stem_b);
    for (const auto& blk : net.blocks) {
        fn(blk.w.data);
        fn(blk.b);
        fn(blk.bn.gamma);
        fn(blk.bn.beta);
    }
    fn(net.head_w.data);
    fn(net.head_b);
    if (spec.kind == LossKind::kArpl) fn(spec.points.data);
}

}  // namespace

std::vector<double> pack_params(const Network& net, const LossSpec& spec) {
    std::vector<double> flat;
    visit_param_spans(net, spec, [&](const std::vector<double>& v) {
        flat.insert(flat.end(), v.begin(), v.end());
    });
    if (spec.kind == LossKind::kArpl) flat.push_back(spec.radius);
    return flat;
}

void unpack_params(Network& net, LossSpec& spec, const std::vector<double>& flat) {
    std::size_t pos = 0;
    auto take = [&](std::vector<double>& v) {
        if (pos + v.size() > flat.size()) throw ContractError("unpack: parameter vector too short");
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                  flat.begin() + static_cast<std::ptrdiff_t>(pos + v.size()), v.begin());
        pos += v.size();
    };
    take(net.stem_w.data);
    take(net.stem_b);
    for (auto& blk : net.blocks) {
        take(blk.w.data);
        take(blk.b);
        take(blk.bn.gamma);
        take(blk.bn.beta);
    }
    take(net.head_w.data);
    take(net.head_b);
    if (spec.kind == LossKind::kArpl) {
        take(spec.points.data);
        if (pos + 1 != flat.size()) throw ContractError("unpack: parameter vector size mismatch");
        spec.radius = flat[pos];
        pos += 1;
    }
    if (pos != flat.size()) throw ContractError("unpack: parameter vector size mismatch");
}

std::vector<double> pack_grads(const Gradients& g) {
    std::vector<double> flat;
    auto put = [&](const std::vector<double>& v) { flat.insert(flat.end(), v.begin(), v.end()); };
    put(g.stem_w.data);
    put(g.stem_b);
    for (const auto& blk : g.blocks) {
        put(blk.w.data);
        put(blk.b);
        put(blk.gamma);
        put(blk.beta);
    }
    put(g.head_w.data);
    put(g.head_b);
    if (!g.points.empty()) {
        put(g.points.data);
        flat.push_back(g.radius);
    }
    return flat;
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
               double lr) {
    if (params.size() != grads.size()) throw ContractError("adam: size mismatch");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size()) throw ContractError("adam: state size mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        params[i] -= lr * (state.m[i] / bc1) / (std::sqrt(state.v[i] / bc2) + state.eps);
    }
}

// ===========================================================================
// Training loop
// ===========================================================================

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
    auto mixer = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    };
    std::uint64_t h = mixer(a);
    h = mixer(h ^ b);
    h = mixer(h ^ c);
    h = mixer(h ^ d);
    return h;
}

namespace {

// Contiguous index batches; trailing batches below two rows are dropped
// because train-mode batch norm and the contrastive losses need pairs.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order,
                                                   std::size_t batch) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t stop = std::min(order.size(), start + batch);
        if (stop - start < 2) break;
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return out;
}

}  // namespace

TrainedEncoder train_encoder(const Network& init, const LossSpec& spec, const Matrix& train_x,
                             const Matrix& val_x, const BatchFn& make_batch,
                             const TrainConfig& cfg, const std::string& task_name) {
    if (train_x.rows < 2) throw ContractError("train: need at least 2 training rows");
    if (val_x.empty()) throw ContractError("train: validation set is empty");
    if (train_x.cols != init.d_in || val_x.cols != init.d_in)
        throw ContractError("train: input width mismatch");
    if (cfg.lr <= 0.0 || cfg.epochs < 1 || cfg.batch < 2)
        throw ContractError("train: lr > 0, epochs >= 1, batch >= 2 required");
    spec.validate();

    Network net = init;
    LossSpec loss = spec;
    Gradients g;
    g.init_like(net, loss.kind == LossKind::kArpl ? loss.points.rows : 0);
    AdamState adam;

    std::vector<std::size_t> val_order(val_x.rows);
    std::iota(val_order.begin(), val_order.end(), 0);
    auto val_batches = make_batches(val_order, cfg.batch);
    if (val_batches.empty() && !is_contrastive(loss.kind) && val_x.rows >= 1)
        val_batches.push_back(val_order);  // eval-mode BN tolerates single rows
    if (val_batches.empty()) throw ContractError("train: validation set too small for this loss");

    auto validation_loss = [&]() {
        double total = 0.0;
        std::size_t rows = 0;
        for (std::size_t b = 0; b < val_batches.size(); ++b) {
            const Matrix rows_x = val_x.take_rows(val_batches[b]);
            const Batch vb = make_batch(rows_x, mix_seed(cfg.seed, 0x7a11da7e, b));
            total += loss_value(net, loss, vb, Mode::kEval, 0) *
                     static_cast<double>(rows_x.rows);
            rows += rows_x.rows;
        }
        return total / static_cast<double>(rows);
    };

    TrainedEncoder enc;
    enc.task_name = task_name;
    enc.seed = cfg.seed;
    enc.best_val_loss = kInf;

    std::vector<std::size_t> order(train_x.rows);
    std::iota(order.begin(), order.end(), 0);
    std::size_t stale = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng perm_rng(mix_seed(cfg.seed, 0x0e0c4, epoch));
        perm_rng.shuffle(order);
        const auto batches = make_batches(order, cfg.batch);
        if (batches.empty()) throw ContractError("train: training set too small for this batch");

        double epoch_loss = 0.0;
        std::size_t epoch_rows = 0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const Matrix rows_x = train_x.take_rows(batches[b]);
            const Batch tb = make_batch(rows_x, mix_seed(cfg.seed, epoch, b, 1));
            g.zero();
            const double l = loss_and_grad(net, loss, tb, mix_seed(cfg.seed, epoch, b, 2), g);
            if (!std::isfinite(l))
                throw NumericError("training loss non-finite at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(b));
            auto params = pack_params(net, loss);
            adam_step(params, pack_grads(g), adam, cfg.lr);
            unpack_params(net, loss, params);
            epoch_loss += l * static_cast<double>(rows_x.rows);
            epoch_rows += rows_x.rows;
        }
        epoch_loss /= static_cast<double>(epoch_rows);

        const double vl = validation_loss();
        enc.curve.push_back({epoch_loss, vl});
        if (vl < enc.best_val_loss) {
            enc.best_val_loss = vl;
            enc.net = net;
            enc.loss = loss;
            stale = 0;
        } else {
            ++stale;
        }
        if (stale >= cfg.patience) break;
    }
    return enc;
}

Matrix extract_embeddings(const TrainedEncoder& enc, const Matrix& x) {
    Network net = enc.net;  // eval forward leaves parameters untouched
    return forward_embed(net, x, Mode::kEval).embedding;
}

}  // namespace tadlab::nn
