// Acceptance harness: one [PASS]/[FAIL] line per numbered criterion with the
// measured values and the pinned tolerance. Criteria that need external
// datasets fail with the missing path instead of being skipped; windows the
// implementation cannot reach fail with the measured value. Exit status is
// nonzero when any line fails.
//
// Usage: acceptance [criterion numbers...]   (no arguments runs all ten)
//
// Dataset root: $TADLAB_DATA when set, else <repo>/data/odds. Expected files
// are http.csv, wine.csv, glass.csv, wbc.csv, lympho.csv, vertebral.csv with
// a 0/1 "label" column (see README for the .mat conversion).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ref/naive_detectors.hpp"
#include "tadlab/core.hpp"
#include "tadlab/detectors.hpp"
#include "tadlab/eval.hpp"
#include "tadlab/io.hpp"
#include "tadlab/linalg.hpp"
#include "tadlab/nn.hpp"
#include "tadlab/pipeline.hpp"
#include "tadlab/pretext.hpp"
#include "tadlab/rng.hpp"
#include "tadlab/synthesis.hpp"

using namespace tadlab;

namespace {

int g_failures = 0;
int g_lines = 0;

void report(const std::string& label, bool pass, const std::string& detail, double seconds) {
    ++g_lines;
    if (!pass) ++g_failures;
    std::printf("[%s] %s: %s [%.1fs]\n", pass ? "PASS" : "FAIL", label.c_str(), detail.c_str(),
                seconds);
    std::fflush(stdout);
}

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string fmt(double v, const char* spec = "%.3f") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

std::string data_root() {
    if (const char* env = std::getenv("TADLAB_DATA")) return env;
    return std::string(TADLAB_ROOT) + "/data/odds";
}

std::string odds_path(const std::string& name) { return data_root() + "/" + name + ".csv"; }

// Missing-file list for a data-gated criterion; empty means all present.
std::string missing_files(const std::vector<std::string>& names) {
    std::string out;
    for (const auto& n : names)
        if (!io::file_exists(odds_path(n))) out += (out.empty() ? "" : ", ") + odds_path(n);
    return out;
}

Matrix gaussian_blob(std::size_t n, std::size_t d, std::uint64_t seed) {
    Matrix m(n, d);
    Rng rng(seed);
    for (double& v : m.data) v = rng.gaussian();
    return m;
}

Matrix sample_rows(const Matrix& x, std::size_t cap, std::uint64_t seed) {
    if (x.rows <= cap) return x;
    Rng rng(seed);
    return x.take_rows(rng.sample_without_replacement(x.rows, cap));
}

std::vector<int> take_labels(const std::vector<int>& y, const std::vector<std::size_t>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(y[i]);
    return out;
}

// ===========================================================================
// 1. AUROC vs brute-force pair counting
// ===========================================================================

double pair_count_auroc(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] != 0) continue;
            pairs += 1.0;
            if (s[i] > s[j])
                wins += 1.0;
            else if (s[i] == s[j])
                wins += 0.5;
        }
    }
    return 100.0 * wins / pairs;
}

void criterion_1() {
    const double t0 = now_s();
    Rng rng(20260825);
    double worst = 0.0;
    bool monotone_exact = true, flip_ok = true;
    for (int inst = 0; inst < 1000; ++inst) {
        const std::size_t n = 2 + rng.below(199);
        std::vector<int> y(n);
        for (int& v : y) v = static_cast<int>(rng.below(2));
        y[rng.below(n)] = 0;
        y[n / 2 + rng.below(n - n / 2)] = 1;
        if (y[n / 2] == 0 && std::count(y.begin(), y.end(), 1) == 0) y[0] = 1;
        if (std::count(y.begin(), y.end(), 0) == 0) y[0] = 0;
        if (std::count(y.begin(), y.end(), 1) == 0) y[n - 1] = 1;

        // Quarter-integer scores force heavy ties.
        std::vector<double> s(n);
        for (double& v : s) v = 0.25 * static_cast<double>(rng.below(12));

        const double a = eval::auroc(s, y);
        worst = std::max(worst, std::abs(a - pair_count_auroc(s, y)));

        // A strictly increasing map preserves the rank pattern, so the result
        // must be bit-identical.
        std::vector<double> mono(n), neg(n);
        for (std::size_t i = 0; i < n; ++i) {
            mono[i] = 3.0 * s[i] + std::exp(0.1 * s[i]);
            neg[i] = -s[i];
        }
        if (eval::auroc(mono, y) != a) monotone_exact = false;
        if (std::abs(eval::auroc(neg, y) - (100.0 - a)) > 1e-12) flip_ok = false;
    }
    const bool pass = worst <= 1e-12 && monotone_exact && flip_ok;
    report("1 auroc-oracle", pass,
           "max |rank-based - pair-count| = " + fmt(worst, "%.2e") +
               " (tol 1e-12) on 1000 instances; monotone transform " +
               (monotone_exact ? "bit-exact" : "VIOLATED") + "; sign flip " +
               (flip_ok ? "complements within 1e-12" : "VIOLATED"),
           now_s() - t0);
}

// ===========================================================================
// 2. Eigendecomposition, loss gradients, rotation orthonormality
// ===========================================================================

double eigen_reconstruction_error() {
    Rng rng(77);
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
        const std::size_t d = 2 + rng.below(63);
        Matrix a(d, d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                const double v = rng.gaussian();
                a(i, j) = v;
                a(j, i) = v;
            }
        const auto eig = linalg::sym_eig(a);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                double rec = 0.0;
                for (std::size_t k = 0; k < d; ++k)
                    rec += eig.vectors(i, k) * eig.values[k] * eig.vectors(j, k);
                worst = std::max(worst, std::abs(rec - a(i, j)));
            }
    }
    return worst;
}

// Mirrors the unit-test harness: one loss spec plus matching targets per kind.
struct FdSetup {
    nn::LossSpec spec;
    nn::Batch batch;
    std::size_t d_out = 0;
};

FdSetup fd_setup(nn::LossKind kind, std::size_t d_in, std::uint64_t seed) {
    FdSetup s;
    s.spec.kind = kind;
    Rng rng(seed);
    const std::size_t B = 6;
    s.batch.x = gaussian_blob(B, d_in, seed * 31 + 1);
    switch (kind) {
        case nn::LossKind::kCrossEntropy:
        case nn::LossKind::kAam:
        case nn::LossKind::kArpl:
            s.d_out = 3;
            for (std::size_t i = 0; i < B; ++i)
                s.batch.classes.push_back(static_cast<int>(rng.uniform() * 3.0));
            if (kind == nn::LossKind::kArpl) nn::init_arpl(s.spec, 3, seed * 7 + 3);
            break;
        case nn::LossKind::kBceMultilabel:
            s.d_out = 4;
            s.batch.targets = Matrix(B, 4);
            for (double& v : s.batch.targets.data) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
            break;
        case nn::LossKind::kMse:
        case nn::LossKind::kMae:
            s.d_out = d_in;
            s.batch.targets = gaussian_blob(B, d_in, seed * 31 + 2);
            break;
        case nn::LossKind::kInfoNce:
        case nn::LossKind::kVicReg:
            s.d_out = 16;
            s.batch.x_alt = gaussian_blob(B, d_in, seed * 31 + 3);
            break;
    }
    return s;
}

double worst_gradient_error() {
    const nn::LossKind kinds[] = {nn::LossKind::kCrossEntropy, nn::LossKind::kArpl,
                                  nn::LossKind::kAam,          nn::LossKind::kBceMultilabel,
                                  nn::LossKind::kMse,          nn::LossKind::kMae,
                                  nn::LossKind::kInfoNce,      nn::LossKind::kVicReg};
    const std::size_t d_in = 5;
    double worst = 0.0;
    for (nn::LossKind kind : kinds) {
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            FdSetup s = fd_setup(kind, d_in, seed);
            nn::Network net = nn::build_network(d_in, s.d_out, 2, seed * 1001 + 5);
            const std::uint64_t drop_seed = seed * 77 + 13;

            nn::Gradients g;
            g.init_like(net, kind == nn::LossKind::kArpl ? s.spec.points.rows : 0);
            nn::loss_and_grad(net, s.spec, s.batch, drop_seed, g);
            const auto grad = nn::pack_grads(g);
            const auto theta = nn::pack_params(net, s.spec);

            // Directional probe along a random unit vector.
            Rng dir_rng(seed * 13 + 3);
            std::vector<double> dir(theta.size());
            double norm = 0.0;
            for (double& v : dir) {
                v = dir_rng.gaussian();
                norm += v * v;
            }
            norm = std::sqrt(norm);
            for (double& v : dir) v /= norm;

            const double h = 1e-4;
            auto probe = [&](double sign) {
                auto shifted = theta;
                for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += sign * h * dir[i];
                nn::unpack_params(net, s.spec, shifted);
                return nn::loss_value(net, s.spec, s.batch, nn::Mode::kTrain, drop_seed);
            };
            const double fd = (probe(1.0) - probe(-1.0)) / (2.0 * h);
            nn::unpack_params(net, s.spec, theta);

            double analytic = 0.0;
            for (std::size_t i = 0; i < grad.size(); ++i) analytic += grad[i] * dir[i];
            const double scale = std::max({std::abs(fd), std::abs(analytic), 1e-6});
            worst = std::max(worst, std::abs(fd - analytic) / scale);
        }
    }
    return worst;
}

double worst_rotation_orthonormality() {
    double worst = 0.0;
    for (std::uint64_t seed : {1, 9, 23}) {
        for (std::size_t d : {2ul, 7ul, 16ul, 40ul}) {
            pretext::TaskConfig cfg;
            cfg.n_classes = 6;
            const auto task = pretext::build_task(pretext::PretextKind::kRotation, d, cfg, seed);
            for (const Matrix& r : task.rotations)
                for (std::size_t i = 0; i < d; ++i)
                    for (std::size_t j = 0; j < d; ++j) {
                        double dot = 0.0;
                        for (std::size_t k = 0; k < d; ++k) dot += r(k, i) * r(k, j);
                        worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
                    }
        }
    }
    return worst;
}

void criterion_2() {
    const double t0 = now_s();
    const double rec = eigen_reconstruction_error();
    const double grad = worst_gradient_error();
    const double orth = worst_rotation_orthonormality();
    const bool pass = rec <= 1e-8 && grad <= 1e-4 && orth <= 1e-10;
    report("2 numerics", pass,
           "eigen reconstruction max-norm " + fmt(rec, "%.2e") + " (tol 1e-8, 200 matrices d<=64); " +
               "worst loss-gradient relative error " + fmt(grad, "%.2e") +
               " (tol 1e-4, 8 kinds x 20 seeds); rotation orthonormality " + fmt(orth, "%.2e") +
               " (tol 1e-10)",
           now_s() - t0);
}

// ===========================================================================
// 3. Detectors vs independent brute-force reimplementations, n <= 30
// ===========================================================================

double residual_oracle_gap(const Matrix& train, const Matrix& queries, double fraction) {
    // Explicit Gram + eigenvectors of the smallest eigenvalues; independent of
    // principal_basis / residual_project.
    const std::size_t d = train.cols;
    Matrix gram(d, d);
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < train.rows; ++i) s += train(i, a) * train(i, b);
            gram(a, b) = s;
        }
    const auto eig = linalg::sym_eig(gram);  // values descending
    const std::size_t m =
        std::min<std::size_t>(d, static_cast<std::size_t>(std::ceil(fraction * double(d))));
    const auto ours = detectors::residual_norm(train, queries, fraction).scores;
    double worst = 0.0;
    for (std::size_t q = 0; q < queries.rows; ++q) {
        double sq = 0.0;
        for (std::size_t c = d - m; c < d; ++c) {
            double proj = 0.0;
            for (std::size_t a = 0; a < d; ++a) proj += queries(q, a) * eig.vectors(a, c);
            sq += proj * proj;
        }
        worst = std::max(worst, std::abs(std::sqrt(sq) - ours[q]));
    }
    return worst;
}

void criterion_3() {
    const double t0 = now_s();
    double worst = 0.0;

    const Matrix train4 = gaussian_blob(30, 4, 301);
    const Matrix q4 = gaussian_blob(12, 4, 302);
    for (std::size_t k : {1ul, 3ul, 10ul}) {
        const auto ours = detectors::knn(train4, q4, k).scores;
        const auto ref = testref::naive_knn(train4, q4, k);
        for (std::size_t i = 0; i < ours.size(); ++i)
            worst = std::max(worst, std::abs(ours[i] - ref[i]));
    }

    const Matrix train3 = gaussian_blob(28, 3, 303);
    const Matrix q3 = gaussian_blob(10, 3, 304);
    for (std::size_t k : {2ul, 5ul, 9ul}) {
        const auto ours = detectors::lof(train3, q3, k).scores;
        const auto ref = testref::naive_lof(train3, q3, k);
        for (std::size_t i = 0; i < ours.size(); ++i)
            worst = std::max(worst, std::abs(ours[i] - ref[i]));
    }

    const Matrix train5 = gaussian_blob(20, 5, 305);
    const Matrix q5 = gaussian_blob(8, 5, 306);
    for (double f : {0.4, 1.0}) worst = std::max(worst, residual_oracle_gap(train5, q5, f));

    // Seeded forest: replay the stored trees independently.
    const auto forest = detectors::fit_iforest(train4, 25, 16, 9);
    {
        const auto ours = detectors::score_iforest(forest, q4).scores;
        const auto ref = testref::replay_iforest(forest, q4);
        for (std::size_t i = 0; i < ours.size(); ++i)
            worst = std::max(worst, std::abs(ours[i] - ref[i]));
    }

    const Matrix train2 = gaussian_blob(24, 2, 311);
    const Matrix q2 = gaussian_blob(10, 2, 312);
    const double gamma = detectors::rbf_gamma_scale(train2);
    {
        const auto model = detectors::fit_ocsvm(train2, 0.5, gamma, 1e-10);
        const auto pgd = testref::pgd_ocsvm(train2, 0.5, gamma, 120000);
        const auto ours = detectors::score_ocsvm(model, q2).scores;
        const auto ref = testref::pgd_scores(train2, pgd, gamma, q2);
        for (std::size_t i = 0; i < ours.size(); ++i)
            worst = std::max(worst, std::abs(ours[i] - ref[i]));
    }

    // nu upper-bounds the trained-point outlier fraction; window nu +- 0.1.
    const Matrix blob = gaussian_blob(200, 2, 111);
    const auto s = detectors::ocsvm(blob, blob, 0.5).scores;
    double frac = 0.0;
    for (double v : s) frac += (v > 0.0);
    frac /= static_cast<double>(s.size());

    const bool pass = worst <= 1e-6 && frac >= 0.4 && frac <= 0.6;
    report("3 detector-oracles", pass,
           "max |detector - brute force| = " + fmt(worst, "%.2e") +
               " (tol 1e-6, knn/lof/residual/iforest/ocsvm, n<=30); trained-point outlier "
               "fraction " +
               fmt(frac) + " at nu=0.5 (window [0.4, 0.6])",
           now_s() - t0);
}

// ===========================================================================
// 4. HTTP raw detectors + linear probe (external dataset)
// ===========================================================================

void criterion_4() {
    const double t0 = now_s();
    const std::string gap = missing_files({"http"});
    if (!gap.empty()) {
        report("4 http-raw-detectors", false, "dataset unavailable: " + gap + " not found",
               now_s() - t0);
        return;
    }
    const core::Dataset ds = core::load_dataset(odds_path("http"));
    const auto sb = core::one_class_split(ds, 0);
    const Matrix train = ds.X.take_rows(sb.train);
    const Matrix test = ds.X.take_rows(sb.test);
    const auto test_y = take_labels(ds.y, sb.test);

    std::vector<double> aucs;
    aucs.push_back(eval::auroc(detectors::knn(train, test, 5).scores, test_y));
    aucs.push_back(eval::auroc(detectors::lof(train, test, 5).scores, test_y));
    aucs.push_back(eval::auroc(detectors::iforest(train, test, 100, 256, 0).scores, test_y));
    // SMO on the full train set is beyond desk scale; seeded 20k subsample.
    const Matrix svm_train = sample_rows(train, 20000, 41);
    aucs.push_back(eval::auroc(detectors::ocsvm(svm_train, test, 0.5).scores, test_y));
    aucs.push_back(eval::auroc(detectors::residual_norm(train, test, 0.5).scores, test_y));

    auto sorted = aucs;
    std::sort(sorted.begin(), sorted.end());
    const double lo = sorted.front(), median = sorted[2];

    // Probe train: all split-train normals plus 200 seeded test anomalies;
    // probe test: the remaining test rows.
    std::vector<std::size_t> anom, keep;
    for (std::size_t i = 0; i < test_y.size(); ++i) (test_y[i] == 1 ? anom : keep).push_back(i);
    Rng(5).shuffle(anom);
    const std::size_t n_probe = std::min<std::size_t>(200, anom.size());
    Matrix ptrain(train.rows + n_probe, train.cols);
    std::vector<int> ptrain_y(train.rows + n_probe, 0);
    std::copy(train.data.begin(), train.data.end(), ptrain.data.begin());
    for (std::size_t i = 0; i < n_probe; ++i) {
        std::copy(test.row(anom[i]), test.row(anom[i]) + test.cols, ptrain.row(train.rows + i));
        ptrain_y[train.rows + i] = 1;
    }
    std::vector<std::size_t> rest(anom.begin() + n_probe, anom.end());
    rest.insert(rest.end(), keep.begin(), keep.end());
    const Matrix ptest = test.take_rows(rest);
    const auto ptest_y = take_labels(test_y, rest);
    const double probe = eval::linear_probe(ptrain, ptrain_y, ptest, ptest_y);

    const bool pass = lo >= 85.0 && sorted.back() <= 100.0 && median >= 98.0 && probe >= 99.0;
    report("4 http-raw-detectors", pass,
           "auroc knn " + fmt(aucs[0], "%.1f") + ", lof " + fmt(aucs[1], "%.1f") + ", iforest " +
               fmt(aucs[2], "%.1f") + ", ocsvm " + fmt(aucs[3], "%.1f") + ", residual " +
               fmt(aucs[4], "%.1f") + " (need all in [85,100], median >= 98; median " +
               fmt(median, "%.1f") + "); 200-anomaly linear probe " + fmt(probe, "%.2f") +
               " (need >= 99)",
           now_s() - t0);
}

// ===========================================================================
// 5. HTTP rotation embeddings degrade knn but not iforest/residual
// ===========================================================================

void criterion_5() {
    const double t0 = now_s();
    const std::string gap = missing_files({"http"});
    if (!gap.empty()) {
        report("5 http-embedding-degradation", false, "dataset unavailable: " + gap + " not found",
               now_s() - t0);
        return;
    }
    const core::Dataset ds = core::load_dataset(odds_path("http"));
    bool pass = true;
    std::string detail;
    for (std::uint64_t seed : {0ul, 1ul}) {
        const auto sb = core::one_class_split(ds, seed);
        const Matrix train = ds.X.take_rows(sb.train);
        const Matrix val = ds.X.take_rows(sb.val);
        const Matrix test = ds.X.take_rows(sb.test);
        const auto test_y = take_labels(ds.y, sb.test);

        // Scoring set: every anomaly plus a seeded 20k normal subsample.
        std::vector<std::size_t> eval_idx;
        std::vector<std::size_t> normals;
        for (std::size_t i = 0; i < test_y.size(); ++i)
            (test_y[i] == 1 ? eval_idx : normals).push_back(i);
        Rng(nn::mix_seed(55, seed)).shuffle(normals);
        normals.resize(std::min<std::size_t>(20000, normals.size()));
        eval_idx.insert(eval_idx.end(), normals.begin(), normals.end());
        const Matrix test_eval = test.take_rows(eval_idx);
        const auto eval_y = take_labels(test_y, eval_idx);

        const double knn_raw = eval::auroc(detectors::knn(train, test_eval, 5).scores, eval_y);

        // Encoder trains on standardized seeded subsamples (desk scale).
        const auto [st, train_s_full] = core::standardize(train, train);
        const Matrix train_s = sample_rows(train_s_full, 20000, nn::mix_seed(56, seed));
        const Matrix val_s = sample_rows(st.transform(val), 4000, nn::mix_seed(57, seed));
        pretext::TaskConfig cfg;
        cfg.n_classes = 4;
        const auto task = pretext::build_task(pretext::PretextKind::kRotation, ds.d(), cfg,
                                              nn::mix_seed(58, seed));
        const auto search =
            pretext::random_search(task, nn::LossKind::kCrossEntropy, train_s, val_s,
                                   nn::mix_seed(59, seed), 4, 30, 5);
        const Matrix emb_train = search.best.embed(train_s);
        const Matrix emb_eval = search.best.embed(st.transform(test_eval));

        const double knn_emb = eval::auroc(detectors::knn(emb_train, emb_eval, 5).scores, eval_y);
        const double ifo_emb =
            eval::auroc(detectors::iforest(emb_train, emb_eval, 100, 256, seed).scores, eval_y);
        const double res_emb =
            eval::auroc(detectors::residual_norm(emb_train, emb_eval, 0.5).scores, eval_y);

        const bool ok = knn_emb <= knn_raw - 10.0 && ifo_emb >= 95.0 && res_emb >= 95.0;
        pass = pass && ok;
        detail += "seed " + std::to_string(seed) + ": knn raw " + fmt(knn_raw, "%.1f") +
                  " vs emb " + fmt(knn_emb, "%.1f") + " (need <= raw-10), iforest emb " +
                  fmt(ifo_emb, "%.1f") + ", residual emb " + fmt(res_emb, "%.1f") +
                  " (need >= 95)" + (seed == 0 ? "; " : "");
    }
    report("5 http-embedding-degradation", pass, detail, now_s() - t0);
}

// ===========================================================================
// 6. Toy suite: raw vs embeddings, residual projection, ring behavior
// ===========================================================================

void criterion_6() {
    const auto& names = synthesis::toy_names();
    const std::size_t n_toys = names.size();
    std::vector<std::vector<double>> raw_auc(3), emb_auc(3), proj_auc(3);

    double t0 = now_s();
    for (std::uint64_t s = 0; s < 3; ++s) {
        for (std::size_t i = 0; i < n_toys; ++i) {
            synthesis::ToySpec spec;
            spec.name = names[i];
            spec.n_normal = 500;
            spec.n_anomaly = 25;
            spec.seed = nn::mix_seed(60, s, i);
            const core::Dataset ds = synthesis::make_toy(spec);
            const auto sb = core::one_class_split(ds, s);
            const Matrix train = ds.X.take_rows(sb.train);
            const Matrix val = ds.X.take_rows(sb.val);
            const Matrix test = ds.X.take_rows(sb.test);
            const auto test_y = take_labels(ds.y, sb.test);

            raw_auc[s].push_back(eval::auroc(detectors::knn(train, test, 5).scores, test_y));

            // Two-class rotation, the protocol the 2-D experiment calls for.
            const auto [st, train_s] = core::standardize(train, train);
            pretext::TaskConfig cfg;
            cfg.n_classes = 2;
            const auto task = pretext::build_task(pretext::PretextKind::kRotation, ds.d(), cfg,
                                                  nn::mix_seed(61, s, i));
            nn::TrainConfig tc;
            tc.epochs = 30;
            tc.patience = 5;
            tc.seed = nn::mix_seed(62, s, i);
            const auto art = pretext::train_pretext(task, nn::LossKind::kCrossEntropy, train_s,
                                                    st.transform(val), tc, 2);
            const Matrix emb_train = art.embed(train_s);
            const Matrix emb_test = art.embed(st.transform(test));
            emb_auc[s].push_back(
                eval::auroc(detectors::knn(emb_train, emb_test, 5).scores, test_y));

            const auto basis = linalg::principal_basis(emb_train);
            const Matrix ptr = linalg::residual_project(basis, emb_train, 0.5);
            const Matrix pte = linalg::residual_project(basis, emb_test, 0.5);
            proj_auc[s].push_back(eval::auroc(detectors::knn(ptr, pte, 5).scores, test_y));
        }
    }

    int wins = 0;
    for (std::size_t i = 0; i < n_toys; ++i) wins += raw_auc[0][i] >= emb_auc[0][i];
    report("6a toy-raw-vs-embedding", wins >= 6,
           "raw knn >= embedding knn on " + std::to_string(wins) + " of " +
               std::to_string(n_toys) + " toys (need >= 6)",
           now_s() - t0);

    t0 = now_s();
    double gain = 0.0, min_emb = 100.0;
    for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t i = 0; i < n_toys; ++i) {
            gain += proj_auc[s][i] - emb_auc[s][i];
            min_emb = std::min(min_emb, emb_auc[s][i]);
        }
    gain /= static_cast<double>(3 * n_toys);
    report("6b toy-residual-projection", gain >= 2.0,
           "64-smallest-direction projection changes mean knn auroc by " + fmt(gain, "%+.2f") +
               " points over 3 seeds (need >= +2); embedding knn never drops below " +
               fmt(min_emb, "%.1f") + ", so there is no degradation for the projection to recover",
           now_s() - t0);

    t0 = now_s();
    synthesis::ToySpec ring;
    ring.name = "ring";
    ring.n_normal = 500;
    ring.n_anomaly = 25;
    ring.seed = 1606;
    const core::Dataset rds = synthesis::make_toy(ring);
    const auto rsb = core::one_class_split(rds, 1);
    const Matrix rtrain = rds.X.take_rows(rsb.train);
    const Matrix rtest = rds.X.take_rows(rsb.test);
    const auto rtest_y = take_labels(rds.y, rsb.test);
    const double ring_knn = eval::auroc(detectors::knn(rtrain, rtest, 5).scores, rtest_y);
    const double ring_ocsvm = eval::auroc(detectors::ocsvm(rtrain, rtest, 0.5).scores, rtest_y);
    const bool pass_c = ring_knn >= 99.0 && ring_ocsvm >= 45.0 && ring_ocsvm <= 55.0;
    report("6c toy-ring", pass_c,
           "ring knn " + fmt(ring_knn, "%.1f") + " (need >= 99), ocsvm " + fmt(ring_ocsvm, "%.1f") +
               " (window [45,55]; the scale-matched RBF mean map puts more mass on the disc "
               "interior than on the annulus, so center anomalies score as inliers and the "
               "window is unreachable for this solver)",
           now_s() - t0);
}

// ===========================================================================
// 7. Subspace recovery on small ODDS datasets (external data)
// ===========================================================================

const std::vector<std::string>& small_odds() {
    static const std::vector<std::string> names = {"wine", "glass", "wbc", "lympho", "vertebral"};
    return names;
}

void criterion_7() {
    const double t0 = now_s();
    const std::string gap = missing_files(small_odds());
    if (!gap.empty()) {
        report("7 subspace-recovery", false, "dataset unavailable: " + gap + " not found",
               now_s() - t0);
        return;
    }
    double sum_full = 0.0, sum_keep = 0.0;
    std::size_t cells = 0;
    for (std::uint64_t seed : {0ul, 1ul, 2ul}) {
        for (const auto& name : small_odds()) {
            const core::Dataset ds = core::load_dataset(odds_path(name));
            const auto sb = core::one_class_split(ds, seed);
            const auto [st, train_s] = core::standardize(ds.X.take_rows(sb.train),
                                                         ds.X.take_rows(sb.train));
            const Matrix val_s = st.transform(ds.X.take_rows(sb.val));
            const Matrix test_s = st.transform(ds.X.take_rows(sb.test));
            const auto test_y = take_labels(ds.y, sb.test);

            pretext::TaskConfig cfg;
            cfg.n_classes = 4;
            const auto task = pretext::build_task(pretext::PretextKind::kRotation, ds.d(), cfg,
                                                  nn::mix_seed(70, seed) + cells);
            nn::TrainConfig tc;
            tc.epochs = 40;
            tc.patience = 8;
            tc.seed = nn::mix_seed(71, seed) + cells;
            const auto art = pretext::train_pretext(task, nn::LossKind::kCrossEntropy, train_s,
                                                    val_s, tc, 2);
            const Matrix emb_train = art.embed(train_s);
            const Matrix emb_test = art.embed(test_s);
            const auto basis = linalg::principal_basis(emb_train);
            const Matrix ktr = linalg::residual_project(basis, emb_train, 0.9);
            const Matrix kte = linalg::residual_project(basis, emb_test, 0.9);

            auto add = [&](const Matrix& tr, const Matrix& te, double& acc) {
                acc += eval::auroc(detectors::knn(tr, te, 5).scores, test_y);
                acc += eval::auroc(detectors::lof(tr, te, 5).scores, test_y);
                acc += eval::auroc(detectors::iforest(tr, te, 100, 256, seed).scores, test_y);
                acc += eval::auroc(detectors::ocsvm(tr, te, 0.5).scores, test_y);
                acc += eval::auroc(detectors::residual_norm(tr, te, 0.5).scores, test_y);
            };
            add(emb_train, emb_test, sum_full);
            add(ktr, kte, sum_keep);
            ++cells;
        }
    }
    const double mean_full = sum_full / double(cells * 5), mean_keep = sum_keep / double(cells * 5);
    report("7 subspace-recovery", mean_keep > mean_full,
           "mean detector auroc at keep-90% " + fmt(mean_keep, "%.2f") + " vs full space " +
               fmt(mean_full, "%.2f") + " over 5 datasets x 3 seeds x 5 detectors (need keep-90% "
               "greater)",
           now_s() - t0);
}

// ===========================================================================
// 8. Synthetic-generator statistics
// ===========================================================================

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = double(a.size()), nb = double(b.size());
    std::size_t i = 0, j = 0;
    double worst = 0.0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j])
            ++i;
        else
            ++j;
        worst = std::max(worst, std::abs(double(i) / na - double(j) / nb));
    }
    return worst;
}

void criterion_8() {
    const double t0 = now_s();
    const std::size_t n = 100000, d = 4;

    // Single-component GMM with exactly known moments.
    synthesis::Gmm gmm;
    gmm.d = d;
    gmm.weights = {1.0};
    gmm.means = Matrix(1, d);
    const double mu[d] = {1.5, -2.0, 0.5, 3.0};
    for (std::size_t j = 0; j < d; ++j) gmm.means(0, j) = mu[j];
    Matrix sigma(d, d);
    {
        const Matrix a = gaussian_blob(d, d, 808);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < d; ++k) s += a(i, k) * a(j, k);
                sigma(i, j) = s + (i == j ? 0.5 : 0.0);
            }
    }
    gmm.covariances = {sigma};
    Rng seed_rng(809);
    const Matrix placeholder = synthesis::sample_gmm(gmm, 50, seed_rng);

    synthesis::AnomalyParams params;
    params.alpha = 2.0;
    params.beta = 2.0;
    params.delta = 0.01;
    params.gmm = &gmm;

    // local: sample covariance vs alpha * Sigma, relative Frobenius error.
    const Matrix local =
        synthesis::synthesize_anomalies(synthesis::AnomalyKind::kLocal, placeholder, n, params, 81);
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += local(i, j);
    for (double& v : mean) v /= double(n);
    double num = 0.0, den = 0.0;
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) {
            double cov = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                cov += (local(i, a) - mean[a]) * (local(i, b) - mean[b]);
            cov /= double(n - 1);
            const double want = params.alpha * sigma(a, b);
            num += (cov - want) * (cov - want);
            den += want * want;
        }
    const double local_err = std::sqrt(num / den);

    // cluster: sample mean vs beta * mu, relative L2 error.
    const Matrix cluster = synthesis::synthesize_anomalies(synthesis::AnomalyKind::kCluster,
                                                           placeholder, n, params, 82);
    double mnum = 0.0, mden = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += cluster(i, j);
        m /= double(n);
        mnum += (m - params.beta * mu[j]) * (m - params.beta * mu[j]);
        mden += (params.beta * mu[j]) * (params.beta * mu[j]);
    }
    const double cluster_err = std::sqrt(mnum / mden);

    // global: every value inside [delta*min, delta*max] per column, exactly.
    const Matrix gtrain = gaussian_blob(500, d, 83);
    const Matrix global =
        synthesis::synthesize_anomalies(synthesis::AnomalyKind::kGlobal, gtrain, n, params, 84);
    bool global_ok = true;
    for (std::size_t j = 0; j < d && global_ok; ++j) {
        double lo = gtrain(0, j), hi = gtrain(0, j);
        for (std::size_t i = 1; i < gtrain.rows; ++i) {
            lo = std::min(lo, gtrain(i, j));
            hi = std::max(hi, gtrain(i, j));
        }
        for (std::size_t i = 0; i < n; ++i)
            if (global(i, j) < params.delta * lo || global(i, j) > params.delta * hi)
                global_ok = false;
    }

    // dependency: marginals preserved (two-sample KS), correlations destroyed.
    Matrix dtrain(2000, d);
    Rng drng(85);
    for (std::size_t i = 0; i < dtrain.rows; ++i) {
        const double z = drng.gaussian();
        dtrain(i, 0) = z;
        dtrain(i, 1) = 0.9 * z + 0.44 * drng.gaussian();
        dtrain(i, 2) = -0.8 * z + 0.6 * drng.gaussian();
        dtrain(i, 3) = 0.7 * z + 0.71 * drng.gaussian();
    }
    const Matrix dep = synthesis::synthesize_anomalies(synthesis::AnomalyKind::kDependency, dtrain,
                                                       n, params, 86);
    double worst_ks = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        std::vector<double> a(dtrain.rows), b(n);
        for (std::size_t i = 0; i < dtrain.rows; ++i) a[i] = dtrain(i, j);
        for (std::size_t i = 0; i < n; ++i) b[i] = dep(i, j);
        worst_ks = std::max(worst_ks, ks_two_sample(std::move(a), std::move(b)));
    }
    std::vector<double> dmean(d, 0.0), dstd(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) dmean[j] += dep(i, j);
    for (double& v : dmean) v /= double(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            dstd[j] += (dep(i, j) - dmean[j]) * (dep(i, j) - dmean[j]);
    for (double& v : dstd) v = std::sqrt(v / double(n - 1));
    double corr_sum = 0.0;
    std::size_t corr_n = 0;
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a + 1; b < d; ++b) {
            double cov = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                cov += (dep(i, a) - dmean[a]) * (dep(i, b) - dmean[b]);
            cov /= double(n - 1);
            corr_sum += std::abs(cov / (dstd[a] * dstd[b]));
            ++corr_n;
        }
    const double mean_corr = corr_sum / double(corr_n);

    const bool pass = local_err <= 0.10 && cluster_err <= 0.10 && global_ok && worst_ks < 0.05 &&
                      mean_corr < 0.1;
    report("8 generator-statistics", pass,
           "local cov rel-Frobenius " + fmt(local_err) + ", cluster mean rel-L2 " +
               fmt(cluster_err) + " (both <= 0.10 at 1e5 draws, alpha=beta=2); global range " +
               (global_ok ? "exact" : "VIOLATED") + " (delta=0.01); dependency worst KS " +
               fmt(worst_ks) + " (< 0.05), mean |off-diag corr| " + fmt(mean_corr) + " (< 0.1)",
           now_s() - t0);
}

// ===========================================================================
// 9. knn hyperparameter stability on small ODDS datasets (external data)
// ===========================================================================

void criterion_9() {
    const double t0 = now_s();
    const std::string gap = missing_files(small_odds());
    if (!gap.empty()) {
        report("9 knn-stability", false, "dataset unavailable: " + gap + " not found",
               now_s() - t0);
        return;
    }
    const std::size_t ks[] = {1, 2, 5, 10, 20, 50};
    std::vector<double> means;
    for (std::size_t k : ks) {
        double sum = 0.0;
        for (const auto& name : small_odds()) {
            const core::Dataset ds = core::load_dataset(odds_path(name));
            const auto sb = core::one_class_split(ds, 0);
            const Matrix train = ds.X.take_rows(sb.train);
            const Matrix test = ds.X.take_rows(sb.test);
            // k cannot exceed the fitted rows on the smallest datasets.
            const std::size_t k_eff = std::min(k, train.rows);
            sum += eval::auroc(detectors::knn(train, test, k_eff).scores,
                               take_labels(ds.y, sb.test));
        }
        means.push_back(sum / double(small_odds().size()));
    }
    const auto [lo, hi] = std::minmax_element(means.begin(), means.end());
    const double range = *hi - *lo;
    std::string detail = "mean auroc per k {1,2,5,10,20,50}:";
    for (double m : means) detail += " " + fmt(m, "%.1f");
    report("9 knn-stability", range <= 5.0,
           detail + "; range " + fmt(range, "%.2f") + " (need <= 5)", now_s() - t0);
}

// ===========================================================================
// 10. Full-pipeline determinism on the bundled reference manifest
// ===========================================================================

void criterion_10() {
    const double t0 = now_s();
    const std::string manifest = std::string(TADLAB_ROOT) + "/manifests/reference.json";
    namespace fs = std::filesystem;
    const fs::path base =
        fs::temp_directory_path() / ("tadlab_accept_" + std::to_string(std::random_device{}()));

    pipeline::RunOptions opts;
    opts.workers = 2;
    opts.out_dir = (base / "run_a").string();
    const auto a = pipeline::run_manifest(manifest, opts);
    opts.out_dir = (base / "run_b").string();
    const auto b = pipeline::run_manifest(manifest, opts);

    const std::string csv_a = io::read_file(a.scores_csv_path);
    const std::string csv_b = io::read_file(b.scores_csv_path);
    const bool clean = a.failures.empty() && b.failures.empty();
    const bool pass = csv_a == csv_b && !csv_a.empty() && clean;
    std::error_code ec;
    fs::remove_all(base, ec);
    report("10 pipeline-determinism", pass,
           std::string("two runs of the reference manifest: score tables ") +
               (csv_a == csv_b ? "byte-identical" : "DIFFER") + " (" +
               std::to_string(csv_a.size()) + " bytes, " +
               std::to_string(a.report.table.row_labels.size()) + " rows x " +
               std::to_string(a.report.table.methods.size()) + " methods" +
               (clean ? "" : ", cell failures present") + ")",
           now_s() - t0);
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
    auto run = [&](int n, void (*fn)()) {
        if (wanted.empty() || std::find(wanted.begin(), wanted.end(), n) != wanted.end()) fn();
    };
    run(1, criterion_1);
    run(2, criterion_2);
    run(3, criterion_3);
    run(4, criterion_4);
    run(5, criterion_5);
    run(6, criterion_6);
    run(7, criterion_7);
    run(8, criterion_8);
    run(9, criterion_9);
    run(10, criterion_10);
    std::printf("%d of %d acceptance lines passed\n", g_lines - g_failures, g_lines);
    return g_failures == 0 ? 0 : 1;
}
