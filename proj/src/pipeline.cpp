#include "tadlab/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "tadlab/core.hpp"
#include "tadlab/io.hpp"
#include "tadlab/linalg.hpp"
#include "tadlab/plots.hpp"

namespace tadlab::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ===========================================================================
// Manifest parsing
// ===========================================================================

namespace {

std::string fmt_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& ctx) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        const bool known =
            std::any_of(allowed.begin(), allowed.end(),
                        [&](const char* k) { return it.key() == k; });
        if (!known)
            throw SchemaError("manifest: unknown key \"" + it.key() + "\" in " + ctx);
    }
}

template <typename T>
std::vector<T> scalar_or_list(const json& j, const std::string& ctx) {
    try {
        if (j.is_array()) {
            auto v = j.get<std::vector<T>>();
            if (v.empty()) throw ValidationError("manifest: empty list for " + ctx);
            return v;
        }
        return {j.get<T>()};
    } catch (const json::exception& e) {
        throw SchemaError("manifest: bad value for " + ctx + ": " + e.what());
    }
}

// json get<unsigned> wraps negatives silently, so counts go through a signed
// read plus an explicit bound.
std::vector<std::size_t> count_list(const json& j, const std::string& ctx, long long min_value) {
    const auto raw = scalar_or_list<long long>(j, ctx);
    std::vector<std::size_t> out;
    for (long long v : raw) {
        if (v < min_value)
            throw ValidationError("manifest: " + ctx + " must be >= " + std::to_string(min_value));
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

std::size_t count_value(const json& j, const std::string& key, std::size_t fallback,
                        long long min_value) {
    if (!j.contains(key)) return fallback;
    if (j.at(key).is_array()) throw SchemaError("manifest: " + key + " must be a single value");
    return count_list(j.at(key), key, min_value).front();
}

std::vector<double> gamma_list(const json& j) {
    json arr = j.is_array() ? j : json::array({j});
    std::vector<double> out;
    for (const json& g : arr) {
        if (g.is_string()) {
            if (g.get<std::string>() != "scale")
                throw SchemaError("manifest: gamma must be a number or \"scale\"");
            out.push_back(detectors::kGammaScale);
        } else if (g.is_number()) {
            out.push_back(g.get<double>());
        } else {
            throw SchemaError("manifest: gamma must be a number or \"scale\"");
        }
    }
    if (out.empty()) throw ValidationError("manifest: empty list for gamma");
    return out;
}

DatasetEntry parse_dataset_entry(const json& dj, std::uint64_t default_seed) {
    if (!dj.is_object()) throw SchemaError("manifest: dataset entries must be objects");
    check_keys(dj, {"name", "path", "toy"}, "datasets[]");
    const bool has_path = dj.contains("path");
    const bool has_toy = dj.contains("toy");
    if (has_path == has_toy)
        throw SchemaError("manifest: dataset entries need exactly one of path or toy");

    DatasetEntry e;
    try {
        if (has_path) {
            e.path = dj.at("path").get<std::string>();
            e.name = dj.value("name", fs::path(e.path).stem().string());
        } else {
            e.is_toy = true;
            const json& tj = dj.at("toy");
            if (tj.is_string()) {
                e.toy.name = tj.get<std::string>();
                e.toy.seed = default_seed;
            } else if (tj.is_object()) {
                check_keys(tj, {"name", "n_normal", "n_anomaly", "noise", "seed"}, "toy");
                e.toy.name = tj.at("name").get<std::string>();
                e.toy.n_normal = count_value(tj, "n_normal", e.toy.n_normal, 1);
                e.toy.n_anomaly = count_value(tj, "n_anomaly", e.toy.n_anomaly, 0);
                e.toy.noise = tj.value("noise", e.toy.noise);
                e.toy.seed = tj.value("seed", default_seed);
            } else {
                throw SchemaError("manifest: toy must be a name or an object");
            }
            e.name = dj.value("name", e.toy.name);
        }
    } catch (const json::exception& ex) {
        throw SchemaError(std::string("manifest: dataset entry: ") + ex.what());
    }
    if (e.is_toy) {
        const auto& names = synthesis::toy_names();
        if (std::find(names.begin(), names.end(), e.toy.name) == names.end())
            throw ValidationError("manifest: unknown toy \"" + e.toy.name + "\"");
    }
    if (e.name.empty()) throw ValidationError("manifest: dataset name must be non-empty");
    return e;
}

TaskEntry parse_task_entry(const json& tj) {
    if (!tj.is_object()) throw SchemaError("manifest: pretext tasks must be objects");
    check_keys(tj, {"kind", "loss", "n_classes", "rate", "window"}, "pretext.tasks[]");
    TaskEntry t;
    try {
        if (!tj.contains("kind")) throw SchemaError("manifest: pretext tasks need a kind");
        t.kind = pretext::pretext_kind_from_string(tj.at("kind").get<std::string>());
        t.config.n_classes = count_value(tj, "n_classes", t.config.n_classes, 1);
        t.config.rate = tj.value("rate", t.config.rate);
        t.config.window = count_value(tj, "window", t.config.window, 0);
        if (t.kind == pretext::PretextKind::kEicl) {
            if (tj.contains("loss"))
                throw ValidationError("manifest: eicl carries its own loss; drop the loss key");
        } else {
            const auto allowed = pretext::compatible_losses(t.kind);
            if (tj.contains("loss"))
                t.loss = nn::loss_kind_from_string(tj.at("loss").get<std::string>());
            else
                t.loss = allowed.front();
            if (std::find(allowed.begin(), allowed.end(), t.loss) == allowed.end())
                throw ValidationError("manifest: loss " + nn::to_string(t.loss) +
                                      " is incompatible with task " + pretext::to_string(t.kind));
        }
    } catch (const json::exception& ex) {
        throw SchemaError(std::string("manifest: pretext task: ") + ex.what());
    }
    t.id = task_id(t);
    return t;
}

void expand_detector_entry(const json& dj, std::vector<DetectorEntry>& out) {
    if (!dj.is_object() || !dj.contains("kind"))
        throw SchemaError("manifest: detector entries need a kind");
    using DK = detectors::DetectorKind;
    const DK kind = detectors::kind_from_name(dj.at("kind").get<std::string>());
    detectors::DetectorConfig base;
    base.kind = kind;
    std::vector<detectors::DetectorConfig> expanded;

    switch (kind) {
        case DK::knn:
        case DK::lof: {
            check_keys(dj, {"kind", "k"}, "detector");
            const auto ks = dj.contains("k") ? count_list(dj.at("k"), "k", 1)
                                             : std::vector<std::size_t>{base.k};
            for (std::size_t k : ks) {
                auto c = base;
                c.k = k;
                expanded.push_back(c);
            }
            break;
        }
        case DK::iforest: {
            check_keys(dj, {"kind", "n_trees", "subsample"}, "detector");
            const auto trees = dj.contains("n_trees")
                                   ? count_list(dj.at("n_trees"), "n_trees", 1)
                                   : std::vector<std::size_t>{base.n_trees};
            const auto subs = dj.contains("subsample")
                                  ? count_list(dj.at("subsample"), "subsample", 2)
                                  : std::vector<std::size_t>{base.subsample};
            for (std::size_t t : trees)
                for (std::size_t s : subs) {
                    auto c = base;
                    c.n_trees = t;
                    c.subsample = s;
                    expanded.push_back(c);
                }
            break;
        }
        case DK::ocsvm: {
            check_keys(dj, {"kind", "nu", "gamma"}, "detector");
            const auto nus = dj.contains("nu") ? scalar_or_list<double>(dj.at("nu"), "nu")
                                               : std::vector<double>{base.nu};
            const auto gammas = dj.contains("gamma") ? gamma_list(dj.at("gamma"))
                                                     : std::vector<double>{base.gamma};
            for (double nu : nus)
                for (double g : gammas) {
                    if (!(nu > 0.0 && nu <= 1.0))
                        throw ValidationError("manifest: ocsvm nu must lie in (0, 1]");
                    if (g < 0.0)
                        throw ValidationError("manifest: ocsvm gamma must be >= 0");
                    auto c = base;
                    c.nu = nu;
                    c.gamma = g;
                    expanded.push_back(c);
                }
            break;
        }
        case DK::residual_norm: {
            check_keys(dj, {"kind", "fraction"}, "detector");
            const auto fr = dj.contains("fraction")
                                ? scalar_or_list<double>(dj.at("fraction"), "fraction")
                                : std::vector<double>{base.fraction};
            for (double f : fr) {
                if (!(f > 0.0 && f <= 1.0))
                    throw ValidationError("manifest: residual fraction must lie in (0, 1]");
                auto c = base;
                c.fraction = f;
                expanded.push_back(c);
            }
            break;
        }
    }
    for (const auto& c : expanded) out.push_back({c, detector_id(c)});
}

}  // namespace

std::string detector_id(const detectors::DetectorConfig& config) {
    using DK = detectors::DetectorKind;
    switch (config.kind) {
        case DK::knn:
            return "knn_k" + std::to_string(config.k);
        case DK::lof:
            return "lof_k" + std::to_string(config.k);
        case DK::iforest:
            return "iforest_t" + std::to_string(config.n_trees) + "_s" +
                   std::to_string(config.subsample);
        case DK::ocsvm: {
            std::string id = "ocsvm_nu" + fmt_g(config.nu);
            if (config.gamma != detectors::kGammaScale) id += "_g" + fmt_g(config.gamma);
            return id;
        }
        case DK::residual_norm:
            return "residual_f" + fmt_g(config.fraction);
    }
    throw ContractError("detector_id: unknown kind");
}

std::string task_id(const TaskEntry& task) {
    if (task.kind == pretext::PretextKind::kEicl) return pretext::to_string(task.kind);
    return pretext::to_string(task.kind) + "_" + nn::to_string(task.loss);
}

Manifest parse_manifest(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("manifest: ") + e.what());
    }
    if (!j.is_object()) throw SchemaError("manifest: top level must be an object");
    check_keys(j,
               {"version", "seed", "standardize", "out_dir", "datasets", "pretext",
                "detectors", "subspace_fractions", "synthesis", "corruption"},
               "top level");
    if (!j.contains("version")) throw SchemaError("manifest: version is required");
    if (!j.contains("seed")) throw SchemaError("manifest: seed is required");

    Manifest m;
    try {
        m.version = j.at("version").get<int>();
        if (m.version != 1)
            throw SchemaError("manifest: unsupported version " + std::to_string(m.version));
        m.seed = j.at("seed").get<std::uint64_t>();
        m.standardize = j.value("standardize", true);
        m.out_dir = j.value("out_dir", m.out_dir);

        if (!j.contains("datasets") || !j.at("datasets").is_array() || j.at("datasets").empty())
            throw ValidationError("manifest: datasets must be a non-empty list");
        for (const json& dj : j.at("datasets"))
            m.datasets.push_back(parse_dataset_entry(dj, m.seed));

        if (j.contains("pretext")) {
            const json& pj = j.at("pretext");
            check_keys(pj, {"tasks", "search_draws", "max_epochs", "patience"}, "pretext");
            if (!pj.contains("tasks") || !pj.at("tasks").is_array() || pj.at("tasks").empty())
                throw ValidationError("manifest: pretext.tasks must be a non-empty list");
            for (const json& tj : pj.at("tasks")) m.pretext.tasks.push_back(parse_task_entry(tj));
            m.pretext.search_draws = count_value(pj, "search_draws", m.pretext.search_draws, 1);
            m.pretext.max_epochs = count_value(pj, "max_epochs", m.pretext.max_epochs, 1);
            m.pretext.patience = count_value(pj, "patience", m.pretext.patience, 0);
        }

        if (!j.contains("detectors") || !j.at("detectors").is_array() ||
            j.at("detectors").empty())
            throw ValidationError("manifest: detectors must be a non-empty list");
        for (const json& dj : j.at("detectors")) expand_detector_entry(dj, m.detectors);

        if (j.contains("subspace_fractions")) {
            m.subspace_fractions =
                scalar_or_list<double>(j.at("subspace_fractions"), "subspace_fractions");
            for (double f : m.subspace_fractions)
                if (!(f > 0.0 && f <= 1.0))
                    throw ValidationError("manifest: subspace fractions must lie in (0, 1]");
        }

        if (j.contains("synthesis")) {
            const json& sj = j.at("synthesis");
            check_keys(sj, {"kinds", "k_range", "alpha", "beta", "delta", "count"}, "synthesis");
            if (!sj.contains("kinds") || !sj.at("kinds").is_array() || sj.at("kinds").empty())
                throw ValidationError("manifest: synthesis.kinds must be a non-empty list");
            for (const json& kj : sj.at("kinds"))
                m.synthesis.kinds.push_back(
                    synthesis::anomaly_kind_from_string(kj.get<std::string>()));
            if (sj.contains("k_range"))
                m.synthesis.k_range = count_list(sj.at("k_range"), "k_range", 1);
            m.synthesis.alpha = sj.value("alpha", m.synthesis.alpha);
            m.synthesis.beta = sj.value("beta", m.synthesis.beta);
            m.synthesis.delta = sj.value("delta", m.synthesis.delta);
            m.synthesis.count = count_value(sj, "count", m.synthesis.count, 0);
            m.synthesis.enabled = true;
        }

        if (j.contains("corruption")) {
            const json& cj = j.at("corruption");
            check_keys(cj, {"kind", "proportion"}, "corruption");
            if (!cj.contains("kind")) throw SchemaError("manifest: corruption needs a kind");
            m.corruption.kind =
                synthesis::corruption_kind_from_string(cj.at("kind").get<std::string>());
            m.corruption.proportion = cj.value("proportion", m.corruption.proportion);
            if (!(m.corruption.proportion > 0.0 && m.corruption.proportion < 1.0))
                throw ValidationError("manifest: corruption proportion must lie in (0, 1)");
            m.corruption.enabled = true;
        }
    } catch (const json::exception& e) {
        throw SchemaError(std::string("manifest: ") + e.what());
    }

    std::vector<std::string> names;
    for (const auto& d : m.datasets) names.push_back(d.name);
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end())
        throw ValidationError("manifest: dataset names must be unique");

    std::vector<std::string> ids;
    for (const auto& t : m.pretext.tasks) ids.push_back(t.id);
    for (const auto& d : m.detectors) ids.push_back(d.id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        throw ValidationError("manifest: duplicate task or detector configuration");

    std::vector<double> fr = m.subspace_fractions;
    std::sort(fr.begin(), fr.end());
    if (std::adjacent_find(fr.begin(), fr.end()) != fr.end())
        throw ValidationError("manifest: duplicate subspace fractions");

    return m;
}

Manifest load_manifest(const std::string& path) {
    Manifest m = parse_manifest(io::read_file(path));
    for (const auto& d : m.datasets)
        if (!d.is_toy && !io::file_exists(d.path))
            throw ValidationError("manifest references a missing file: " + d.path);
    return m;
}

// ===========================================================================
// Caching
// ===========================================================================

std::string cache_directory(const std::string& out_dir) {
    if (const char* env = std::getenv("TADLAB_CACHE"); env && *env) return env;
    return out_dir + "/cache";
}

namespace {

std::uint64_t matrix_hash(const Matrix& x, std::uint64_t h) {
    const std::uint64_t dims[2] = {x.rows, x.cols};
    h = io::fnv1a(dims, sizeof dims, h);
    return io::fnv1a(x.data.data(), x.data.size() * sizeof(double), h);
}

std::string task_descriptor(const TaskEntry& task, const PretextBlock& block) {
    std::ostringstream ss;
    ss << "kind=" << pretext::to_string(task.kind) << ";loss=" << nn::to_string(task.loss)
       << ";classes=" << task.config.n_classes << ";rate=" << task.config.rate
       << ";window=" << task.config.window << ";draws=" << block.search_draws
       << ";epochs=" << block.max_epochs << ";patience=" << block.patience;
    return ss.str();
}

}  // namespace

std::uint64_t encoder_cache_key(const Matrix& train_x, const Matrix& val_x,
                                const TaskEntry& task, const PretextBlock& block,
                                std::uint64_t seed) {
    std::uint64_t h = matrix_hash(train_x, io::fnv1a("encoder-v1"));
    h = matrix_hash(val_x, h);
    h = io::fnv1a(task_descriptor(task, block), h);
    const std::uint64_t s = seed;
    return io::fnv1a(&s, sizeof s, h);
}

// ===========================================================================
// Execution
// ===========================================================================

namespace {

class JsonlLog {
  public:
    explicit JsonlLog(const std::string& path) : os_(path, std::ios::app) {}

    void event(const std::string& stage, const std::string& cell, const std::string& what,
               const std::string& detail = "") {
        const double t = std::chrono::duration<double>(
                             std::chrono::system_clock::now().time_since_epoch())
                             .count();
        json j;
        j["t"] = t;
        j["stage"] = stage;
        j["cell"] = cell;
        j["event"] = what;
        if (!detail.empty()) j["detail"] = detail;
        std::lock_guard<std::mutex> lock(mu_);
        os_ << j.dump() << "\n";
        os_.flush();
    }

  private:
    std::ofstream os_;
    std::mutex mu_;
};

struct Prepared {
    bool ok = false;
    std::string name;
    std::uint64_t seed = 0;  // per-dataset stage seed
    Matrix train, val, test;
    std::vector<int> test_labels;
    std::vector<std::size_t> test_normals;  // row indices into test
    std::vector<std::pair<synthesis::AnomalyKind, Matrix>> synth;
};

Matrix vstack(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) throw ContractError("vstack: column mismatch");
    Matrix m(a.rows + b.rows, a.cols);
    std::copy(a.data.begin(), a.data.end(), m.data.begin());
    std::copy(b.data.begin(), b.data.end(), m.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
    return m;
}

Prepared prepare_dataset(const DatasetEntry& entry, const Manifest& m,
                         std::vector<std::string>& failures, JsonlLog& log) {
    Prepared p;
    p.name = entry.name;
    p.seed = nn::mix_seed(m.seed, io::fnv1a(entry.name));

    core::Dataset ds = entry.is_toy ? synthesis::make_toy(entry.toy)
                                    : core::load_dataset(entry.path);
    const core::SplitBundle sb = core::one_class_split(ds, m.seed);
    p.train = ds.X.take_rows(sb.train);
    p.val = ds.X.take_rows(sb.val);
    p.test = ds.X.take_rows(sb.test);
    p.test_labels.reserve(sb.test.size());
    for (std::size_t i : sb.test) p.test_labels.push_back(ds.y[i]);
    for (std::size_t i = 0; i < p.test_labels.size(); ++i)
        if (p.test_labels[i] == 0) p.test_normals.push_back(i);
    log.event("split", entry.name, "done",
              "train=" + std::to_string(p.train.rows) + " val=" + std::to_string(p.val.rows) +
                  " test=" + std::to_string(p.test.rows));

    if (m.corruption.enabled) {
        using CK = synthesis::CorruptionKind;
        synthesis::ImportanceRanking ranking;
        const bool needs_ranking = m.corruption.kind == CK::kRemoveImportant ||
                                   m.corruption.kind == CK::kSelectImportant;
        if (needs_ranking)
            ranking = synthesis::forest_importance(ds.X, ds.y, {},
                                                   nn::mix_seed(p.seed, 0xf02e57));
        synthesis::DataSplits splits{p.train, p.val, p.test};
        splits = synthesis::corrupt(m.corruption.kind, splits, m.corruption.proportion,
                                    needs_ranking ? &ranking : nullptr,
                                    nn::mix_seed(p.seed, 0xc0221));
        p.train = std::move(splits.train);
        p.val = std::move(splits.val);
        p.test = std::move(splits.test);
        log.event("corrupt", entry.name, "done",
                  synthesis::to_string(m.corruption.kind) + " d=" + std::to_string(p.train.cols));
    }

    if (m.synthesis.enabled) {
        try {
            std::size_t n_synth = m.synthesis.count;
            if (n_synth == 0) n_synth = ds.n_anomalies();
            if (n_synth == 0)
                throw ValidationError("dataset has no anomalies; set synthesis.count");

            using AK = synthesis::AnomalyKind;
            const bool needs_gmm =
                std::any_of(m.synthesis.kinds.begin(), m.synthesis.kinds.end(),
                            [](AK k) { return k == AK::kLocal || k == AK::kCluster; });
            synthesis::Gmm gmm;
            if (needs_gmm) {
                std::vector<std::size_t> ks;
                for (std::size_t k : m.synthesis.k_range)
                    if (2 * k <= p.train.rows) ks.push_back(k);
                if (ks.empty()) ks.push_back(1);
                gmm = synthesis::fit_gmm(p.train, ks, nn::mix_seed(p.seed, 0x93e4));
            }
            synthesis::AnomalyParams params;
            params.alpha = m.synthesis.alpha;
            params.beta = m.synthesis.beta;
            params.delta = m.synthesis.delta;
            params.gmm = needs_gmm ? &gmm : nullptr;
            for (AK kind : m.synthesis.kinds) {
                Matrix a = synthesis::synthesize_anomalies(
                    kind, p.train, n_synth, params,
                    nn::mix_seed(p.seed, 0x5a17, io::fnv1a(synthesis::to_string(kind))));
                p.synth.emplace_back(kind, std::move(a));
                log.event("synthesize", entry.name, "done", synthesis::to_string(kind));
            }
        } catch (const std::exception& e) {
            p.synth.clear();
            failures.push_back(entry.name + "/synthesize: " + e.what());
            log.event("synthesize", entry.name, "failed", e.what());
        }
    }

    if (m.standardize) {
        const core::Standardizer st = core::fit_standardizer(p.train);
        p.train = st.transform(p.train);
        p.val = st.transform(p.val);
        p.test = st.transform(p.test);
        for (auto& [kind, a] : p.synth) a = st.transform(a);
    }
    p.ok = true;
    return p;
}

struct CellOut {
    bool ok = false;
    bool cache_hit = false;
    std::string fail;
    Matrix emb_train, emb_test;
    std::vector<Matrix> emb_synth;  // parallel to Prepared::synth
};

Matrix embed_cached(const pretext::EncoderArtifact& art, const Matrix& x,
                    std::uint64_t enc_key, const std::string& tag,
                    const std::string& cache_dir, bool resume, std::mutex& mu) {
    std::uint64_t k = io::fnv1a(tag, enc_key);
    k = matrix_hash(x, k);
    const std::string path = cache_dir + "/emb_" + io::hex64(k) + ".bin";
    {
        std::lock_guard<std::mutex> lock(mu);
        if (resume && io::file_exists(path)) {
            std::ifstream is(path, std::ios::binary);
            if (is) return io::read_matrix(is);
        }
    }
    Matrix e = art.embed(x);
    std::lock_guard<std::mutex> lock(mu);
    std::ofstream os(path, std::ios::binary);
    if (os) io::write_matrix(os, e);
    return e;
}

CellOut run_cell(const Prepared& prep, const TaskEntry& task, const PretextBlock& block,
                 std::uint64_t manifest_seed, const std::string& cache_dir, bool resume,
                 std::mutex& mu, JsonlLog& log) {
    CellOut out;
    const std::string cell = prep.name + "/" + task.id;
    try {
        const std::uint64_t key =
            encoder_cache_key(prep.train, prep.val, task, block, manifest_seed);
        const std::string dir = cache_dir + "/enc_" + io::hex64(key);

        pretext::EncoderArtifact art;
        bool hit = false;
        {
            std::lock_guard<std::mutex> lock(mu);
            hit = resume && io::file_exists(dir + "/encoder.json");
        }
        if (hit) {
            art = pretext::load_artifact(dir);
            out.cache_hit = true;
            log.event("pretext-train", cell, "cache-hit", dir);
        } else {
            const std::uint64_t task_seed = nn::mix_seed(prep.seed, io::fnv1a(task.id));
            const pretext::PretextTask t =
                pretext::build_task(task.kind, prep.train.cols, task.config, task_seed);
            pretext::SearchResult sr =
                pretext::random_search(t, task.loss, prep.train, prep.val,
                                       nn::mix_seed(task_seed, 0x5ea2c4), block.search_draws,
                                       block.max_epochs, block.patience);
            art = std::move(sr.best);
            {
                std::lock_guard<std::mutex> lock(mu);
                pretext::save_artifact(art, dir);
            }
            log.event("pretext-train", cell, "trained",
                      "val_loss=" + fmt_g(art.best_val_loss()));
        }

        out.emb_train = embed_cached(art, prep.train, key, "train", cache_dir, resume, mu);
        out.emb_test = embed_cached(art, prep.test, key, "test", cache_dir, resume, mu);
        for (std::size_t i = 0; i < prep.synth.size(); ++i)
            out.emb_synth.push_back(embed_cached(art, prep.synth[i].second, key,
                                                 "synth" + std::to_string(i), cache_dir,
                                                 resume, mu));
        out.ok = true;
        log.event("embed", cell, "done");
    } catch (const std::exception& e) {
        out.fail = cell + ": " + e.what();
        log.event("pretext-train", cell, "failed", e.what());
    }
    return out;
}

// One scoring space per (representation, projection) pair.
struct Space {
    std::string id;
    const Matrix* train = nullptr;
    const Matrix* test = nullptr;
    const std::vector<Matrix>* synth = nullptr;  // nullptr = use raw synth list
    Matrix own_train, own_test;                  // storage for projected spaces
    std::vector<Matrix> own_synth;
};

std::string space_suffix(double fraction) {
    return "@p" + fmt_g(fraction * 100.0);
}

}  // namespace

RunOutcome run_manifest(const std::string& manifest_path, const RunOptions& opts) {
    Manifest m = load_manifest(manifest_path);
    if (!opts.out_dir.empty()) m.out_dir = opts.out_dir;
    if (opts.has_seed) m.seed = opts.seed;

    fs::create_directories(m.out_dir);
    const std::string cache_dir = cache_directory(m.out_dir);
    fs::create_directories(cache_dir);

    JsonlLog log(m.out_dir + "/run.log");
    log.event("run", "manifest", "start", manifest_path);

    RunOutcome out;
    out.out_dir = m.out_dir;

    // Ingest, split, corrupt, synthesize: serial, cheap relative to training.
    std::vector<Prepared> preps(m.datasets.size());
    for (std::size_t i = 0; i < m.datasets.size(); ++i) {
        try {
            preps[i] = prepare_dataset(m.datasets[i], m, out.failures, log);
        } catch (const std::exception& e) {
            out.failures.push_back(m.datasets[i].name + ": " + e.what());
            log.event("ingest", m.datasets[i].name, "failed", e.what());
        }
    }

    // Train/embed cells: dataset x task, parallel up to the worker cap. Cells
    // exchange state only through the filesystem cache.
    struct CellRef {
        std::size_t prep, task;
    };
    std::vector<CellRef> cells;
    for (std::size_t i = 0; i < preps.size(); ++i) {
        if (!preps[i].ok) continue;
        for (std::size_t t = 0; t < m.pretext.tasks.size(); ++t) cells.push_back({i, t});
    }
    std::vector<CellOut> cell_outs(cells.size());
    {
        const std::size_t workers = std::max<std::size_t>(1, opts.workers);
        std::mutex cache_mu;
        auto worker = [&](std::size_t w) {
            for (std::size_t c = w; c < cells.size(); c += workers)
                cell_outs[c] = run_cell(preps[cells[c].prep], m.pretext.tasks[cells[c].task],
                                        m.pretext, m.seed, cache_dir, opts.resume, cache_mu,
                                        log);
        };
        if (workers == 1 || cells.size() <= 1) {
            worker(0);
        } else {
            std::vector<std::thread> pool;
            for (std::size_t w = 0; w < std::min(workers, cells.size()); ++w)
                pool.emplace_back(worker, w);
            for (auto& th : pool) th.join();
        }
    }
    for (const auto& c : cell_outs) {
        if (!c.fail.empty()) out.failures.push_back(c.fail);
        if (c.cache_hit) ++out.cache_hits;
        else if (c.ok) ++out.encoders_trained;
    }

    // Detection and evaluation: serial for a stable report layout.
    eval::ScoreTable table;

    // Column order is fixed up front: spaces in manifest order, detectors in
    // manifest order, regardless of which cells later fail.
    std::vector<std::string> space_ids{"raw"};
    for (const auto& task : m.pretext.tasks)
        for (double f : m.subspace_fractions)
            space_ids.push_back(f == 1.0 ? task.id : task.id + space_suffix(f));
    for (const auto& sid : space_ids)
        for (const auto& det : m.detectors) table.methods.push_back(sid + "/" + det.id);

    for (std::size_t i = 0; i < preps.size(); ++i) {
        const Prepared& prep = preps[i];
        if (!prep.ok) continue;

        const std::size_t ds_row = table.add_row(prep.name);
        std::vector<std::size_t> synth_rows;
        for (const auto& [kind, a] : prep.synth)
            synth_rows.push_back(table.add_row(prep.name + "#" + synthesis::to_string(kind)));

        // Spaces hold pointers into themselves, preps, and cell_outs; the
        // exact reserve keeps those pointers stable while the list grows.
        std::vector<Space> spaces;
        spaces.reserve(1 + m.pretext.tasks.size() * m.subspace_fractions.size());
        {
            spaces.emplace_back();
            Space& raw = spaces.back();
            raw.id = "raw";
            raw.train = &prep.train;
            raw.test = &prep.test;
            for (const auto& [kind, a] : prep.synth) raw.own_synth.push_back(a);
            raw.synth = &raw.own_synth;
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (cells[c].prep != i || !cell_outs[c].ok) continue;
            const TaskEntry& task = m.pretext.tasks[cells[c].task];
            const CellOut& cell = cell_outs[c];
            for (double f : m.subspace_fractions) {
                spaces.emplace_back();
                Space& s = spaces.back();
                if (f == 1.0) {
                    s.id = task.id;
                    s.train = &cell.emb_train;
                    s.test = &cell.emb_test;
                    s.synth = &cell.emb_synth;
                } else {
                    s.id = task.id + space_suffix(f);
                    try {
                        const linalg::PrincipalBasis basis =
                            linalg::principal_basis(cell.emb_train);
                        s.own_train = linalg::residual_project(basis, cell.emb_train, f);
                        s.own_test = linalg::residual_project(basis, cell.emb_test, f);
                        for (const Matrix& a : cell.emb_synth)
                            s.own_synth.push_back(linalg::residual_project(basis, a, f));
                    } catch (const std::exception& e) {
                        out.failures.push_back(prep.name + "/" + s.id + ": " + e.what());
                        log.event("project", prep.name + "/" + s.id, "failed", e.what());
                        spaces.pop_back();
                        continue;
                    }
                    s.train = &s.own_train;
                    s.test = &s.own_test;
                    s.synth = &s.own_synth;
                }
            }
        }

        for (const Space& space : spaces) {
            for (const auto& det : m.detectors) {
                const std::string method = space.id + "/" + det.id;
                const std::string cell = prep.name + "/" + method;
                try {
                    detectors::DetectorConfig cfg = det.config;
                    cfg.seed = nn::mix_seed(prep.seed, io::fnv1a(space.id));
                    const detectors::DetectorModel model = detectors::fit(cfg, *space.train);

                    const detectors::ScoreVector sv = detectors::score(model, *space.test);
                    table.set(ds_row, method, eval::auroc(sv.scores, prep.test_labels));

                    for (std::size_t sidx = 0; sidx < synth_rows.size(); ++sidx) {
                        const Matrix normals = space.test->take_rows(prep.test_normals);
                        const Matrix queries = vstack(normals, (*space.synth)[sidx]);
                        std::vector<int> labels(normals.rows, 0);
                        labels.insert(labels.end(), (*space.synth)[sidx].rows, 1);
                        const detectors::ScoreVector ssv = detectors::score(model, queries);
                        table.set(synth_rows[sidx], method, eval::auroc(ssv.scores, labels));
                    }
                } catch (const std::exception& e) {
                    out.failures.push_back(cell + ": " + e.what());
                    log.event("detect", cell, "failed", e.what());
                }
            }
        }
        log.event("evaluate", prep.name, "done");
    }

    table.validate();
    out.report.table = table;
    out.report.summaries = eval::summarize(table);
    const bool rankable = table.methods.size() >= 3 && table.complete_rows().size() >= 5;
    if (rankable) out.report.ranks = eval::rank_compare(table);

    // Box plot over present entries per method; skipped when nothing scored.
    std::vector<std::string> plot_names;
    std::vector<std::vector<double>> plot_samples;
    for (std::size_t c = 0; c < table.methods.size(); ++c) {
        std::vector<double> vals;
        for (const auto& row : table.values)
            if (!std::isnan(row[c])) vals.push_back(row[c]);
        if (!vals.empty()) {
            plot_names.push_back(table.methods[c]);
            plot_samples.push_back(std::move(vals));
        }
    }
    if (!plot_names.empty()) {
        const std::string svg =
            eval::svg_box_plot("AUROC by method", plot_names, plot_samples, "AUROC");
        io::write_file(m.out_dir + "/scores_box.svg", svg);
        out.report.plot_files.push_back("scores_box.svg");
    }

    out.scores_csv_path = m.out_dir + "/scores.csv";
    out.report_json_path = m.out_dir + "/report.json";
    io::write_file(out.scores_csv_path, table.to_csv());
    io::write_file(out.report_json_path, out.report.to_json());
    log.event("report", "run", "done",
              "failures=" + std::to_string(out.failures.size()) +
                  " trained=" + std::to_string(out.encoders_trained) +
                  " cache_hits=" + std::to_string(out.cache_hits));
    return out;
}

}  // namespace tadlab::pipeline
