#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "tadlab/core.hpp"
#include "tadlab/eval.hpp"
#include "tadlab/io.hpp"
#include "tadlab/pipeline.hpp"

using namespace tadlab;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test run; removed on destruction.
struct TempDir {
    fs::path path;

    TempDir() {
        path = fs::temp_directory_path() /
               ("tadlab_pipe_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string minimal_manifest(const std::string& out_dir) {
    return R"({
      "version": 1,
      "seed": 7,
      "out_dir": ")" +
           out_dir + R"(",
      "datasets": [{"toy": {"name": "gaussians", "n_normal": 120, "n_anomaly": 12}}],
      "detectors": [{"kind": "knn", "k": 5}]
    })";
}

}  // namespace

// ===========================================================================
// Manifest schema
// ===========================================================================

TEST_CASE("minimal manifest parses with documented defaults") {
    const auto m = pipeline::parse_manifest(minimal_manifest("/tmp/x"));
    CHECK(m.version == 1);
    CHECK(m.seed == 7);
    CHECK(m.standardize);
    CHECK(m.out_dir == "/tmp/x");
    REQUIRE(m.datasets.size() == 1);
    CHECK(m.datasets[0].is_toy);
    CHECK(m.datasets[0].name == "gaussians");
    CHECK(m.datasets[0].toy.seed == 7);  // inherits the manifest seed
    REQUIRE(m.detectors.size() == 1);
    CHECK(m.detectors[0].id == "knn_k5");
    CHECK(m.pretext.tasks.empty());
    CHECK(m.pretext.search_draws == 8);
    REQUIRE(m.subspace_fractions.size() == 1);
    CHECK(m.subspace_fractions[0] == 1.0);
    CHECK_FALSE(m.synthesis.enabled);
    CHECK_FALSE(m.corruption.enabled);
}

TEST_CASE("unknown keys are rejected at every level") {
    CHECK_THROWS_AS(pipeline::parse_manifest(R"({"version":1,"seed":0,"bogus":1,
        "datasets":[{"toy":"ring"}],"detectors":[{"kind":"knn"}]})"),
                    SchemaError);
    CHECK_THROWS_AS(pipeline::parse_manifest(R"({"version":1,"seed":0,
        "datasets":[{"toy":"ring","extra":2}],"detectors":[{"kind":"knn"}]})"),
                    SchemaError);
    CHECK_THROWS_AS(pipeline::parse_manifest(R"({"version":1,"seed":0,
        "datasets":[{"toy":"ring"}],"detectors":[{"kind":"knn","nu":0.5}]})"),
                    SchemaError);
    CHECK_THROWS_AS(pipeline::parse_manifest(R"({"version":1,"seed":0,
        "datasets":[{"toy":{"name":"ring","spread":2}}],"detectors":[{"kind":"knn"}]})"),
                    SchemaError);
}

TEST_CASE("version and seed are mandatory, version must be 1") {
    CHECK_THROWS_AS(pipeline::parse_manifest(R"({"seed":0,
        "datasets":[{"toy":"ring"}],"detectors":[{"kind":"knn"}]})"),
                    SchemaError);
    CHECK_THROWS_AS(pipeline::parse_manifest(R"({"version":1,
        "datasets":[{"toy":"ring"}],"detectors":[{"kind":"knn"}]})"),
                    SchemaError);
    CHECK_THROWS_AS(pipeline::parse_manifest(R"({"version":2,"seed":0,
        "datasets":[{"toy":"ring"}],"detectors":[{"kind":"knn"}]})"),
                    SchemaError);
}

TEST_CASE("grids must be non-empty and well formed") {
    CHECK_THROWS_AS(pipeline::parse_manifest(R"({"version":1,"seed":0,
        "datasets":[],"detectors":[{"kind":"knn"}]})"),
                    ValidationError);
    CHECK_THROWS_AS(pipeline::parse_manifest(R"({"version":1,"seed":0,
        "datasets":[{"toy":"ring"}],"detectors":[]})"),
                    ValidationError);
    CHECK_THROWS_AS(pipeline::parse_manifest(R"({"version":1,"seed":0,
        "datasets":[{"toy":"ring"}],"detectors":[{"kind":"knn"}],
        "pretext":{"tasks":[]}})"),
                    ValidationError);
    // exactly one of path | toy
    CHECK_THROWS_AS(pipeline::parse_manifest(R"({"version":1,"seed":0,
        "datasets":[{"path":"a.csv","toy":"ring"}],"detectors":[{"kind":"knn"}]})"),
                    SchemaError);
    CHECK_THROWS_AS(pipeline::parse_manifest(R"({"version":1,"seed":0,
        "datasets":[{"name":"x"}],"detectors":[{"kind":"knn"}]})"),
                    SchemaError);
    CHECK_THROWS_AS(pipeline::parse_manifest(R"({"version":1,"seed":0,
        "datasets":[{"toy":"nonesuch"}],"detectors":[{"kind":"knn"}]})"),
                    ValidationError);
}

TEST_CASE("value ranges are validated before any compute") {
    const auto bad = [](const std::string& detector) {
        return R"({"version":1,"seed":0,"datasets":[{"toy":"ring"}],"detectors":[)" + detector +
               "]}";
    };
    CHECK_THROWS_AS(pipeline::parse_manifest(bad(R"({"kind":"ocsvm","nu":0.0})")),
                    ValidationError);
    CHECK_THROWS_AS(pipeline::parse_manifest(bad(R"({"kind":"residual_norm","fraction":1.5})")),
                    ValidationError);
    CHECK_THROWS_AS(pipeline::parse_manifest(bad(R"({"kind":"knn","k":-3})")), ValidationError);
    CHECK_THROWS_AS(pipeline::parse_manifest(bad(R"({"kind":"knn","k":[]})")), ValidationError);
    CHECK_THROWS_AS(pipeline::parse_manifest(R"({"version":1,"seed":0,
        "datasets":[{"toy":"ring"}],"detectors":[{"kind":"knn"}],
        "subspace_fractions":[0.5,0.0]})"),
                    ValidationError);
    CHECK_THROWS_AS(pipeline::parse_manifest(R"({"version":1,"seed":0,
        "datasets":[{"toy":"ring"}],"detectors":[{"kind":"knn"}],
        "corruption":{"kind":"missing_values","proportion":1.0}})"),
                    ValidationError);
    CHECK_THROWS_AS(pipeline::parse_manifest(R"({"version":1,"seed":0,
        "datasets":[{"toy":"ring"}],"detectors":[{"kind":"knn"}],
        "synthesis":{"kinds":[]}})"),
                    ValidationError);
}

TEST_CASE("duplicates are rejected: names, configurations, fractions") {
    CHECK_THROWS_AS(pipeline::parse_manifest(R"({"version":1,"seed":0,
        "datasets":[{"toy":"ring"},{"toy":"ring"}],"detectors":[{"kind":"knn"}]})"),
                    ValidationError);
    CHECK_THROWS_AS(pipeline::parse_manifest(R"({"version":1,"seed":0,
        "datasets":[{"toy":"ring"}],"detectors":[{"kind":"knn","k":[5,5]}]})"),
                    ValidationError);
    CHECK_THROWS_AS(pipeline::parse_manifest(R"({"version":1,"seed":0,
        "datasets":[{"toy":"ring"}],"detectors":[{"kind":"knn"}],
        "subspace_fractions":[1.0,1.0]})"),
                    ValidationError);
}

TEST_CASE("detector grids expand as a Cartesian product with stable ids") {
    const auto m = pipeline::parse_manifest(R"({"version":1,"seed":0,
        "datasets":[{"toy":"ring"}],
        "detectors":[
            {"kind":"knn","k":[1,5,10]},
            {"kind":"iforest","n_trees":[50,100],"subsample":64},
            {"kind":"ocsvm","nu":0.5,"gamma":["scale",2.0]},
            {"kind":"residual_norm","fraction":[0.25]}
        ]})");
    std::vector<std::string> ids;
    for (const auto& d : m.detectors) ids.push_back(d.id);
    const std::vector<std::string> want = {"knn_k1",          "knn_k5",
                                           "knn_k10",         "iforest_t50_s64",
                                           "iforest_t100_s64", "ocsvm_nu0.5",
                                           "ocsvm_nu0.5_g2",  "residual_f0.25"};
    CHECK(ids == want);
    CHECK(m.detectors[5].config.gamma == detectors::kGammaScale);
    CHECK(m.detectors[6].config.gamma == 2.0);
}

TEST_CASE("task ids combine kind and loss; incompatible pairs are rejected") {
    const auto m = pipeline::parse_manifest(R"({"version":1,"seed":0,
        "datasets":[{"toy":"ring"}],"detectors":[{"kind":"knn"}],
        "pretext":{"tasks":[
            {"kind":"rotation"},
            {"kind":"rotation","loss":"arpl"},
            {"kind":"contrastive_mask","loss":"infonce"},
            {"kind":"eicl"}
        ],"search_draws":2}})");
    REQUIRE(m.pretext.tasks.size() == 4);
    CHECK(m.pretext.tasks[0].id == "rotation_cross_entropy");
    CHECK(m.pretext.tasks[1].id == "rotation_arpl");
    CHECK(m.pretext.tasks[2].id == "contrastive_mask_infonce");
    CHECK(m.pretext.tasks[3].id == "eicl");
    CHECK(m.pretext.search_draws == 2);

    CHECK_THROWS_AS(pipeline::parse_manifest(R"({"version":1,"seed":0,
        "datasets":[{"toy":"ring"}],"detectors":[{"kind":"knn"}],
        "pretext":{"tasks":[{"kind":"rotation","loss":"infonce"}]}})"),
                    ValidationError);
}

TEST_CASE("load_manifest rejects missing dataset paths before compute") {
    TempDir tmp;
    const std::string manifest = tmp.file("m.json");
    io::write_file(manifest, R"({"version":1,"seed":0,
        "datasets":[{"path":"/nonexistent/x.csv"}],"detectors":[{"kind":"knn"}]})");
    CHECK_THROWS_AS(pipeline::load_manifest(manifest), ValidationError);
    // nothing was written next to the manifest
    std::size_t entries = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(tmp.path)) ++entries;
    CHECK(entries == 1);
}

// ===========================================================================
// Cache keys
// ===========================================================================

TEST_CASE("encoder cache key is sensitive to data, config, and seed") {
    Matrix train(4, 3), val(2, 3);
    for (std::size_t i = 0; i < train.data.size(); ++i) train.data[i] = double(i);
    for (std::size_t i = 0; i < val.data.size(); ++i) val.data[i] = double(i) * 0.5;

    pipeline::TaskEntry task;
    task.kind = pretext::PretextKind::kRotation;
    task.loss = nn::LossKind::kCrossEntropy;
    task.id = pipeline::task_id(task);
    pipeline::PretextBlock block;

    const auto base = pipeline::encoder_cache_key(train, val, task, block, 7);
    CHECK(base == pipeline::encoder_cache_key(train, val, task, block, 7));

    Matrix train2 = train;
    train2(0, 0) += 1e-9;
    CHECK(base != pipeline::encoder_cache_key(train2, val, task, block, 7));

    Matrix val2 = val;
    val2(0, 0) += 1e-9;
    CHECK(base != pipeline::encoder_cache_key(train, val2, task, block, 7));

    auto task2 = task;
    task2.config.rate = 0.4;
    CHECK(base != pipeline::encoder_cache_key(train, val, task2, block, 7));

    auto task3 = task;
    task3.loss = nn::LossKind::kArpl;
    CHECK(base != pipeline::encoder_cache_key(train, val, task3, block, 7));

    auto block2 = block;
    block2.search_draws = 4;
    CHECK(base != pipeline::encoder_cache_key(train, val, task, block2, 7));

    CHECK(base != pipeline::encoder_cache_key(train, val, task, block, 8));
}

TEST_CASE("cache directory honors the environment override") {
    unsetenv("TADLAB_CACHE");
    CHECK(pipeline::cache_directory("/tmp/out") == "/tmp/out/cache");
    setenv("TADLAB_CACHE", "/tmp/elsewhere", 1);
    CHECK(pipeline::cache_directory("/tmp/out") == "/tmp/elsewhere");
    unsetenv("TADLAB_CACHE");
}

// ===========================================================================
// run_manifest
// ===========================================================================

TEST_CASE("one toy, one detector, no pretext: exactly one AUROC cell") {
    unsetenv("TADLAB_CACHE");
    TempDir tmp;
    const std::string manifest = tmp.file("m.json");
    io::write_file(manifest, minimal_manifest(tmp.file("out")));

    const auto outcome = pipeline::run_manifest(manifest);
    CHECK(outcome.failures.empty());
    const auto& t = outcome.report.table;
    REQUIRE(t.row_labels.size() == 1);
    REQUIRE(t.methods.size() == 1);
    CHECK(t.row_labels[0] == "gaussians");
    CHECK(t.methods[0] == "raw/knn_k5");
    const double v = t.get(0, "raw/knn_k5");
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
    CHECK(v <= 100.0);
    CHECK(outcome.report.ranks.methods.empty());  // too few methods for ranks

    CHECK(io::file_exists(outcome.scores_csv_path));
    CHECK(io::file_exists(outcome.report_json_path));
    CHECK(io::file_exists(tmp.file("out") + "/run.log"));

    // the written table round-trips
    const auto back = eval::ScoreTable::from_csv(io::read_file(outcome.scores_csv_path));
    CHECK(back.methods == t.methods);
    CHECK(back.get(0, "raw/knn_k5") == doctest::Approx(v).epsilon(1e-12));
}

TEST_CASE("pretext run: resume retrains nothing and reproduces report bytes") {
    unsetenv("TADLAB_CACHE");
    TempDir tmp;
    const std::string out_dir = tmp.file("out");
    const std::string manifest = tmp.file("m.json");
    io::write_file(manifest, R"({
        "version": 1,
        "seed": 11,
        "out_dir": ")" + out_dir + R"(",
        "datasets": [{"toy": {"name": "gaussians", "n_normal": 120, "n_anomaly": 10}}],
        "pretext": {"tasks": [{"kind": "rotation", "n_classes": 2}],
                    "search_draws": 1, "max_epochs": 2, "patience": 1},
        "detectors": [{"kind": "knn", "k": 3}, {"kind": "residual_norm", "fraction": 0.5}],
        "subspace_fractions": [1.0, 0.5]
    })");

    pipeline::RunOptions opts;
    opts.workers = 2;
    const auto first = pipeline::run_manifest(manifest, opts);
    CHECK(first.failures.empty());
    CHECK(first.encoders_trained == 1);
    CHECK(first.cache_hits == 0);

    // spaces x detectors, fixed order
    const std::vector<std::string> want = {
        "raw/knn_k3",
        "raw/residual_f0.5",
        "rotation_cross_entropy/knn_k3",
        "rotation_cross_entropy/residual_f0.5",
        "rotation_cross_entropy@p50/knn_k3",
        "rotation_cross_entropy@p50/residual_f0.5",
    };
    CHECK(first.report.table.methods == want);
    REQUIRE(first.report.table.row_labels.size() == 1);
    for (const auto& mname : want) CHECK(std::isfinite(first.report.table.get(0, mname)));

    const std::string scores1 = io::read_file(first.scores_csv_path);
    const std::string report1 = io::read_file(first.report_json_path);

    opts.resume = true;
    const auto second = pipeline::run_manifest(manifest, opts);
    CHECK(second.failures.empty());
    CHECK(second.encoders_trained == 0);  // every encoder came from the cache
    CHECK(second.cache_hits == 1);
    CHECK(io::read_file(second.scores_csv_path) == scores1);
    CHECK(io::read_file(second.report_json_path) == report1);
}

TEST_CASE("failed cells leave holes and failure records, the run continues") {
    unsetenv("TADLAB_CACHE");
    TempDir tmp;
    const std::string manifest = tmp.file("m.json");
    io::write_file(manifest, R"({
        "version": 1,
        "seed": 3,
        "out_dir": ")" + tmp.file("out") + R"(",
        "datasets": [{"toy": {"name": "gaussians", "n_normal": 120, "n_anomaly": 10}}],
        "detectors": [{"kind": "knn", "k": 5}, {"kind": "lof", "k": 500}]
    })");

    const auto outcome = pipeline::run_manifest(manifest);
    REQUIRE(outcome.failures.size() == 1);
    CHECK(outcome.failures[0].find("lof_k500") != std::string::npos);
    const auto& t = outcome.report.table;
    CHECK(std::isfinite(t.get(0, "raw/knn_k5")));
    CHECK(std::isnan(t.get(0, "raw/lof_k500")));
    CHECK(io::file_exists(outcome.report_json_path));  // partial results written
}

TEST_CASE("synthesis adds one scored row per anomaly kind") {
    unsetenv("TADLAB_CACHE");
    TempDir tmp;
    const std::string manifest = tmp.file("m.json");
    io::write_file(manifest, R"({
        "version": 1,
        "seed": 5,
        "out_dir": ")" + tmp.file("out") + R"(",
        "datasets": [{"toy": {"name": "gaussians", "n_normal": 160, "n_anomaly": 12}}],
        "detectors": [{"kind": "knn", "k": 5}],
        "synthesis": {"kinds": ["global", "dependency"], "count": 20}
    })");

    const auto outcome = pipeline::run_manifest(manifest);
    CHECK(outcome.failures.empty());
    const auto& t = outcome.report.table;
    REQUIRE(t.row_labels.size() == 3);
    CHECK(t.row_labels[0] == "gaussians");
    CHECK(t.row_labels[1] == "gaussians#global");
    CHECK(t.row_labels[2] == "gaussians#dependency");
    for (std::size_t r = 0; r < 3; ++r) CHECK(std::isfinite(t.get(r, "raw/knn_k5")));
}

TEST_CASE("corruption changes the feature space before detection") {
    unsetenv("TADLAB_CACHE");
    TempDir tmp;
    const std::string manifest = tmp.file("m.json");
    io::write_file(manifest, R"({
        "version": 1,
        "seed": 9,
        "out_dir": ")" + tmp.file("out") + R"(",
        "datasets": [{"toy": {"name": "gaussians", "n_normal": 160, "n_anomaly": 12}}],
        "detectors": [{"kind": "knn", "k": 5}],
        "corruption": {"kind": "add_uninformative", "proportion": 0.5}
    })");

    const auto outcome = pipeline::run_manifest(manifest);
    CHECK(outcome.failures.empty());
    CHECK(std::isfinite(outcome.report.table.get(0, "raw/knn_k5")));
}

// ===========================================================================
// CLI binary: the composable subcommand surface
// ===========================================================================

#ifdef TADLAB_CLI_PATH

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(TADLAB_CLI_PATH) + " " + args;
    return std::system(cmd.c_str());
}

}  // namespace

TEST_CASE("cli: toy writes a two-feature labeled csv") {
    TempDir tmp;
    const std::string out = tmp.file("ring.csv");
    REQUIRE(run_cli("toy --name ring --seed 1 --out " + out + " > /dev/null") == 0);
    const core::Dataset ds = core::load_dataset(out);
    CHECK(ds.d() == 2);
    CHECK(ds.n_anomalies() > 0);
}

TEST_CASE("cli: detect emits scores, eval prints the matching auroc") {
    TempDir tmp;
    const std::string train = tmp.file("t.csv");
    const std::string test = tmp.file("q.csv");
    REQUIRE(run_cli("toy --name gaussians --seed 2 --n-anomaly 1 --out " + train +
                    " > /dev/null") == 0);
    REQUIRE(run_cli("toy --name gaussians --seed 3 --n-normal 80 --n-anomaly 20 --out " + test +
                    " > /dev/null") == 0);

    const std::string scores = tmp.file("s.csv");
    REQUIRE(run_cli("detect --kind knn --k 5 --train " + train + " --test " + test + " --out " +
                    scores) == 0);
    // stdout and --out agree
    const std::string scores2 = tmp.file("s2.csv");
    REQUIRE(run_cli("detect --kind knn --k 5 --train " + train + " --test " + test + " > " +
                    scores2) == 0);
    CHECK(io::read_file(scores) == io::read_file(scores2));

    const std::string printed = tmp.file("auroc.txt");
    REQUIRE(run_cli("eval --scores " + scores + " --labels " + test + " > " + printed) == 0);

    const core::Dataset te = core::load_dataset(test);
    const core::Dataset tr = core::load_dataset(train);
    const auto sv = detectors::knn(tr.X, te.X, 5);
    const double want = eval::auroc(sv.scores, te.y);
    const double got = std::stod(io::read_file(printed));
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("cli: split then train then embed round trip") {
    TempDir tmp;
    const std::string data = tmp.file("d.csv");
    const std::string split = tmp.file("split.json");
    const std::string art = tmp.file("artifact");
    const std::string emb = tmp.file("emb.csv");
    REQUIRE(run_cli("toy --name gaussians --seed 4 --n-normal 120 --n-anomaly 10 --out " + data +
                    " > /dev/null") == 0);
    REQUIRE(run_cli("split --in " + data + " --seed 11 --out " + split + " > /dev/null") == 0);
    REQUIRE(run_cli("train --in " + data + " --split " + split +
                    " --task rotation --n-classes 2 --draws 1 --epochs 2 --patience 1 --out " +
                    art + " > /dev/null") == 0);
    REQUIRE(run_cli("embed --artifact " + art + " --in " + data + " --out " + emb +
                    " > /dev/null") == 0);

    const core::Dataset original = core::load_dataset(data);
    const core::Dataset embedded = core::load_dataset(emb);
    CHECK(embedded.n() == original.n());
    CHECK(embedded.d() == nn::Network::kHidden);
    CHECK(embedded.y == original.y);

    // the embedding matches a direct artifact reload
    const pretext::EncoderArtifact loaded = pretext::load_artifact(art);
    const Matrix direct = loaded.embed(original.X);
    for (std::size_t i = 0; i < 5; ++i)
        CHECK(embedded.X(i, 0) == doctest::Approx(direct(i, 0)).epsilon(1e-12));
}

#endif  // TADLAB_CLI_PATH
