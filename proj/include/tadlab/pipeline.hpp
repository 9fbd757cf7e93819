#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tadlab/detectors.hpp"
#include "tadlab/eval.hpp"
#include "tadlab/nn.hpp"
#include "tadlab/pretext.hpp"
#include "tadlab/synthesis.hpp"

namespace tadlab::pipeline {

// ===========================================================================
// Experiment manifest: versioned JSON, fail-closed. Unknown keys are schema
// errors; referenced dataset paths must exist before any compute starts.
// ===========================================================================

struct DatasetEntry {
    std::string name;
    std::string path;  // empty for toys
    bool is_toy = false;
    synthesis::ToySpec toy;
};

struct TaskEntry {
    pretext::PretextKind kind = pretext::PretextKind::kRotation;
    nn::LossKind loss = nn::LossKind::kCrossEntropy;  // ignored for eicl
    pretext::TaskConfig config;
    std::string id;  // "rotation_cross_entropy", "eicl", ...
};

struct PretextBlock {
    std::vector<TaskEntry> tasks;
    std::size_t search_draws = 8;
    std::size_t max_epochs = 200;
    std::size_t patience = 10;
};

struct SynthesisBlock {
    bool enabled = false;
    std::vector<synthesis::AnomalyKind> kinds;
    std::vector<std::size_t> k_range = {1, 2, 3, 4, 5};
    double alpha = 2.0;
    double beta = 2.0;
    double delta = 0.01;
    std::size_t count = 0;  // 0 = match the real anomaly count
};

struct CorruptionBlock {
    bool enabled = false;
    synthesis::CorruptionKind kind = synthesis::CorruptionKind::kAddUninformative;
    double proportion = 0.1;
};

struct DetectorEntry {
    detectors::DetectorConfig config;
    std::string id;  // "knn_k5", "iforest_t100_s256", ...
};

struct Manifest {
    int version = 1;
    std::uint64_t seed = 0;
    bool standardize = true;
    std::string out_dir = "tadlab_out";
    std::vector<DatasetEntry> datasets;
    PretextBlock pretext;  // tasks may be empty: detectors run on raw features only
    std::vector<DetectorEntry> detectors;
    std::vector<double> subspace_fractions = {1.0};  // 1.0 = no projection
    SynthesisBlock synthesis;
    CorruptionBlock corruption;
};

// Schema check only; throws SchemaError on structural problems and
// ValidationError on out-of-range values or empty grids.
Manifest parse_manifest(const std::string& text);

// parse_manifest plus existence checks for every referenced dataset path.
Manifest load_manifest(const std::string& path);

// Stable column name for a detector configuration.
std::string detector_id(const detectors::DetectorConfig& config);

// Stable task id, e.g. "rotation_cross_entropy" or "eicl".
std::string task_id(const TaskEntry& task);

// ===========================================================================
// Execution
// ===========================================================================

struct RunOptions {
    bool resume = false;
    std::size_t workers = 1;
    std::string out_dir;  // overrides the manifest when non-empty
    bool has_seed = false;
    std::uint64_t seed = 0;  // overrides the manifest when has_seed
};

struct RunOutcome {
    eval::EvalReport report;
    std::vector<std::string> failures;  // "cell: message", run continues past each
    std::string out_dir;
    std::string scores_csv_path;
    std::string report_json_path;
    std::size_t encoders_trained = 0;
    std::size_t cache_hits = 0;
};

// TADLAB_CACHE overrides; default is <out_dir>/cache.
std::string cache_directory(const std::string& out_dir);

// Content hash over training data bytes, task + training configuration, and
// seed; any change to one of them changes the key.
std::uint64_t encoder_cache_key(const Matrix& train_x, const Matrix& val_x,
                                const TaskEntry& task, const PretextBlock& block,
                                std::uint64_t seed);

// Stages: ingest, split, corrupt/synthesize, pretext-train, embed, project,
// detect, evaluate, report. Writes scores.csv, report.json, plot SVGs, and a
// line-delimited JSON log under out_dir. Failed cells leave NaN holes and an
// entry in failures; everything else still runs.
RunOutcome run_manifest(const std::string& manifest_path, const RunOptions& opts = {});

}  // namespace tadlab::pipeline
