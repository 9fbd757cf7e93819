#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tadlab/common.hpp"
#include "tadlab/nn.hpp"
#include "tadlab/rng.hpp"

namespace tadlab::pretext {

enum class PretextKind {
    kRotation,
    kShuffle,
    kMaskClass,
    kMaskColumns,
    kAutoencoder,
    kContrastiveRotation,
    kContrastiveShuffle,
    kContrastiveMask,
    kEicl,
};

PretextKind pretext_kind_from_string(const std::string& name);
std::string to_string(PretextKind kind);
bool is_classification(PretextKind kind);
bool is_contrastive(PretextKind kind);
bool uses_swap_corruption(PretextKind kind);

// ===========================================================================
// Task artifacts
// ===========================================================================

struct TaskConfig {
    std::size_t n_classes = 4;  // C for classification / view-family kinds
    double rate = 0.3;          // mask rate r
    std::size_t window = 0;     // eicl k_w; 0 = max(2, d/4) clamped to [1, d-1]
};

// Frozen augmentation artifacts; immutable once built.
struct PretextTask {
    PretextKind kind = PretextKind::kRotation;
    std::size_t d = 0;
    std::size_t n_classes = 0;
    double rate = 0.3;
    std::size_t window = 0;
    std::uint64_t seed = 0;
    std::vector<Matrix> rotations;                      // class 0 is identity
    std::vector<std::vector<std::size_t>> permutations; // class 0 is identity
    std::vector<std::vector<std::uint8_t>> patterns;    // each with ceil(r*d) ones
};

PretextTask build_task(PretextKind kind, std::size_t d, const TaskConfig& config,
                       std::uint64_t seed);

// Masked-attribute counts: mask kinds corrupt ceil(r*d) columns, the
// autoencoder floor(r*d) so the r -> 0 limit leaves rows untouched.
std::size_t mask_width(const PretextTask& task);
std::size_t autoencoder_width(const PretextTask& task);

// Head width implied by the task (contrastive kinds default to 128 and may be
// overridden by the search).
std::size_t default_d_out(const PretextTask& task);
std::vector<nn::LossKind> compatible_losses(PretextKind kind);

// JSON carries the discrete artifacts; rotation matrices go to the binary
// sidecar for bit-exact replication.
void save_task(const PretextTask& task, const std::string& json_path,
               const std::string& bin_path);
PretextTask load_task(const std::string& json_path, const std::string& bin_path);

// ===========================================================================
// Batch construction
// ===========================================================================

struct PretextBatch {
    nn::Batch batch;  // all kinds except eicl

    // eicl: one anchor window per row at a random start, all complement
    // windows as candidates (row-major by row then start), target = start.
    Matrix eicl_anchor;
    Matrix eicl_candidates;
    std::vector<int> eicl_targets;
};

PretextBatch make_batch(const PretextTask& task, const Matrix& x, const Matrix& train_pool,
                        Rng& rng);

std::size_t eicl_window_count(const PretextTask& task);

// ===========================================================================
// Training facade
// ===========================================================================

struct EiclEncoder {
    nn::Network net_a;  // window branch, input width k_w
    nn::Network net_b;  // complement branch, input width d - k_w
    double tau = 0.2;
    double best_val_loss = 0.0;
    std::uint64_t seed = 0;
    std::vector<nn::EpochStats> curve;
};

EiclEncoder train_eicl(const PretextTask& task, const Matrix& train_x, const Matrix& val_x,
                       const nn::TrainConfig& cfg, std::size_t n_blocks, std::size_t d_out);

// Mean over all window starts of the window-branch embeddings.
Matrix eicl_embeddings(const EiclEncoder& enc, const PretextTask& task, const Matrix& x);

// One trained encoder of either shape, with a uniform embedding interface.
struct EncoderArtifact {
    PretextTask task;
    nn::LossKind loss_kind = nn::LossKind::kCrossEntropy;
    nn::TrainedEncoder mono;
    EiclEncoder pair;

    bool is_eicl() const { return task.kind == PretextKind::kEicl; }
    double best_val_loss() const;
    const std::vector<nn::EpochStats>& curve() const;
    Matrix embed(const Matrix& x) const;
};

// Directory layout: task.json/task.bin, encoder.json, and the network
// binaries. Reloading restores bit-identical embeddings; optimizer state and
// loss internals beyond the kind are not kept.
void save_artifact(const EncoderArtifact& art, const std::string& dir);
EncoderArtifact load_artifact(const std::string& dir);

// Builds the network for the task, trains with the given loss, snapshots the
// best-validation model. The loss kind is ignored for eicl.
EncoderArtifact train_pretext(const PretextTask& task, nn::LossKind loss, const Matrix& train_x,
                              const Matrix& val_x, const nn::TrainConfig& cfg,
                              std::size_t n_blocks, std::size_t d_out_override = 0);

// ===========================================================================
// Random hyperparameter search
// ===========================================================================

struct SearchDraw {
    double lr = 0.0;
    std::size_t batch = 0;
    std::size_t blocks = 0;
    std::size_t d_out = 0;
    double val_loss = 0.0;
};

struct SearchResult {
    EncoderArtifact best;
    std::vector<SearchDraw> draws;
    std::size_t best_draw = 0;
};

// Random search: lr log-uniform in [1e-4, 1e-2], batch in {64, 256}, blocks
// in {2, 3}; contrastive kinds additionally draw the head width from
// {128, 256, 512}. Best draw by validation loss.
SearchResult random_search(const PretextTask& task, nn::LossKind loss, const Matrix& train_x,
                           const Matrix& val_x, std::uint64_t seed, std::size_t n_draws = 8,
                           std::size_t max_epochs = 200, std::size_t patience = 10);

}  // namespace tadlab::pretext
