#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tadlab/common.hpp"

namespace tadlab::nn {

enum class Mode { kTrain, kEval };

enum class LossKind {
    kCrossEntropy,
    kArpl,
    kAam,
    kBceMultilabel,
    kMse,
    kMae,
    kInfoNce,
    kVicReg,
};

LossKind loss_kind_from_string(const std::string& name);
std::string to_string(LossKind kind);
bool is_contrastive(LossKind kind);

// ===========================================================================
// Network: linear stem -> residual blocks -> linear head.
// Each block is h + dropout(relu(batchnorm(W h + b))); embeddings are the
// 128-wide activations entering the head.
// ===========================================================================

struct BnLayer {
    std::vector<double> gamma, beta;
    std::vector<double> running_mean, running_var;
};

struct Block {
    Matrix w;  // kHidden x kHidden, y = x W + b
    std::vector<double> b;
    BnLayer bn;
};

struct Network {
    static constexpr std::size_t kHidden = 128;

    std::size_t d_in = 0;
    std::size_t d_out = 0;
    double dropout = 0.1;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;

    Matrix stem_w;  // d_in x kHidden
    std::vector<double> stem_b;
    std::vector<Block> blocks;
    Matrix head_w;  // kHidden x d_out
    std::vector<double> head_b;
};

// Fan-in-scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)), drawn from
// Rng(seed) in a fixed order; BN starts at identity.
Network build_network(std::size_t d_in, std::size_t d_out, std::size_t n_blocks,
                      std::uint64_t seed);

// Trainable parameters only (running BN statistics excluded).
std::size_t parameter_count(const Network& net);

// Binary round trip including running BN statistics, so a reloaded network
// produces bit-identical eval-mode outputs.
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

struct BlockCache {
    Matrix input;      // block input (also the skip path)
    Matrix zhat;       // normalized pre-affine activations
    Matrix act;        // post-BN affine, pre-ReLU
    Matrix branch;     // after ReLU and dropout
    Matrix drop_mask;  // inverted-dropout multipliers
    std::vector<double> inv_std;
};

struct ForwardCache {
    Mode mode = Mode::kEval;
    Matrix input;
    std::vector<BlockCache> blocks;
    Matrix embedding;
    Matrix output;
};

struct ForwardResult {
    Matrix output;
    Matrix embedding;
};

// Train mode normalizes with batch statistics, applies dropout drawn from
// Rng(drop_seed), and updates running statistics; eval mode is deterministic.
ForwardResult forward_embed(Network& net, const Matrix& x, Mode mode,
                            std::uint64_t drop_seed = 0, ForwardCache* cache = nullptr);

// ===========================================================================
// Gradients and reverse mode
// ===========================================================================

struct BlockGrads {
    Matrix w;
    std::vector<double> b, gamma, beta;
};

struct Gradients {
    Matrix stem_w;
    std::vector<double> stem_b;
    std::vector<BlockGrads> blocks;
    Matrix head_w;
    std::vector<double> head_b;
    Matrix points;  // reciprocal points, present only for the arpl loss
    double radius = 0.0;

    void init_like(const Network& net, std::size_t n_points);
    void zero();
};

// Accumulates parameter gradients from upstream output/embedding gradients.
// Requires a train-mode cache; d_embedding may be empty.
void backward(const Network& net, const ForwardCache& cache, const Matrix& d_output,
              const Matrix& d_embedding, Gradients& g);

// ===========================================================================
// Losses
// ===========================================================================

struct LossSpec {
    LossKind kind = LossKind::kCrossEntropy;
    // arpl: logits are gamma_logit * squared distance to reciprocal points,
    // plus lambda_margin * max(0, radius - d_true)^2; points and radius train.
    double gamma_logit = 1.0;
    double lambda_margin = 0.1;
    Matrix points;  // n_classes x kHidden
    double radius = 1.0;
    // aam
    double aam_scale = 10.0;
    double aam_margin = 0.2;
    // infonce
    double tau = 0.2;
    // vicreg
    double lambda_inv = 25.0;
    double lambda_var = 25.0;
    double lambda_cov = 1.0;

    void validate() const;
};

void init_arpl(LossSpec& spec, std::size_t n_classes, std::uint64_t seed);

// One training example batch. Contrastive kinds carry a second view; the
// class/target slots are used per loss kind.
struct Batch {
    Matrix x;
    Matrix x_alt;
    std::vector<int> classes;
    Matrix targets;
};

// Train-mode forward + loss + full reverse mode into g (and the arpl slots).
double loss_and_grad(Network& net, const LossSpec& spec, const Batch& batch,
                     std::uint64_t drop_seed, Gradients& g);

// Loss only, either mode; used for validation and finite-difference probes.
double loss_value(Network& net, const LossSpec& spec, const Batch& batch, Mode mode,
                  std::uint64_t drop_seed);

// ===========================================================================
// Optimizer and parameter packing
// ===========================================================================

struct AdamState {
    std::vector<double> m, v;
    std::size_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

std::vector<double> pack_params(const Network& net, const LossSpec& spec);
void unpack_params(Network& net, LossSpec& spec, const std::vector<double>& flat);
std::vector<double> pack_grads(const Gradients& g);
void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, double lr);

// ===========================================================================
// Training loop
// ===========================================================================

struct TrainConfig {
    double lr = 1e-3;
    std::size_t epochs = 200;
    std::size_t batch = 256;
    std::size_t patience = 10;
    std::uint64_t seed = 0;
};

struct EpochStats {
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainedEncoder {
    Network net;  // snapshot at the best validation loss
    LossSpec loss;
    std::string task_name;
    double best_val_loss = 0.0;
    std::uint64_t seed = 0;
    std::vector<EpochStats> curve;
};

// Supplies an augmented batch for the given raw rows; aug_seed carries all
// task randomness so batches are reproducible.
using BatchFn = std::function<Batch(const Matrix& rows, std::uint64_t aug_seed)>;

// Adam + per-epoch validation (eval mode, fixed validation augmentation
// seeds); snapshots the best-validation network; stops after `patience`
// epochs without improvement. Non-finite training loss aborts with epoch and
// batch provenance.
TrainedEncoder train_encoder(const Network& init, const LossSpec& spec, const Matrix& train_x,
                             const Matrix& val_x, const BatchFn& make_batch,
                             const TrainConfig& cfg, const std::string& task_name = "");

// Eval-mode penultimate activations, no augmentation.
Matrix extract_embeddings(const TrainedEncoder& enc, const Matrix& x);

// Deterministic seed derivation for epoch/batch streams.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0,
                       std::uint64_t d = 0);

}  // namespace tadlab::nn
