#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cpcfl/datasets.hpp"
#include "cpcfl/nn.hpp"
#include "cpcfl/rng.hpp"

namespace cpcfl {

// ---------------------------------------------------------------------------
// Augmentation (vector-data analogs of flip/crop/jitter)
// ---------------------------------------------------------------------------

struct AugmentParams {
    double noise_sigma = 0.1;  // additive gaussian noise
    double mask_prob = 0.1;    // per-coordinate zero masking
    double scale_min = 0.8;    // global scale drawn uniformly from [min, max]
    double scale_max = 1.25;
    // Sign flip of a random contiguous half-length block. Off by default:
    // unlike a horizontal image flip, it does not preserve semantics for
    // generic vector data, so it is an opt-in transform.
    double flip_prob = 0.0;

    static AugmentParams none() { return {0.0, 0.0, 1.0, 1.0, 0.0}; }
    void validate() const;
};

// One stochastic view of a sample. Applies noise, then scaling, then the
// block sign flip, then masking; the rng draw count is fixed per call.
std::vector<double> augment(std::span<const double> sample, const AugmentParams& params, Rng& rng);

// ---------------------------------------------------------------------------
// Contrastive losses
// ---------------------------------------------------------------------------

// InfoNCE over a batch of 2|B| projections. Rows (2k, 2k+1) are the two
// views of sample k by default; an explicit partner map may be supplied.
// Loss is the mean over all 2|B| anchors; the denominator for anchor i sums
// exp(Sim(z_i, z_k)/tau) over every k != i.
struct SimclrLoss {
    double loss = 0.0;
    Tensor d_projections;  // dL/dZ
};

SimclrLoss simclr_loss(const Tensor& projections, const std::vector<std::size_t>& partner,
                       double tau);
SimclrLoss simclr_loss(const Tensor& projections, double tau);

std::vector<std::size_t> adjacent_pairs(std::size_t view_count);

// Single-pair losses. The target argument carries no gradient: d_target is
// returned as exact zeros (stop-gradient / momentum-target contract).
struct PairLoss {
    double loss = 0.0;
    std::vector<double> d_prediction;
    std::vector<double> d_target;
};

// 2 - 2*Sim(p, z_target)
PairLoss byol_loss(std::span<const double> prediction, std::span<const double> target);
// -Sim(p, z_stopped)
PairLoss simsiam_loss(std::span<const double> prediction, std::span<const double> stopped);

// Batched, symmetrized (both view orderings summed), averaged over samples.
// predictions/targets have paired rows (2k, 2k+1).
struct BatchPairLoss {
    double loss = 0.0;
    Tensor d_predictions;
};

BatchPairLoss byol_batch_loss(const Tensor& predictions, const Tensor& targets);
BatchPairLoss simsiam_batch_loss(const Tensor& predictions, const Tensor& projections);

// target <- beta*target + (1-beta)*online, elementwise over all layer state.
void momentum_update(const Network& online, Network& target, double beta);

// ---------------------------------------------------------------------------
// Pre-training
// ---------------------------------------------------------------------------

struct PretrainConfig {
    PretrainMethod method = PretrainMethod::simclr;
    std::size_t epochs = 50;      // E_p
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;  // eta_p
    std::optional<double> temperature;         // tau, required iff simclr
    std::optional<double> target_update_rate;  // beta, required iff byol
    AugmentParams augment;
    std::uint64_t seed = 1;

    void validate() const;
};

struct PretrainResult {
    Network encoder;
    std::vector<double> epoch_losses;  // mean contrastive loss per epoch
};

// Algorithm: per batch, each sample is augmented into two views; the
// method-specific loss is computed over the views and the online branch is
// updated with Adam. BYOL applies the momentum update after every optimizer
// step. Returns the trained encoder; projector/predictor are discarded.
PretrainResult pretrain_encoder(const ModelParams& model, const UnlabeledDataset& data,
                                const PretrainConfig& cfg);

struct SupervisedPretrainResult {
    Network encoder;
    std::vector<double> epoch_losses;
    double train_accuracy = 0.0;
};

// Trains the full classification model with cross-entropy and keeps only the
// encoder.
SupervisedPretrainResult supervised_pretrain(const ModelParams& model, const LabeledDataset& data,
                                             std::size_t epochs, double lr,
                                             std::size_t batch_size, std::uint64_t seed);

// Trains a fresh single dense+softmax head on the frozen encoder and returns
// proxy test accuracy. The encoder is never modified.
double linear_evaluation(const Network& encoder, const LabeledDataset& proxy_train,
                         const LabeledDataset& proxy_test, std::size_t epochs, double lr,
                         std::size_t batch_size, std::uint64_t seed);

}  // namespace cpcfl
