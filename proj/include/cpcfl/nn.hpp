#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpcfl/errors.hpp"
#include "cpcfl/rng.hpp"
#include "cpcfl/tensor.hpp"

namespace cpcfl {

// ---------------------------------------------------------------------------
// Layers and networks
// ---------------------------------------------------------------------------

enum class LayerKind { dense, relu, batchnorm, softmax };

const char* layer_kind_name(LayerKind kind);

struct LayerSpec {
    LayerKind kind;
    std::size_t in_dim = 0;   // dense/batchnorm
    std::size_t out_dim = 0;  // dense/batchnorm (== in_dim for batchnorm)
};

constexpr double kBatchnormEps = 1e-5;
constexpr double kBatchnormMomentum = 0.9;  // running = m*running + (1-m)*batch
constexpr double kProbFloor = 1e-12;        // clamp inside log of the CE loss

struct Layer {
    LayerKind kind = LayerKind::relu;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    // dense
    Tensor weight;  // [in_dim, out_dim]
    Tensor bias;    // [out_dim]
    // batchnorm
    Tensor gamma, beta;               // [dim]
    Tensor running_mean, running_var; // [dim]
};

struct Network {
    std::vector<Layer> layers;

    bool empty() const { return layers.empty(); }
    // First/last declared width (dense or batchnorm layers).
    std::size_t in_dim() const;
    std::size_t out_dim() const;
};

// He-uniform weights (limit sqrt(6/fan_in)), zero biases, gamma=1/beta=0,
// running stats (0,1). Draw order is fixed, so a seed pins every parameter.
Layer make_layer(const LayerSpec& spec, Rng& rng);
Network make_network(const std::vector<LayerSpec>& specs, Rng& rng);

// Trainable parameters in a fixed order (dense: weight, bias; batchnorm:
// gamma, beta). state_tensors additionally includes batchnorm running stats;
// it is the enumeration used by aggregation and checkpoints.
std::vector<Tensor*> trainable_tensors(Network& net);
std::vector<const Tensor*> trainable_tensors(const Network& net);
std::vector<Tensor*> state_tensors(Network& net);
std::vector<const Tensor*> state_tensors(const Network& net);

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

enum class RunMode { train, eval };

struct LayerTrace {
    Tensor input;
    Tensor output;
    // batchnorm, train mode
    Tensor mean, var, x_hat;
};

struct NetTrace {
    std::vector<LayerTrace> layers;
    bool valid = false;
};

// Runs the stack on a [batch, features] tensor. In train mode batchnorm uses
// batch statistics and, when trace is given, records what backward needs.
// Eval mode uses running statistics and is a deterministic map.
Tensor net_forward(const Network& net, const Tensor& batch, RunMode mode,
                   NetTrace* trace = nullptr, const char* net_name = "net");

struct NetGrads {
    std::vector<Tensor> tensors;  // aligned with trainable_tensors(net)
};

NetGrads zero_grads(const Network& net);
void accumulate_grads(NetGrads& into, const NetGrads& from);

// Accumulates parameter gradients into grads and returns d(input).
Tensor net_backward(const Network& net, const NetTrace& trace, const Tensor& d_output,
                    NetGrads& grads);

// Folds the trace's batch statistics into running_mean/running_var. Training
// loops call this after each train-mode forward; keeping it explicit makes
// net_forward pure, which the finite-difference checks rely on.
void commit_batchnorm_stats(Network& net, const NetTrace& trace,
                            double momentum = kBatchnormMomentum);

// ---------------------------------------------------------------------------
// Model construction
// ---------------------------------------------------------------------------

struct ArchConfig {
    std::size_t input_dim = 16;
    std::vector<std::size_t> encoder_widths = {128, 64};
    std::size_t rep_dim = 32;
    int head_hidden_layers = 0;  // 0..3 extra ReLU dense layers before the output
    std::size_t head_hidden_dim = 32;
    std::size_t class_count = 10;
    std::size_t projector_dim = 32;
    std::size_t predictor_bottleneck = 8;

    bool operator==(const ArchConfig&) const = default;
};

enum class PretrainMethod { simclr, byol, simsiam };

const char* pretrain_method_name(PretrainMethod method);
PretrainMethod pretrain_method_from_name(const std::string& name);

struct ModelParams {
    ArchConfig arch;
    Network encoder;
    Network classifier;
    std::optional<Network> projector;
    std::optional<Network> predictor;
    std::optional<Network> momentum_encoder;
    std::optional<Network> momentum_projector;
};

Network build_encoder(const ArchConfig& arch, Rng& rng);
Network build_classifier(const ArchConfig& arch, Rng& rng);

// Encoder + classifier head, deterministic for a given seed.
ModelParams build_model(const ArchConfig& arch, std::uint64_t seed);

// Adds the projector (all methods), predictor (byol/simsiam) and momentum
// copies (byol). Momentum networks start as exact copies of their online
// counterparts.
void attach_contrastive_heads(ModelParams& model, PretrainMethod method, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Branch-level forward/backward
// ---------------------------------------------------------------------------

enum class Branch { encoder, encoder_classifier, encoder_projector, predictor };

struct ForwardTrace {
    Branch branch = Branch::encoder;
    NetTrace first;   // encoder (or predictor for Branch::predictor)
    NetTrace second;  // classifier / projector
    bool valid = false;
};

Tensor forward(const ModelParams& model, Branch branch, const Tensor& batch, RunMode mode,
               ForwardTrace* trace = nullptr);

struct ModelGrads {
    NetGrads encoder;
    NetGrads classifier;
    NetGrads projector;
    NetGrads predictor;
    NetGrads momentum_encoder;
    NetGrads momentum_projector;
};

// All-zero gradients for every network present in the model. Branches not on
// the differentiated path (momentum copies, stop-gradient targets) stay
// exactly zero.
ModelGrads zero_model_grads(const ModelParams& model);
void accumulate_model_grads(ModelGrads& into, const ModelGrads& from);

// Throws StateError unless trace comes from a train-mode forward. d_input,
// when non-null, receives the gradient w.r.t. the batch.
ModelGrads backward(const ModelParams& model, const ForwardTrace& trace, const Tensor& loss_grad,
                    Tensor* d_input = nullptr);

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Mean over rows of -sum_m y_m log max(p_m, kProbFloor). Rows of probs must
// sum to 1 within 1e-9; onehot rows must contain exactly one 1.
double cross_entropy(const Tensor& probs, const Tensor& onehot);
Tensor cross_entropy_grad(const Tensor& probs, const Tensor& onehot);

// (v1/|v1|) . (v2/|v2|). A zero-norm input yields 0 and sets *degenerate
// instead of throwing; dead-ReLU representations must not kill a run.
double cosine_similarity(std::span<const double> v1, std::span<const double> v2,
                         bool* degenerate = nullptr);

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Tensor*> params, AdamConfig cfg = {});

    void step(const std::vector<const Tensor*>& grads);
    std::uint64_t steps() const { return t_; }

private:
    std::vector<Tensor*> params_;
    std::vector<Tensor> m_, v_;
    AdamConfig cfg_;
    std::uint64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Small helpers shared by pretraining, federation and metrics
// ---------------------------------------------------------------------------

Tensor one_hot(const std::vector<int>& labels, std::size_t class_count);
std::vector<int> argmax_rows(const Tensor& probs);
double accuracy(const Tensor& probs, const std::vector<int>& labels);

// Full-batch eval-mode cross-entropy of a model on a labeled set; the model
// selection rule evaluates exactly this.
double dataset_loss(const ModelParams& model, const Tensor& features,
                    const std::vector<int>& labels);

struct CeTrainStats {
    double mean_loss = 0.0;  // sample-weighted mean over all optimizer steps
    std::size_t steps = 0;
};

// Minibatch cross-entropy training with Adam (fresh optimizer state). The
// classifier trains for all epochs; the encoder participates only in epochs
// [0, encoder_epochs) and is left bitwise untouched afterwards.
CeTrainStats train_cross_entropy(ModelParams& model, const Tensor& features,
                                 const std::vector<int>& labels, std::size_t epochs,
                                 std::size_t encoder_epochs, const AdamConfig& adam,
                                 std::size_t batch_size, Rng& rng,
                                 std::vector<double>* epoch_losses = nullptr);

}  // namespace cpcfl
