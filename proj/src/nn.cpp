#include "cpcfl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "cpcfl/kernels.hpp"

namespace cpcfl {

namespace {

std::string layer_label(const char* net_name, std::size_t index, LayerKind kind) {
    return std::string(net_name) + " layer " + std::to_string(index) + " (" +
           layer_kind_name(kind) + ")";
}

void require_positive(std::size_t dim, const char* what) {
    if (dim == 0) throw ValidationError(std::string(what) + " must be positive");
}

}  // namespace

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::dense: return "dense";
        case LayerKind::relu: return "relu";
        case LayerKind::batchnorm: return "batchnorm";
        case LayerKind::softmax: return "softmax";
    }
    return "unknown";
}

const char* pretrain_method_name(PretrainMethod method) {
    switch (method) {
        case PretrainMethod::simclr: return "simclr";
        case PretrainMethod::byol: return "byol";
        case PretrainMethod::simsiam: return "simsiam";
    }
    return "unknown";
}

PretrainMethod pretrain_method_from_name(const std::string& name) {
    if (name == "simclr") return PretrainMethod::simclr;
    if (name == "byol") return PretrainMethod::byol;
    if (name == "simsiam") return PretrainMethod::simsiam;
    throw ValidationError("unknown pre-training method: " + name);
}

std::size_t Network::in_dim() const {
    for (const Layer& l : layers) {
        if (l.kind == LayerKind::dense || l.kind == LayerKind::batchnorm) return l.in_dim;
    }
    return 0;
}

std::size_t Network::out_dim() const {
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
        if (it->kind == LayerKind::dense || it->kind == LayerKind::batchnorm) return it->out_dim;
    }
    return 0;
}

Layer make_layer(const LayerSpec& spec, Rng& rng) {
    Layer layer;
    layer.kind = spec.kind;
    switch (spec.kind) {
        case LayerKind::dense: {
            require_positive(spec.in_dim, "dense in_dim");
            require_positive(spec.out_dim, "dense out_dim");
            layer.in_dim = spec.in_dim;
            layer.out_dim = spec.out_dim;
            layer.weight = Tensor({spec.in_dim, spec.out_dim});
            layer.bias = Tensor({spec.out_dim});
            const double limit = std::sqrt(6.0 / static_cast<double>(spec.in_dim));
            for (std::size_t i = 0; i < layer.weight.size(); ++i) {
                layer.weight[i] = rng.uniform(-limit, limit);
            }
            break;
        }
        case LayerKind::batchnorm: {
            require_positive(spec.in_dim, "batchnorm dim");
            layer.in_dim = spec.in_dim;
            layer.out_dim = spec.in_dim;
            layer.gamma = Tensor({spec.in_dim});
            layer.gamma.fill(1.0);
            layer.beta = Tensor({spec.in_dim});
            layer.running_mean = Tensor({spec.in_dim});
            layer.running_var = Tensor({spec.in_dim});
            layer.running_var.fill(1.0);
            break;
        }
        case LayerKind::relu:
        case LayerKind::softmax:
            break;
    }
    return layer;
}

Network make_network(const std::vector<LayerSpec>& specs, Rng& rng) {
    Network net;
    std::size_t current = 0;  // 0 = not yet pinned
    for (const LayerSpec& spec : specs) {
        if (spec.kind == LayerKind::dense || spec.kind == LayerKind::batchnorm) {
            if (current != 0 && spec.in_dim != current) {
                throw ValidationError("layer dims do not chain: expected in_dim " +
                                      std::to_string(current) + ", got " +
                                      std::to_string(spec.in_dim));
            }
            current = spec.kind == LayerKind::dense ? spec.out_dim : spec.in_dim;
        }
        net.layers.push_back(make_layer(spec, rng));
    }
    return net;
}

namespace {

template <typename Net, typename T>
std::vector<T*> collect_tensors(Net& net, bool include_buffers) {
    std::vector<T*> out;
    for (auto& layer : net.layers) {
        switch (layer.kind) {
            case LayerKind::dense:
                out.push_back(&layer.weight);
                out.push_back(&layer.bias);
                break;
            case LayerKind::batchnorm:
                out.push_back(&layer.gamma);
                out.push_back(&layer.beta);
                if (include_buffers) {
                    out.push_back(&layer.running_mean);
                    out.push_back(&layer.running_var);
                }
                break;
            default:
                break;
        }
    }
    return out;
}

}  // namespace

std::vector<Tensor*> trainable_tensors(Network& net) {
    return collect_tensors<Network, Tensor>(net, false);
}
std::vector<const Tensor*> trainable_tensors(const Network& net) {
    return collect_tensors<const Network, const Tensor>(net, false);
}
std::vector<Tensor*> state_tensors(Network& net) {
    return collect_tensors<Network, Tensor>(net, true);
}
std::vector<const Tensor*> state_tensors(const Network& net) {
    return collect_tensors<const Network, const Tensor>(net, true);
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

namespace {

Tensor dense_forward(const Layer& layer, const Tensor& x) {
    const std::size_t batch = x.rows();
    Tensor out({batch, layer.out_dim});
    for (std::size_t b = 0; b < batch; ++b) {
        double* out_row = out.row(b);
        std::memcpy(out_row, layer.bias.data(), layer.out_dim * sizeof(double));
        const double* x_row = x.row(b);
        for (std::size_t i = 0; i < layer.in_dim; ++i) {
            kernels::axpy(x_row[i], layer.weight.row(i), out_row, layer.out_dim);
        }
    }
    return out;
}

Tensor relu_forward(const Tensor& x) {
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i] < 0.0) out[i] = 0.0;
    }
    return out;
}

Tensor softmax_forward(const Tensor& x) {
    Tensor out = x;
    const std::size_t cols = x.cols();
    for (std::size_t b = 0; b < x.rows(); ++b) {
        double* row = out.row(b);
        double max_logit = row[0];
        for (std::size_t j = 1; j < cols; ++j) max_logit = std::max(max_logit, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            row[j] = std::exp(row[j] - max_logit);
            sum += row[j];
        }
        for (std::size_t j = 0; j < cols; ++j) row[j] /= sum;
    }
    return out;
}

Tensor batchnorm_forward(const Layer& layer, const Tensor& x, RunMode mode, LayerTrace* trace) {
    const std::size_t batch = x.rows();
    const std::size_t dim = layer.in_dim;
    Tensor out({batch, dim});
    if (mode == RunMode::eval) {
        for (std::size_t j = 0; j < dim; ++j) {
            const double inv_std = 1.0 / std::sqrt(layer.running_var[j] + kBatchnormEps);
            const double g = layer.gamma[j];
            const double shift = layer.beta[j] - g * inv_std * layer.running_mean[j];
            const double scale = g * inv_std;
            for (std::size_t b = 0; b < batch; ++b) out(b, j) = scale * x(b, j) + shift;
        }
        return out;
    }
    Tensor mean({dim}), var({dim}), x_hat({batch, dim});
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (std::size_t j = 0; j < dim; ++j) {
        double m = 0.0;
        for (std::size_t b = 0; b < batch; ++b) m += x(b, j);
        m *= inv_batch;
        double v = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const double d = x(b, j) - m;
            v += d * d;
        }
        v *= inv_batch;
        mean[j] = m;
        var[j] = v;
        const double inv_std = 1.0 / std::sqrt(v + kBatchnormEps);
        for (std::size_t b = 0; b < batch; ++b) {
            const double xh = (x(b, j) - m) * inv_std;
            x_hat(b, j) = xh;
            out(b, j) = layer.gamma[j] * xh + layer.beta[j];
        }
    }
    if (trace != nullptr) {
        trace->mean = std::move(mean);
        trace->var = std::move(var);
        trace->x_hat = std::move(x_hat);
    }
    return out;
}

}  // namespace

Tensor net_forward(const Network& net, const Tensor& batch, RunMode mode, NetTrace* trace,
                   const char* net_name) {
    if (batch.shape().size() != 2) {
        throw DimensionError(std::string(net_name) + ": expected a [batch, features] tensor");
    }
    if (trace != nullptr) {
        trace->layers.assign(net.layers.size(), LayerTrace{});
        trace->valid = false;
    }
    Tensor current = batch;
    for (std::size_t idx = 0; idx < net.layers.size(); ++idx) {
        const Layer& layer = net.layers[idx];
        if ((layer.kind == LayerKind::dense || layer.kind == LayerKind::batchnorm) &&
            current.cols() != layer.in_dim) {
            throw DimensionError(layer_label(net_name, idx, layer.kind) + ": expected input dim " +
                                 std::to_string(layer.in_dim) + ", got " +
                                 std::to_string(current.cols()));
        }
        LayerTrace* lt = trace != nullptr ? &trace->layers[idx] : nullptr;
        Tensor next;
        switch (layer.kind) {
            case LayerKind::dense:
                next = dense_forward(layer, current);
                break;
            case LayerKind::relu:
                next = relu_forward(current);
                break;
            case LayerKind::batchnorm:
                next = batchnorm_forward(layer, current, mode, mode == RunMode::train ? lt : nullptr);
                break;
            case LayerKind::softmax:
                next = softmax_forward(current);
                break;
        }
        if (lt != nullptr && mode == RunMode::train) {
            lt->input = std::move(current);
            lt->output = next;
        }
        current = std::move(next);
    }
    if (trace != nullptr && mode == RunMode::train) trace->valid = true;
    return current;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

NetGrads zero_grads(const Network& net) {
    NetGrads grads;
    for (const Tensor* t : trainable_tensors(net)) grads.tensors.push_back(Tensor::zeros_like(*t));
    return grads;
}

void accumulate_grads(NetGrads& into, const NetGrads& from) {
    if (into.tensors.size() != from.tensors.size()) {
        throw DimensionError("gradient accumulation: tensor count mismatch");
    }
    for (std::size_t i = 0; i < into.tensors.size(); ++i) {
        check_same_shape(into.tensors[i], from.tensors[i], "gradient accumulation");
        kernels::axpy(1.0, from.tensors[i].data(), into.tensors[i].data(),
                      into.tensors[i].size());
    }
}

namespace {

Tensor dense_backward(const Layer& layer, const LayerTrace& trace, const Tensor& d_out,
                      Tensor& d_weight, Tensor& d_bias) {
    const Tensor& x = trace.input;
    const std::size_t batch = x.rows();
    Tensor d_in({batch, layer.in_dim});
    for (std::size_t b = 0; b < batch; ++b) {
        const double* dy = d_out.row(b);
        const double* x_row = x.row(b);
        double* dx = d_in.row(b);
        for (std::size_t i = 0; i < layer.in_dim; ++i) {
            dx[i] = kernels::dot(dy, layer.weight.row(i), layer.out_dim);
            kernels::axpy(x_row[i], dy, d_weight.row(i), layer.out_dim);
        }
        kernels::axpy(1.0, dy, d_bias.data(), layer.out_dim);
    }
    return d_in;
}

Tensor relu_backward(const LayerTrace& trace, const Tensor& d_out) {
    Tensor d_in = d_out;
    const Tensor& x = trace.input;
    for (std::size_t i = 0; i < d_in.size(); ++i) {
        if (x[i] <= 0.0) d_in[i] = 0.0;
    }
    return d_in;
}

Tensor softmax_backward(const LayerTrace& trace, const Tensor& d_out) {
    const Tensor& y = trace.output;
    Tensor d_in({y.rows(), y.cols()});
    for (std::size_t b = 0; b < y.rows(); ++b) {
        const double* yr = y.row(b);
        const double* dy = d_out.row(b);
        const double dot = kernels::dot(dy, yr, y.cols());
        double* dx = d_in.row(b);
        for (std::size_t j = 0; j < y.cols(); ++j) dx[j] = yr[j] * (dy[j] - dot);
    }
    return d_in;
}

Tensor batchnorm_backward(const Layer& layer, const LayerTrace& trace, const Tensor& d_out,
                          Tensor& d_gamma, Tensor& d_beta) {
    const std::size_t batch = d_out.rows();
    const std::size_t dim = layer.in_dim;
    const double inv_batch = 1.0 / static_cast<double>(batch);
    Tensor d_in({batch, dim});
    for (std::size_t j = 0; j < dim; ++j) {
        const double inv_std = 1.0 / std::sqrt(trace.var[j] + kBatchnormEps);
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const double dy = d_out(b, j);
            sum_dy += dy;
            sum_dy_xhat += dy * trace.x_hat(b, j);
        }
        d_beta[j] += sum_dy;
        d_gamma[j] += sum_dy_xhat;
        const double g = layer.gamma[j];
        for (std::size_t b = 0; b < batch; ++b) {
            const double dxhat = d_out(b, j) * g;
            d_in(b, j) = inv_std * (dxhat - inv_batch * (g * sum_dy + trace.x_hat(b, j) * g * sum_dy_xhat));
        }
    }
    return d_in;
}

}  // namespace

Tensor net_backward(const Network& net, const NetTrace& trace, const Tensor& d_output,
                    NetGrads& grads) {
    if (!trace.valid) {
        throw StateError("backward called without a prior train-mode forward");
    }
    if (grads.tensors.empty() && !trainable_tensors(net).empty()) grads = zero_grads(net);
    Tensor current = d_output;
    std::size_t grad_slot = grads.tensors.size();
    for (std::size_t rev = net.layers.size(); rev-- > 0;) {
        const Layer& layer = net.layers[rev];
        const LayerTrace& lt = trace.layers[rev];
        switch (layer.kind) {
            case LayerKind::dense: {
                Tensor& d_bias = grads.tensors[--grad_slot];
                Tensor& d_weight = grads.tensors[--grad_slot];
                current = dense_backward(layer, lt, current, d_weight, d_bias);
                break;
            }
            case LayerKind::relu:
                current = relu_backward(lt, current);
                break;
            case LayerKind::batchnorm: {
                Tensor& d_beta = grads.tensors[--grad_slot];
                Tensor& d_gamma = grads.tensors[--grad_slot];
                current = batchnorm_backward(layer, lt, current, d_gamma, d_beta);
                break;
            }
            case LayerKind::softmax:
                current = softmax_backward(lt, current);
                break;
        }
    }
    return current;
}

void commit_batchnorm_stats(Network& net, const NetTrace& trace, double momentum) {
    if (!trace.valid) return;
    for (std::size_t idx = 0; idx < net.layers.size(); ++idx) {
        Layer& layer = net.layers[idx];
        if (layer.kind != LayerKind::batchnorm) continue;
        const LayerTrace& lt = trace.layers[idx];
        if (lt.mean.empty()) continue;
        kernels::ema(momentum, lt.mean.data(), layer.running_mean.data(), layer.in_dim);
        kernels::ema(momentum, lt.var.data(), layer.running_var.data(), layer.in_dim);
    }
}

// ---------------------------------------------------------------------------
// Model construction
// ---------------------------------------------------------------------------

Network build_encoder(const ArchConfig& arch, Rng& rng) {
    require_positive(arch.input_dim, "input_dim");
    require_positive(arch.rep_dim, "rep_dim");
    std::vector<LayerSpec> specs;
    std::size_t prev = arch.input_dim;
    for (std::size_t width : arch.encoder_widths) {
        require_positive(width, "encoder width");
        specs.push_back({LayerKind::dense, prev, width});
        specs.push_back({LayerKind::relu});
        prev = width;
    }
    // Linear representation output: keeps h out of the nonnegative cone so
    // cosine geometry over representations has usable dynamic range.
    specs.push_back({LayerKind::dense, prev, arch.rep_dim});
    return make_network(specs, rng);
}

Network build_classifier(const ArchConfig& arch, Rng& rng) {
    require_positive(arch.class_count, "class_count");
    if (arch.head_hidden_layers < 0 || arch.head_hidden_layers > 3) {
        throw ValidationError("head_hidden_layers must be in [0, 3]");
    }
    std::vector<LayerSpec> specs;
    std::size_t prev = arch.rep_dim;
    for (int i = 0; i < arch.head_hidden_layers; ++i) {
        require_positive(arch.head_hidden_dim, "head_hidden_dim");
        specs.push_back({LayerKind::dense, prev, arch.head_hidden_dim});
        specs.push_back({LayerKind::relu});
        prev = arch.head_hidden_dim;
    }
    specs.push_back({LayerKind::dense, prev, arch.class_count});
    specs.push_back({LayerKind::softmax});
    return make_network(specs, rng);
}

ModelParams build_model(const ArchConfig& arch, std::uint64_t seed) {
    ModelParams model;
    model.arch = arch;
    Rng enc_rng(derive_seed(seed, {stream::kModelInit, stream::kEncoderInit}));
    model.encoder = build_encoder(arch, enc_rng);
    Rng head_rng(derive_seed(seed, {stream::kModelInit, stream::kHeadInit}));
    model.classifier = build_classifier(arch, head_rng);
    return model;
}

namespace {

Network build_projector(const ArchConfig& arch, PretrainMethod method, Rng& rng) {
    std::vector<LayerSpec> specs;
    specs.push_back({LayerKind::dense, arch.rep_dim, arch.projector_dim});
    if (method == PretrainMethod::simclr) {
        specs.push_back({LayerKind::relu});
        specs.push_back({LayerKind::dense, arch.projector_dim, arch.projector_dim});
    } else {
        // byol/simsiam: both layers batch normalized, first ReLU activated
        specs.push_back({LayerKind::batchnorm, arch.projector_dim, arch.projector_dim});
        specs.push_back({LayerKind::relu});
        specs.push_back({LayerKind::dense, arch.projector_dim, arch.projector_dim});
        specs.push_back({LayerKind::batchnorm, arch.projector_dim, arch.projector_dim});
    }
    return make_network(specs, rng);
}

Network build_predictor(const ArchConfig& arch, Rng& rng) {
    std::vector<LayerSpec> specs;
    specs.push_back({LayerKind::dense, arch.projector_dim, arch.predictor_bottleneck});
    specs.push_back({LayerKind::batchnorm, arch.predictor_bottleneck, arch.predictor_bottleneck});
    specs.push_back({LayerKind::relu});
    specs.push_back({LayerKind::dense, arch.predictor_bottleneck, arch.projector_dim});
    return make_network(specs, rng);
}

}  // namespace

void attach_contrastive_heads(ModelParams& model, PretrainMethod method, std::uint64_t seed) {
    Rng rng(derive_seed(seed, {stream::kContrastiveHeads}));
    model.projector = build_projector(model.arch, method, rng);
    if (method == PretrainMethod::byol || method == PretrainMethod::simsiam) {
        model.predictor = build_predictor(model.arch, rng);
    } else {
        model.predictor.reset();
    }
    if (method == PretrainMethod::byol) {
        model.momentum_encoder = model.encoder;
        model.momentum_projector = model.projector;
    } else {
        model.momentum_encoder.reset();
        model.momentum_projector.reset();
    }
}

// ---------------------------------------------------------------------------
// Branch-level forward/backward
// ---------------------------------------------------------------------------

namespace {

const Network& require_net(const std::optional<Network>& net, const char* name) {
    if (!net.has_value()) throw ValidationError(std::string("model has no ") + name);
    return *net;
}

}  // namespace

Tensor forward(const ModelParams& model, Branch branch, const Tensor& batch, RunMode mode,
               ForwardTrace* trace) {
    if (trace != nullptr) {
        *trace = ForwardTrace{};
        trace->branch = branch;
    }
    NetTrace* first = trace != nullptr ? &trace->first : nullptr;
    NetTrace* second = trace != nullptr ? &trace->second : nullptr;
    Tensor out;
    switch (branch) {
        case Branch::encoder:
            out = net_forward(model.encoder, batch, mode, first, "encoder");
            break;
        case Branch::encoder_classifier: {
            Tensor rep = net_forward(model.encoder, batch, mode, first, "encoder");
            out = net_forward(model.classifier, rep, mode, second, "classifier");
            break;
        }
        case Branch::encoder_projector: {
            const Network& projector = require_net(model.projector, "projector");
            Tensor rep = net_forward(model.encoder, batch, mode, first, "encoder");
            out = net_forward(projector, rep, mode, second, "projector");
            break;
        }
        case Branch::predictor:
            out = net_forward(require_net(model.predictor, "predictor"), batch, mode, first,
                              "predictor");
            break;
    }
    if (trace != nullptr && mode == RunMode::train) trace->valid = true;
    return out;
}

ModelGrads zero_model_grads(const ModelParams& model) {
    ModelGrads grads;
    grads.encoder = zero_grads(model.encoder);
    grads.classifier = zero_grads(model.classifier);
    if (model.projector) grads.projector = zero_grads(*model.projector);
    if (model.predictor) grads.predictor = zero_grads(*model.predictor);
    if (model.momentum_encoder) grads.momentum_encoder = zero_grads(*model.momentum_encoder);
    if (model.momentum_projector) grads.momentum_projector = zero_grads(*model.momentum_projector);
    return grads;
}

void accumulate_model_grads(ModelGrads& into, const ModelGrads& from) {
    accumulate_grads(into.encoder, from.encoder);
    accumulate_grads(into.classifier, from.classifier);
    accumulate_grads(into.projector, from.projector);
    accumulate_grads(into.predictor, from.predictor);
    accumulate_grads(into.momentum_encoder, from.momentum_encoder);
    accumulate_grads(into.momentum_projector, from.momentum_projector);
}

ModelGrads backward(const ModelParams& model, const ForwardTrace& trace, const Tensor& loss_grad,
                    Tensor* d_input) {
    if (!trace.valid) {
        throw StateError("backward called without a prior train-mode forward");
    }
    ModelGrads grads = zero_model_grads(model);
    Tensor d_in;
    switch (trace.branch) {
        case Branch::encoder:
            d_in = net_backward(model.encoder, trace.first, loss_grad, grads.encoder);
            break;
        case Branch::encoder_classifier: {
            Tensor d_rep = net_backward(model.classifier, trace.second, loss_grad, grads.classifier);
            d_in = net_backward(model.encoder, trace.first, d_rep, grads.encoder);
            break;
        }
        case Branch::encoder_projector: {
            Tensor d_rep =
                net_backward(*model.projector, trace.second, loss_grad, grads.projector);
            d_in = net_backward(model.encoder, trace.first, d_rep, grads.encoder);
            break;
        }
        case Branch::predictor:
            d_in = net_backward(*model.predictor, trace.first, loss_grad, grads.predictor);
            break;
    }
    if (d_input != nullptr) *d_input = std::move(d_in);
    return grads;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

double cross_entropy(const Tensor& probs, const Tensor& onehot) {
    check_same_shape(probs, onehot, "cross_entropy");
    const std::size_t batch = probs.rows();
    const std::size_t k = probs.cols();
    if (batch == 0) throw ValidationError("cross_entropy: empty batch");
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        double row_sum = 0.0;
        double one_count = 0.0;
        double row_loss = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double p = probs(b, j);
            const double y = onehot(b, j);
            row_sum += p;
            if (y == 1.0) {
                one_count += 1.0;
                row_loss -= std::log(std::max(p, kProbFloor));
            } else if (y != 0.0) {
                throw ValidationError("cross_entropy: onehot entries must be 0 or 1");
            }
        }
        if (std::abs(row_sum - 1.0) > 1e-9) {
            throw ValidationError("cross_entropy: probability row " + std::to_string(b) +
                                  " sums to " + std::to_string(row_sum));
        }
        if (one_count != 1.0) {
            throw ValidationError("cross_entropy: onehot row " + std::to_string(b) +
                                  " must contain exactly one 1");
        }
        total += row_loss;
    }
    return total / static_cast<double>(batch);
}

Tensor cross_entropy_grad(const Tensor& probs, const Tensor& onehot) {
    check_same_shape(probs, onehot, "cross_entropy_grad");
    Tensor grad({probs.rows(), probs.cols()});
    const double inv_batch = 1.0 / static_cast<double>(probs.rows());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (onehot[i] == 1.0) {
            // Floor the denominator rather than zeroing the clamp region:
            // a saturated wrong prediction must keep a usable descent
            // direction (Adam bounds the step size).
            grad[i] = -inv_batch / std::max(probs[i], kProbFloor);
        }
    }
    return grad;
}

double cosine_similarity(std::span<const double> v1, std::span<const double> v2,
                         bool* degenerate) {
    if (v1.size() != v2.size()) {
        throw DimensionError("cosine_similarity: length mismatch (" + std::to_string(v1.size()) +
                             " vs " + std::to_string(v2.size()) + ")");
    }
    if (v1.empty()) throw DimensionError("cosine_similarity: empty vectors");
    const double n1 = std::sqrt(kernels::dot(v1.data(), v1.data(), v1.size()));
    const double n2 = std::sqrt(kernels::dot(v2.data(), v2.data(), v2.size()));
    if (n1 == 0.0 || n2 == 0.0) {
        if (degenerate != nullptr) *degenerate = true;
        return 0.0;
    }
    return kernels::dot(v1.data(), v2.data(), v1.size()) / (n1 * n2);
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(std::vector<Tensor*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor* p : params_) {
        m_.push_back(Tensor::zeros_like(*p));
        v_.push_back(Tensor::zeros_like(*p));
    }
}

void AdamOptimizer::step(const std::vector<const Tensor*>& grads) {
    if (grads.size() != params_.size()) {
        throw DimensionError("adam: gradient count mismatch");
    }
    ++t_;
    const double bc1 = 1.0 / (1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
    const double bc2 = 1.0 / (1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        check_same_shape(*params_[i], *grads[i], "adam");
        kernels::adam_update(params_[i]->data(), m_[i].data(), v_[i].data(), grads[i]->data(),
                             params_[i]->size(), cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.eps, bc1,
                             bc2);
    }
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

Tensor one_hot(const std::vector<int>& labels, std::size_t class_count) {
    Tensor out({labels.size(), class_count});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count) {
            throw ValidationError("label " + std::to_string(labels[i]) + " out of range [0, " +
                                  std::to_string(class_count) + ")");
        }
        out(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    return out;
}

std::vector<int> argmax_rows(const Tensor& probs) {
    std::vector<int> out(probs.rows());
    for (std::size_t b = 0; b < probs.rows(); ++b) {
        const double* row = probs.row(b);
        std::size_t best = 0;
        for (std::size_t j = 1; j < probs.cols(); ++j) {
            if (row[j] > row[best]) best = j;
        }
        out[b] = static_cast<int>(best);
    }
    return out;
}

double accuracy(const Tensor& probs, const std::vector<int>& labels) {
    if (probs.rows() != labels.size() || labels.empty()) {
        throw DimensionError("accuracy: prediction/label count mismatch");
    }
    const std::vector<int> pred = argmax_rows(probs);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (pred[i] == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double dataset_loss(const ModelParams& model, const Tensor& features,
                    const std::vector<int>& labels) {
    const Tensor probs = forward(model, Branch::encoder_classifier, features, RunMode::eval);
    return cross_entropy(probs, one_hot(labels, model.arch.class_count));
}

namespace {

Tensor gather_rows(const Tensor& features, const std::vector<std::size_t>& order,
                   std::size_t begin, std::size_t end) {
    Tensor out({end - begin, features.cols()});
    for (std::size_t i = begin; i < end; ++i) {
        std::memcpy(out.row(i - begin), features.row(order[i]), features.cols() * sizeof(double));
    }
    return out;
}

}  // namespace

CeTrainStats train_cross_entropy(ModelParams& model, const Tensor& features,
                                 const std::vector<int>& labels, std::size_t epochs,
                                 std::size_t encoder_epochs, const AdamConfig& adam,
                                 std::size_t batch_size, Rng& rng,
                                 std::vector<double>* epoch_losses) {
    if (labels.empty()) throw ValidationError("train_cross_entropy: empty training set");
    if (features.rows() != labels.size()) {
        throw DimensionError("train_cross_entropy: feature/label count mismatch");
    }
    if (batch_size == 0) throw ValidationError("train_cross_entropy: batch_size must be positive");

    AdamOptimizer encoder_opt(trainable_tensors(model.encoder), adam);
    AdamOptimizer classifier_opt(trainable_tensors(model.classifier), adam);

    const std::size_t n = labels.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    CeTrainStats stats;
    double loss_sum = 0.0;
    std::size_t sample_total = 0;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        const bool train_encoder = epoch < encoder_epochs;
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t begin = 0; begin < n; begin += batch_size) {
            const std::size_t end = std::min(begin + batch_size, n);
            Tensor batch = gather_rows(features, order, begin, end);
            std::vector<int> batch_labels(end - begin);
            for (std::size_t i = begin; i < end; ++i) batch_labels[i - begin] = labels[order[i]];
            const Tensor targets = one_hot(batch_labels, model.arch.class_count);

            ForwardTrace trace;
            const Tensor probs =
                forward(model, Branch::encoder_classifier, batch, RunMode::train, &trace);
            const double loss = cross_entropy(probs, targets);
            const ModelGrads grads = backward(model, trace, cross_entropy_grad(probs, targets));

            std::vector<const Tensor*> cls_grads;
            for (const Tensor& g : grads.classifier.tensors) cls_grads.push_back(&g);
            classifier_opt.step(cls_grads);
            commit_batchnorm_stats(model.classifier, trace.second);
            if (train_encoder) {
                std::vector<const Tensor*> enc_grads;
                for (const Tensor& g : grads.encoder.tensors) enc_grads.push_back(&g);
                encoder_opt.step(enc_grads);
                commit_batchnorm_stats(model.encoder, trace.first);
            }

            ++stats.steps;
            epoch_loss += loss * static_cast<double>(end - begin);
            loss_sum += loss * static_cast<double>(end - begin);
            sample_total += end - begin;
        }
        if (epoch_losses != nullptr) {
            epoch_losses->push_back(epoch_loss / static_cast<double>(n));
        }
    }
    if (sample_total > 0) stats.mean_loss = loss_sum / static_cast<double>(sample_total);
    return stats;
}

}  // namespace cpcfl
