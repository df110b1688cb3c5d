#include "cpcfl/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "cpcfl/kernels.hpp"

namespace cpcfl {

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

void AugmentParams::validate() const {
    if (noise_sigma < 0.0) throw ValidationError("augment: noise_sigma must be >= 0");
    if (mask_prob < 0.0 || mask_prob > 1.0) throw ValidationError("augment: mask_prob in [0,1]");
    if (flip_prob < 0.0 || flip_prob > 1.0) throw ValidationError("augment: flip_prob in [0,1]");
    if (scale_min > scale_max || scale_min <= 0.0) {
        throw ValidationError("augment: need 0 < scale_min <= scale_max");
    }
}

std::vector<double> augment(std::span<const double> sample, const AugmentParams& params,
                            Rng& rng) {
    const std::size_t dim = sample.size();
    std::vector<double> out(sample.begin(), sample.end());
    // The draw count per call is fixed so configs differing only in strength
    // stay stream-aligned.
    for (std::size_t i = 0; i < dim; ++i) out[i] += params.noise_sigma * rng.normal();
    const double scale = rng.uniform(params.scale_min, params.scale_max);
    for (std::size_t i = 0; i < dim; ++i) out[i] *= scale;
    const bool flip = rng.bernoulli(params.flip_prob);
    const std::size_t block = (dim + 1) / 2;
    const std::size_t start = static_cast<std::size_t>(rng.uniform_int(dim - block + 1));
    if (flip) {
        for (std::size_t i = start; i < start + block; ++i) out[i] = -out[i];
    }
    for (std::size_t i = 0; i < dim; ++i) {
        if (rng.bernoulli(params.mask_prob)) out[i] = 0.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// SimCLR loss
// ---------------------------------------------------------------------------

std::vector<std::size_t> adjacent_pairs(std::size_t view_count) {
    std::vector<std::size_t> partner(view_count);
    for (std::size_t i = 0; i < view_count; ++i) partner[i] = i ^ 1;
    return partner;
}

SimclrLoss simclr_loss(const Tensor& projections, double tau) {
    return simclr_loss(projections, adjacent_pairs(projections.rows()), tau);
}

SimclrLoss simclr_loss(const Tensor& projections, const std::vector<std::size_t>& partner,
                       double tau) {
    const std::size_t n = projections.rows();
    const std::size_t dim = projections.cols();
    if (n < 2 || n % 2 != 0) {
        throw ValidationError("simclr_loss: need an even number (>= 2) of views");
    }
    if (partner.size() != n) throw ValidationError("simclr_loss: partner map size mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        if (partner[i] >= n || partner[i] == i || partner[partner[i]] != i) {
            throw ValidationError("simclr_loss: partner map is not an involution");
        }
    }
    if (tau <= 0.0) throw ValidationError("simclr_loss: temperature must be positive");

    // Normalized rows; zero-norm rows embed as zero (their similarities are 0).
    std::vector<double> norms(n);
    Tensor z_hat({n, dim});
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = projections.row(i);
        norms[i] = std::sqrt(kernels::dot(row, row, dim));
        if (norms[i] > 0.0) {
            double* dst = z_hat.row(i);
            std::memcpy(dst, row, dim * sizeof(double));
            kernels::scale(1.0 / norms[i], dst, dim);
        }
    }
    Tensor sim({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = i + 1; k < n; ++k) {
            const double s = kernels::dot(z_hat.row(i), z_hat.row(k), dim);
            sim(i, k) = s;
            sim(k, i) = s;
        }
    }

    // dL/dS accumulated per anchor; pair (i,k) collects A[i][k] + A[k][i].
    Tensor d_sim({n, n});
    const double inv_anchors = 1.0 / static_cast<double>(n);
    double loss = 0.0;
    std::vector<double> logits(n);
    for (std::size_t i = 0; i < n; ++i) {
        double max_logit = -1e300;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            logits[k] = sim(i, k) / tau;
            max_logit = std::max(max_logit, logits[k]);
        }
        double denom = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            denom += std::exp(logits[k] - max_logit);
        }
        const double lse = max_logit + std::log(denom);
        loss += lse - logits[partner[i]];
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            const double p = std::exp(logits[k] - lse);
            const double indicator = k == partner[i] ? 1.0 : 0.0;
            d_sim(i, k) += (p - indicator) * inv_anchors / tau;
        }
    }
    loss *= inv_anchors;

    SimclrLoss result;
    result.loss = loss;
    result.d_projections = Tensor({n, dim});
    for (std::size_t i = 0; i < n; ++i) {
        if (norms[i] == 0.0) continue;  // degenerate row: leave gradient zero
        double* out = result.d_projections.row(i);
        double radial = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            const double coeff = d_sim(i, k) + d_sim(k, i);
            if (coeff == 0.0) continue;
            kernels::axpy(coeff, z_hat.row(k), out, dim);
            radial += coeff * sim(i, k);
        }
        kernels::axpy(-radial, z_hat.row(i), out, dim);
        kernels::scale(1.0 / norms[i], out, dim);
    }
    return result;
}

// ---------------------------------------------------------------------------
// BYOL / SimSiam pair losses
// ---------------------------------------------------------------------------

namespace {

// d Sim(p, z)/dp = (z_hat - Sim * p_hat) / |p|; zero when either norm is 0.
PairLoss cosine_pair(std::span<const double> prediction, std::span<const double> target,
                     double loss_scale, double loss_offset) {
    if (prediction.size() != target.size()) {
        throw DimensionError("pair loss: prediction/target length mismatch");
    }
    const std::size_t dim = prediction.size();
    PairLoss result;
    result.d_prediction.assign(dim, 0.0);
    result.d_target.assign(dim, 0.0);  // stop-gradient: stays exactly zero
    const double pn = std::sqrt(kernels::dot(prediction.data(), prediction.data(), dim));
    const double tn = std::sqrt(kernels::dot(target.data(), target.data(), dim));
    if (pn == 0.0 || tn == 0.0) {
        result.loss = loss_offset;
        return result;
    }
    const double sim = kernels::dot(prediction.data(), target.data(), dim) / (pn * tn);
    result.loss = loss_offset + loss_scale * sim;
    for (std::size_t i = 0; i < dim; ++i) {
        const double p_hat = prediction[i] / pn;
        const double t_hat = target[i] / tn;
        result.d_prediction[i] = loss_scale * (t_hat - sim * p_hat) / pn;
    }
    return result;
}

BatchPairLoss symmetrized_batch(const Tensor& predictions, const Tensor& targets,
                                double loss_scale, double loss_offset) {
    check_same_shape(predictions, targets, "pair batch loss");
    const std::size_t n = predictions.rows();
    if (n < 2 || n % 2 != 0) throw ValidationError("pair batch loss: need paired view rows");
    const std::size_t samples = n / 2;
    const std::size_t dim = predictions.cols();
    BatchPairLoss out;
    out.d_predictions = Tensor({n, dim});
    const double inv_samples = 1.0 / static_cast<double>(samples);
    for (std::size_t s = 0; s < samples; ++s) {
        const std::size_t a = 2 * s;
        const std::size_t b = 2 * s + 1;
        const PairLoss first = cosine_pair({predictions.row(a), dim}, {targets.row(b), dim},
                                           loss_scale, loss_offset);
        const PairLoss second = cosine_pair({predictions.row(b), dim}, {targets.row(a), dim},
                                            loss_scale, loss_offset);
        out.loss += first.loss + second.loss;
        kernels::axpy(inv_samples, first.d_prediction.data(), out.d_predictions.row(a), dim);
        kernels::axpy(inv_samples, second.d_prediction.data(), out.d_predictions.row(b), dim);
    }
    out.loss *= inv_samples;
    return out;
}

}  // namespace

PairLoss byol_loss(std::span<const double> prediction, std::span<const double> target) {
    return cosine_pair(prediction, target, -2.0, 2.0);
}

PairLoss simsiam_loss(std::span<const double> prediction, std::span<const double> stopped) {
    return cosine_pair(prediction, stopped, -1.0, 0.0);
}

BatchPairLoss byol_batch_loss(const Tensor& predictions, const Tensor& targets) {
    return symmetrized_batch(predictions, targets, -2.0, 2.0);
}

BatchPairLoss simsiam_batch_loss(const Tensor& predictions, const Tensor& projections) {
    return symmetrized_batch(predictions, projections, -1.0, 0.0);
}

void momentum_update(const Network& online, Network& target, double beta) {
    if (beta < 0.0 || beta > 1.0) throw ValidationError("momentum_update: beta must be in [0,1]");
    const auto online_tensors = state_tensors(online);
    const auto target_tensors = state_tensors(target);
    if (online_tensors.size() != target_tensors.size()) {
        throw DimensionError("momentum_update: network structure mismatch");
    }
    for (std::size_t i = 0; i < online_tensors.size(); ++i) {
        check_same_shape(*online_tensors[i], *target_tensors[i], "momentum_update");
        kernels::ema(beta, online_tensors[i]->data(), target_tensors[i]->data(),
                     target_tensors[i]->size());
    }
}

// ---------------------------------------------------------------------------
// Pre-training loop
// ---------------------------------------------------------------------------

void PretrainConfig::validate() const {
    augment.validate();
    if (batch_size == 0) throw ValidationError("pretrain: batch_size must be positive");
    if (learning_rate <= 0.0) throw ValidationError("pretrain: learning_rate must be positive");
    if (method == PretrainMethod::simclr) {
        if (!temperature.has_value()) throw ValidationError("pretrain: simclr requires temperature");
        if (*temperature <= 0.0) throw ValidationError("pretrain: temperature must be positive");
    } else if (temperature.has_value()) {
        throw ValidationError("pretrain: temperature is simclr-only");
    }
    if (method == PretrainMethod::byol) {
        if (!target_update_rate.has_value()) {
            throw ValidationError("pretrain: byol requires target_update_rate");
        }
        if (*target_update_rate < 0.0 || *target_update_rate >= 1.0) {
            throw ValidationError("pretrain: target_update_rate must be in [0,1)");
        }
    } else if (target_update_rate.has_value()) {
        throw ValidationError("pretrain: target_update_rate is byol-only");
    }
}

namespace {

std::vector<Tensor*> online_params(ModelParams& model) {
    std::vector<Tensor*> params = trainable_tensors(model.encoder);
    for (Tensor* t : trainable_tensors(*model.projector)) params.push_back(t);
    if (model.predictor) {
        for (Tensor* t : trainable_tensors(*model.predictor)) params.push_back(t);
    }
    return params;
}

std::vector<const Tensor*> online_grads(const ModelGrads& grads, bool with_predictor) {
    std::vector<const Tensor*> out;
    for (const Tensor& t : grads.encoder.tensors) out.push_back(&t);
    for (const Tensor& t : grads.projector.tensors) out.push_back(&t);
    if (with_predictor) {
        for (const Tensor& t : grads.predictor.tensors) out.push_back(&t);
    }
    return out;
}

}  // namespace

PretrainResult pretrain_encoder(const ModelParams& model, const UnlabeledDataset& data,
                                const PretrainConfig& cfg) {
    cfg.validate();
    if (data.size() == 0) throw ValidationError("pretrain: empty unlabeled dataset");
    if (model.encoder.in_dim() != data.feature_dim()) {
        throw DimensionError("pretrain: encoder expects input dim " +
                             std::to_string(model.encoder.in_dim()) + ", data has " +
                             std::to_string(data.feature_dim()));
    }

    ModelParams work = model;
    attach_contrastive_heads(work, cfg.method, cfg.seed);
    AdamOptimizer opt(online_params(work), AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
    const bool with_predictor = work.predictor.has_value();

    const std::size_t n = data.size();
    const std::size_t dim = data.feature_dim();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    PretrainResult result;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, {stream::kShuffle, epoch}));
        shuffle_rng.shuffle(order);
        Rng aug_rng(derive_seed(cfg.seed, {stream::kAugment, epoch}));

        double loss_sum = 0.0;
        std::size_t sample_count = 0;
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
            const std::size_t end = std::min(begin + cfg.batch_size, n);
            const std::size_t samples = end - begin;
            Tensor views({2 * samples, dim});
            for (std::size_t s = 0; s < samples; ++s) {
                const std::span<const double> raw{data.samples.row(order[begin + s]), dim};
                const std::vector<double> view_a = augment(raw, cfg.augment, aug_rng);
                const std::vector<double> view_b = augment(raw, cfg.augment, aug_rng);
                std::memcpy(views.row(2 * s), view_a.data(), dim * sizeof(double));
                std::memcpy(views.row(2 * s + 1), view_b.data(), dim * sizeof(double));
            }

            double batch_loss = 0.0;
            ModelGrads grads;
            switch (cfg.method) {
                case PretrainMethod::simclr: {
                    ForwardTrace trace;
                    const Tensor z =
                        forward(work, Branch::encoder_projector, views, RunMode::train, &trace);
                    SimclrLoss loss = simclr_loss(z, *cfg.temperature);
                    batch_loss = loss.loss;
                    grads = backward(work, trace, loss.d_projections);
                    commit_batchnorm_stats(work.encoder, trace.first);
                    commit_batchnorm_stats(*work.projector, trace.second);
                    break;
                }
                case PretrainMethod::byol: {
                    ForwardTrace proj_trace;
                    const Tensor z = forward(work, Branch::encoder_projector, views,
                                             RunMode::train, &proj_trace);
                    ForwardTrace pred_trace;
                    const Tensor p =
                        forward(work, Branch::predictor, z, RunMode::train, &pred_trace);
                    // Target branch: momentum copies, batch statistics, no trace.
                    const Tensor h_t =
                        net_forward(*work.momentum_encoder, views, RunMode::train, nullptr,
                                    "momentum encoder");
                    const Tensor z_t = net_forward(*work.momentum_projector, h_t, RunMode::train,
                                                   nullptr, "momentum projector");
                    BatchPairLoss loss = byol_batch_loss(p, z_t);
                    batch_loss = loss.loss;
                    Tensor d_z;
                    grads = backward(work, pred_trace, loss.d_predictions, &d_z);
                    accumulate_model_grads(grads, backward(work, proj_trace, d_z));
                    commit_batchnorm_stats(work.encoder, proj_trace.first);
                    commit_batchnorm_stats(*work.projector, proj_trace.second);
                    commit_batchnorm_stats(*work.predictor, pred_trace.first);
                    break;
                }
                case PretrainMethod::simsiam: {
                    ForwardTrace proj_trace;
                    const Tensor z = forward(work, Branch::encoder_projector, views,
                                             RunMode::train, &proj_trace);
                    ForwardTrace pred_trace;
                    const Tensor p =
                        forward(work, Branch::predictor, z, RunMode::train, &pred_trace);
                    BatchPairLoss loss = simsiam_batch_loss(p, z);
                    batch_loss = loss.loss;
                    // Gradients reach z only through the predictor; the
                    // projection used as target is stopped.
                    Tensor d_z;
                    grads = backward(work, pred_trace, loss.d_predictions, &d_z);
                    accumulate_model_grads(grads, backward(work, proj_trace, d_z));
                    commit_batchnorm_stats(work.encoder, proj_trace.first);
                    commit_batchnorm_stats(*work.projector, proj_trace.second);
                    commit_batchnorm_stats(*work.predictor, pred_trace.first);
                    break;
                }
            }
            if (!std::isfinite(batch_loss)) {
                throw ValidationError("pretrain: non-finite loss at epoch " +
                                      std::to_string(epoch));
            }
            opt.step(online_grads(grads, with_predictor));
            if (cfg.method == PretrainMethod::byol) {
                momentum_update(work.encoder, *work.momentum_encoder, *cfg.target_update_rate);
                momentum_update(*work.projector, *work.momentum_projector,
                                *cfg.target_update_rate);
            }
            loss_sum += batch_loss * static_cast<double>(samples);
            sample_count += samples;
        }
        result.epoch_losses.push_back(loss_sum / static_cast<double>(sample_count));
    }
    result.encoder = std::move(work.encoder);
    return result;
}

// ---------------------------------------------------------------------------
// Supervised pre-training and linear evaluation
// ---------------------------------------------------------------------------

SupervisedPretrainResult supervised_pretrain(const ModelParams& model, const LabeledDataset& data,
                                             std::size_t epochs, double lr,
                                             std::size_t batch_size, std::uint64_t seed) {
    data.validate();
    if (data.size() == 0) throw ValidationError("supervised_pretrain: empty dataset");
    ModelParams work = model;
    if (static_cast<std::size_t>(data.class_count) != work.arch.class_count) {
        throw DimensionError("supervised_pretrain: class count mismatch");
    }
    SupervisedPretrainResult result;
    Rng rng(derive_seed(seed, {stream::kShuffle}));
    train_cross_entropy(work, data.features, data.labels, epochs, epochs,
                        AdamConfig{lr, 0.9, 0.999, 1e-8}, batch_size, rng,
                        &result.epoch_losses);
    if (epochs > 0) {
        const Tensor probs =
            forward(work, Branch::encoder_classifier, data.features, RunMode::eval);
        result.train_accuracy = accuracy(probs, data.labels);
    }
    result.encoder = std::move(work.encoder);
    return result;
}

double linear_evaluation(const Network& encoder, const LabeledDataset& proxy_train,
                         const LabeledDataset& proxy_test, std::size_t epochs, double lr,
                         std::size_t batch_size, std::uint64_t seed) {
    proxy_train.validate();
    proxy_test.validate();
    if (proxy_train.size() == 0 || proxy_test.size() == 0) {
        throw ValidationError("linear_evaluation: empty proxy dataset");
    }
    // Representations are computed once: the encoder stays frozen.
    const Tensor train_reps = net_forward(encoder, proxy_train.features, RunMode::eval);
    const Tensor test_reps = net_forward(encoder, proxy_test.features, RunMode::eval);

    ArchConfig head_arch;
    head_arch.input_dim = train_reps.cols();
    head_arch.encoder_widths = {};
    head_arch.rep_dim = train_reps.cols();
    head_arch.head_hidden_layers = 0;
    head_arch.class_count = static_cast<std::size_t>(proxy_train.class_count);

    ModelParams head_model;
    head_model.arch = head_arch;
    Rng init_rng(derive_seed(seed, {stream::kLinearEval, stream::kHeadInit}));
    head_model.classifier = build_classifier(head_arch, init_rng);
    // Identity "encoder": representations feed the head directly.
    head_model.encoder = Network{};

    Rng rng(derive_seed(seed, {stream::kLinearEval, stream::kShuffle}));
    train_cross_entropy(head_model, train_reps, proxy_train.labels, epochs, 0,
                        AdamConfig{lr, 0.9, 0.999, 1e-8}, batch_size, rng);
    const Tensor probs =
        forward(head_model, Branch::encoder_classifier, test_reps, RunMode::eval);
    return accuracy(probs, proxy_test.labels);
}

}  // namespace cpcfl
