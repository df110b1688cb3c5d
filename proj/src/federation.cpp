#include "cpcfl/federation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cpcfl/kernels.hpp"
#include "cpcfl/rng.hpp"

namespace cpcfl {

const char* algorithm_name(Algorithm algorithm) {
    switch (algorithm) {
        case Algorithm::fedavg: return "fedavg";
        case Algorithm::ifca: return "ifca";
        case Algorithm::cpcfl: return "cpcfl";
    }
    return "unknown";
}

Algorithm algorithm_from_name(const std::string& name) {
    if (name == "fedavg") return Algorithm::fedavg;
    if (name == "ifca") return Algorithm::ifca;
    if (name == "cpcfl") return Algorithm::cpcfl;
    throw ValidationError("unknown algorithm: " + name);
}

void FederationConfig::validate() const {
    if (clusters < 1) throw ValidationError("federation: clusters must be >= 1");
    if (rounds < 1) throw ValidationError("federation: rounds must be >= 1");
    if (algorithm == Algorithm::fedavg && clusters != 1) {
        throw ValidationError("federation: fedavg requires clusters == 1");
    }
    if (algorithm == Algorithm::cpcfl && explore_rounds >= rounds) {
        throw ValidationError("federation: explore_rounds must be < rounds");
    }
    if (explore_rounds < 0) throw ValidationError("federation: explore_rounds must be >= 0");
    if (local_epochs < 0) throw ValidationError("federation: local_epochs must be >= 0");
    if (encoder_local_epochs < 0 || encoder_local_epochs > local_epochs) {
        throw ValidationError("federation: encoder_local_epochs must be in [0, local_epochs]");
    }
    if (local_lr <= 0.0) throw ValidationError("federation: local_lr must be positive");
    if (batch_size < 1) throw ValidationError("federation: batch_size must be >= 1");
    if (participation_fraction <= 0.0 || participation_fraction > 1.0) {
        throw ValidationError("federation: participation_fraction in (0, 1]");
    }
    if (restart.max_restarts < 0 || restart.failure_window < 1) {
        throw ValidationError("federation: invalid restart config");
    }
    if (model_size_units <= 0.0) throw ValidationError("federation: model_size_units > 0");
}

// ---------------------------------------------------------------------------
// Selection, local training, aggregation
// ---------------------------------------------------------------------------

int select_model(const ClientDataset& client, const ClusterModelPool& pool) {
    if (pool.models.empty()) throw ValidationError("select_model: empty pool");
    if (pool.models.size() == 1) return 1;
    int best = 1;
    double best_loss = dataset_loss(pool.models[0], client.train.features, client.train.labels);
    for (std::size_t n = 1; n < pool.models.size(); ++n) {
        const double loss =
            dataset_loss(pool.models[n], client.train.features, client.train.labels);
        if (loss < best_loss) {  // strict: ties keep the lowest index
            best_loss = loss;
            best = static_cast<int>(n) + 1;
        }
    }
    return best;
}

LocalUpdate local_update(const ClientDataset& client, const ModelParams& model,
                         int cluster_identity, const FederationConfig& cfg, bool freeze_encoder,
                         std::uint64_t rng_seed) {
    if (client.train.size() == 0) {
        throw ValidationError("local_update: client " + std::to_string(client.client_id) +
                              " has no training data");
    }
    LocalUpdate update;
    update.client_id = client.client_id;
    update.cluster_identity = cluster_identity;
    update.sample_count = client.train.size();
    update.params = model;

    const std::size_t encoder_epochs =
        freeze_encoder ? 0
                       : static_cast<std::size_t>(
                             std::min(cfg.encoder_local_epochs, cfg.local_epochs));
    Rng rng(rng_seed);
    const CeTrainStats stats = train_cross_entropy(
        update.params, client.train.features, client.train.labels,
        static_cast<std::size_t>(cfg.local_epochs), encoder_epochs,
        AdamConfig{cfg.local_lr, 0.9, 0.999, 1e-8}, static_cast<std::size_t>(cfg.batch_size), rng);
    update.mean_loss = stats.mean_loss;
    update.steps = stats.steps;
    return update;
}

namespace {

void accumulate_weighted(ModelParams& acc, const ModelParams& src, double weight) {
    auto add_net = [&](Network& dst_net, const Network& src_net) {
        auto dst = state_tensors(dst_net);
        auto src_tensors = state_tensors(src_net);
        if (dst.size() != src_tensors.size()) {
            throw DimensionError("aggregate: network structure mismatch");
        }
        for (std::size_t i = 0; i < dst.size(); ++i) {
            check_same_shape(*dst[i], *src_tensors[i], "aggregate");
            kernels::axpy(weight, src_tensors[i]->data(), dst[i]->data(), dst[i]->size());
        }
    };
    add_net(acc.encoder, src.encoder);
    add_net(acc.classifier, src.classifier);
    if (acc.projector.has_value() != src.projector.has_value() ||
        acc.predictor.has_value() != src.predictor.has_value()) {
        throw DimensionError("aggregate: optional branch mismatch");
    }
    if (acc.projector) add_net(*acc.projector, *src.projector);
    if (acc.predictor) add_net(*acc.predictor, *src.predictor);
}

ModelParams zeroed_like(const ModelParams& model) {
    ModelParams out = model;
    auto clear_net = [](Network& net) {
        for (Tensor* t : state_tensors(net)) t->fill(0.0);
    };
    clear_net(out.encoder);
    clear_net(out.classifier);
    if (out.projector) clear_net(*out.projector);
    if (out.predictor) clear_net(*out.predictor);
    return out;
}

}  // namespace

ModelParams aggregate(const std::vector<LocalUpdate>& updates) {
    if (updates.empty()) throw ValidationError("aggregate: empty update list");
    if (updates.size() == 1) return updates.front().params;  // verbatim
    std::size_t total = 0;
    for (const LocalUpdate& u : updates) {
        if (u.sample_count == 0) throw ValidationError("aggregate: update with zero samples");
        if (!(u.params.arch == updates.front().params.arch)) {
            throw DimensionError("aggregate: architecture mismatch across updates");
        }
        total += u.sample_count;
    }
    ModelParams result = zeroed_like(updates.front().params);
    for (const LocalUpdate& u : updates) {
        const double weight =
            static_cast<double>(u.sample_count) / static_cast<double>(total);
        accumulate_weighted(result, u.params, weight);
    }
    return result;
}

double comm_cost(int rounds, int clusters, double model_size, Algorithm algorithm) {
    if (rounds <= 0 || clusters <= 0 || model_size <= 0.0) {
        throw ValidationError("comm_cost: inputs must be positive");
    }
    const double t = static_cast<double>(rounds);
    if (algorithm == Algorithm::fedavg) return 2.0 * model_size * t;
    return (static_cast<double>(clusters) + 1.0) * model_size * t;
}

bool detect_clustering_failure(const std::vector<std::size_t>& window_nonempty_counts,
                               int failure_window) {
    if (static_cast<int>(window_nonempty_counts.size()) < failure_window) return false;
    const std::size_t start = window_nonempty_counts.size() - static_cast<std::size_t>(failure_window);
    for (std::size_t i = start; i < window_nonempty_counts.size(); ++i) {
        if (window_nonempty_counts[i] != 1) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Pool construction
// ---------------------------------------------------------------------------

ClusterModelPool random_pool(int n_models, const ArchConfig& arch, std::uint64_t base_seed) {
    ClusterModelPool pool;
    for (int n = 1; n <= n_models; ++n) {
        ModelParams model;
        model.arch = arch;
        Rng enc_rng(derive_seed(base_seed, {stream::kEncoderInit, static_cast<std::uint64_t>(n)}));
        model.encoder = build_encoder(arch, enc_rng);
        Rng head_rng(derive_seed(base_seed, {stream::kHeadInit, static_cast<std::uint64_t>(n)}));
        model.classifier = build_classifier(arch, head_rng);
        pool.models.push_back(std::move(model));
    }
    return pool;
}

ClusterModelPool make_initial_pool(const FederationConfig& cfg, const ArchConfig& arch,
                                   const std::optional<Network>& pretrained_encoder) {
    cfg.validate();
    const std::uint64_t base = derive_seed(cfg.seed, {stream::kModelInit});
    if (cfg.algorithm == Algorithm::ifca && !pretrained_encoder.has_value()) {
        return random_pool(cfg.clusters, arch, base);
    }
    // One shared encoder joined with N independently initialized heads.
    Network encoder;
    if (pretrained_encoder.has_value()) {
        encoder = *pretrained_encoder;
        if (encoder.in_dim() != arch.input_dim || encoder.out_dim() != arch.rep_dim) {
            throw ValidationError("initial pool: pretrained encoder dims do not match arch");
        }
    } else {
        Rng enc_rng(derive_seed(base, {stream::kEncoderInit, 0}));
        encoder = build_encoder(arch, enc_rng);
    }
    ClusterModelPool pool;
    for (int n = 1; n <= cfg.clusters; ++n) {
        ModelParams model;
        model.arch = arch;
        model.encoder = encoder;
        Rng head_rng(derive_seed(base, {stream::kHeadInit, static_cast<std::uint64_t>(n)}));
        model.classifier = build_classifier(arch, head_rng);
        pool.models.push_back(std::move(model));
    }
    return pool;
}

// ---------------------------------------------------------------------------
// Rounds
// ---------------------------------------------------------------------------

namespace {

std::vector<int> pick_participants(const FederationConfig& cfg, std::size_t client_count, int t) {
    std::vector<int> all(client_count);
    std::iota(all.begin(), all.end(), 0);
    if (cfg.participation_fraction >= 1.0) return all;
    const std::size_t take = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::ceil(cfg.participation_fraction * static_cast<double>(client_count))));
    Rng rng(derive_seed(cfg.seed, {stream::kParticipation, static_cast<std::uint64_t>(t)}));
    std::vector<std::size_t> picked = rng.sample_without_replacement(client_count, take);
    std::sort(picked.begin(), picked.end());
    std::vector<int> out;
    out.reserve(picked.size());
    for (std::size_t idx : picked) out.push_back(static_cast<int>(idx));
    return out;
}

}  // namespace

const RoundRecord& run_round(FederationState& state, int t,
                             const std::vector<ClientDataset>& clients,
                             const FederationConfig& cfg) {
    const int n_clusters = static_cast<int>(state.pool.models.size());
    const bool exploration = t < cfg.effective_explore_rounds();

    RoundRecord record;
    record.round = t;
    record.exploration = exploration;
    record.participants = pick_participants(cfg, clients.size(), t);

    std::vector<std::vector<LocalUpdate>> per_cluster(static_cast<std::size_t>(n_clusters));
    double loss_sum = 0.0;
    for (int client_id : record.participants) {
        const ClientDataset& client = clients[static_cast<std::size_t>(client_id)];
        int identity;
        if (exploration) {
            Rng explore_rng(derive_seed(cfg.seed, {stream::kExplore, static_cast<std::uint64_t>(t),
                                                   static_cast<std::uint64_t>(client_id)}));
            identity = 1 + static_cast<int>(
                               explore_rng.uniform_int(static_cast<std::uint64_t>(n_clusters)));
        } else {
            identity = select_model(client, state.pool);
        }
        const std::uint64_t local_seed =
            derive_seed(cfg.seed, {stream::kLocalTraining, static_cast<std::uint64_t>(t),
                                   static_cast<std::uint64_t>(client_id)});
        try {
            LocalUpdate update =
                local_update(client, state.pool.models[static_cast<std::size_t>(identity - 1)],
                             identity, cfg, exploration, local_seed);
            loss_sum += update.mean_loss;
            record.selections.push_back(identity);
            per_cluster[static_cast<std::size_t>(identity - 1)].push_back(std::move(update));
        } catch (const Error& e) {
            throw Error("client " + std::to_string(client_id) + ": " + e.what());
        }
    }
    record.mean_local_loss =
        record.participants.empty() ? 0.0
                                    : loss_sum / static_cast<double>(record.participants.size());

    // Per-cluster aggregation; empty clusters keep their previous model.
    std::vector<LocalUpdate> all_updates;
    for (int n = 0; n < n_clusters; ++n) {
        auto& updates = per_cluster[static_cast<std::size_t>(n)];
        record.cluster_sizes.push_back(updates.size());
        if (updates.empty()) continue;
        ModelParams aggregated = aggregate(updates);
        if (exploration) {
            // Encoders are frozen client-side; carry the pool encoder over
            // bitwise rather than re-averaging identical copies.
            aggregated.encoder = state.pool.models[static_cast<std::size_t>(n)].encoder;
        }
        state.pool.models[static_cast<std::size_t>(n)] = std::move(aggregated);
        for (LocalUpdate& u : updates) all_updates.push_back(std::move(u));
    }

    if (cfg.global_encoder && !exploration && !all_updates.empty()) {
        // All cluster models share one population-weighted encoder.
        std::size_t total = 0;
        for (const LocalUpdate& u : all_updates) total += u.sample_count;
        Network global = all_updates.front().params.encoder;
        for (Tensor* tens : state_tensors(global)) tens->fill(0.0);
        for (const LocalUpdate& u : all_updates) {
            const double weight =
                static_cast<double>(u.sample_count) / static_cast<double>(total);
            auto dst = state_tensors(global);
            auto src = state_tensors(u.params.encoder);
            for (std::size_t i = 0; i < dst.size(); ++i) {
                kernels::axpy(weight, src[i]->data(), dst[i]->data(), dst[i]->size());
            }
        }
        for (ModelParams& model : state.pool.models) model.encoder = global;
    }

    const double per_round_cost = cfg.algorithm == Algorithm::fedavg
                                      ? 2.0 * cfg.model_size_units
                                      : (static_cast<double>(cfg.clusters) + 1.0) *
                                            cfg.model_size_units;
    const double prev_cost = state.history.rounds.empty()
                                 ? 0.0
                                 : state.history.rounds.back().cumulative_comm_units;
    record.cumulative_comm_units = prev_cost + per_round_cost;
    record.restarts_so_far = state.history.restart_count;

    if (!exploration) {
        state.failure_window.push_back(static_cast<std::size_t>(
            std::count_if(record.cluster_sizes.begin(), record.cluster_sizes.end(),
                          [](std::size_t s) { return s > 0; })));
    }

    state.history.rounds.push_back(std::move(record));
    return state.history.rounds.back();
}

// ---------------------------------------------------------------------------
// Full run
// ---------------------------------------------------------------------------

FederationResult run_federation(const FederationConfig& cfg,
                                const std::vector<ClientDataset>& clients,
                                ClusterModelPool initial_pool, const RoundCallback& on_round) {
    cfg.validate();
    if (clients.empty()) throw ValidationError("run_federation: no clients");
    if (static_cast<int>(initial_pool.models.size()) != cfg.clusters) {
        throw ValidationError("run_federation: pool size != clusters");
    }

    FederationState state;
    state.pool = std::move(initial_pool);
    const ArchConfig arch = state.pool.models.front().arch;

    for (int t = 0; t < cfg.rounds; ++t) {
        run_round(state, t, clients, cfg);

        const bool final_round_now = t == cfg.rounds - 1;
        const bool cadence_now = cfg.eval_every > 0 && (t + 1) % cfg.eval_every == 0;
        if (final_round_now || cadence_now) {
            RoundRecord& record = state.history.rounds.back();
            record.eval = evaluate_pool(state.pool.models, clients);
            record.eval->round = t;
        }
        if (on_round) on_round(state, t);

        // IFCA failure handling: all clients on one model for W consecutive
        // selection rounds. Needs N >= 2 to be meaningful.
        if (cfg.algorithm == Algorithm::ifca && cfg.clusters >= 2 &&
            detect_clustering_failure(state.failure_window, cfg.restart.failure_window)) {
            if (state.history.restart_count < cfg.restart.max_restarts) {
                ++state.history.restart_count;
                state.history.restart_rounds.push_back(t);
                state.pool = random_pool(
                    cfg.clusters, arch,
                    derive_seed(cfg.seed, {stream::kRestart,
                                           static_cast<std::uint64_t>(
                                               state.history.restart_count)}));
                state.failure_window.clear();
            } else {
                state.history.clustering_failure = true;
                if (!state.history.rounds.back().eval.has_value()) {
                    state.history.rounds.back().eval = evaluate_pool(state.pool.models, clients);
                    state.history.rounds.back().eval->round = t;
                }
                break;  // restarts exhausted: terminate with a failure report
            }
        }
    }
    return {std::move(state.pool), std::move(state.history)};
}

ClusterTrace cluster_trace_from_history(const RunHistory& history,
                                        const std::vector<ClientDataset>& clients) {
    ClusterTrace trace;
    trace.ground_truth.reserve(clients.size());
    for (const ClientDataset& client : clients) trace.ground_truth.push_back(client.true_cluster);
    for (const RoundRecord& record : history.rounds) {
        std::vector<int> row(clients.size(), 0);
        for (std::size_t i = 0; i < record.participants.size(); ++i) {
            row[static_cast<std::size_t>(record.participants[i])] = record.selections[i];
        }
        trace.per_round.push_back(std::move(row));
    }
    return trace;
}

}  // namespace cpcfl
