#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cpcfl/datasets.hpp"
#include "cpcfl/metrics.hpp"
#include "cpcfl/nn.hpp"

namespace cpcfl {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class Algorithm { fedavg, ifca, cpcfl };

const char* algorithm_name(Algorithm algorithm);
Algorithm algorithm_from_name(const std::string& name);

struct IfcaRestartConfig {
    int max_restarts = 3;    // R
    int failure_window = 5;  // W consecutive selection rounds
};

struct FederationConfig {
    Algorithm algorithm = Algorithm::cpcfl;
    int clusters = 3;              // N
    int rounds = 100;              // T
    int explore_rounds = 10;       // T_c; only cpcfl runs an exploration phase
    int local_epochs = 3;          // E_l
    int encoder_local_epochs = 3;  // E_lf <= E_l
    double local_lr = 1e-3;
    int batch_size = 32;
    double participation_fraction = 1.0;
    bool global_encoder = false;  // aggregate all encoders into one shared encoder
    IfcaRestartConfig restart;
    std::uint64_t seed = 1;
    int eval_every = 5;             // metrics snapshot cadence; final round always
    double model_size_units = 1.0;  // S in the communication-cost model

    void validate() const;
    int effective_explore_rounds() const {
        return algorithm == Algorithm::cpcfl ? explore_rounds : 0;
    }
};

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

struct ClusterModelPool {
    std::vector<ModelParams> models;  // {theta^n}, identical architectures
};

struct LocalUpdate {
    int client_id = 0;
    ModelParams params;        // phi_u
    int cluster_identity = 1;  // n_u, 1-based
    std::size_t sample_count = 0;
    double mean_loss = 0.0;
    std::size_t steps = 0;
};

struct RoundRecord {
    int round = 0;
    bool exploration = false;
    std::vector<int> participants;
    std::vector<int> selections;             // n_u per participant, 1-based
    std::vector<std::size_t> cluster_sizes;  // |G^n| for n = 1..N
    double mean_local_loss = 0.0;
    double cumulative_comm_units = 0.0;  // per-client cost so far
    int restarts_so_far = 0;
    std::optional<EvaluationReport> eval;
};

struct RunHistory {
    std::vector<RoundRecord> rounds;
    int restart_count = 0;
    std::vector<int> restart_rounds;   // round index after which each restart fired
    bool clustering_failure = false;   // restarts exhausted, run terminated
};

struct FederationState {
    ClusterModelPool pool;
    RunHistory history;
    // Nonempty-cluster count per selection round since the last restart.
    std::vector<std::size_t> failure_window;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// argmin_n of the full-batch eval-mode cross-entropy on the client's train
// set; ties break to the lowest index. Returns a 1-based identity.
int select_model(const ClientDataset& client, const ClusterModelPool& pool);

// E_l local epochs of minibatch cross-entropy with Adam. freeze_encoder
// keeps the encoder bitwise unchanged (classifier-only training); otherwise
// the encoder participates in the first encoder_local_epochs epochs.
LocalUpdate local_update(const ClientDataset& client, const ModelParams& model,
                         int cluster_identity, const FederationConfig& cfg, bool freeze_encoder,
                         std::uint64_t rng_seed);

// Parameterwise weighted mean with weights |D_u| / sum |D_u'|. A single
// update is returned verbatim.
ModelParams aggregate(const std::vector<LocalUpdate>& updates);

// Eq.-style closed forms: 2*S*T for fedavg, (N+1)*S*T for the CFL schemes.
double comm_cost(int rounds, int clusters, double model_size, Algorithm algorithm);

// True iff every round of the window has exactly one nonempty cluster. The
// entries are per-round nonempty-cluster counts over the last W selection
// rounds.
bool detect_clustering_failure(const std::vector<std::size_t>& window_nonempty_counts,
                               int failure_window);

// Initial pool:
//  - fedavg/cpcfl: one encoder (pretrained if given, else seeded random)
//    joined with N independently initialized classifier heads;
//  - ifca: N fully random models, or shared pretrained encoder + N heads.
ClusterModelPool make_initial_pool(const FederationConfig& cfg, const ArchConfig& arch,
                                   const std::optional<Network>& pretrained_encoder);

// N fully random models (also used for IFCA restarts).
ClusterModelPool random_pool(int n_models, const ArchConfig& arch, std::uint64_t base_seed);

// Executes round t: participants train (exploration: random model, frozen
// encoder; otherwise Eq.-5 selection), clusters aggregate, empty clusters
// carry their model over. Appends one record to state.history and returns a
// reference to it.
const RoundRecord& run_round(FederationState& state, int t,
                             const std::vector<ClientDataset>& clients,
                             const FederationConfig& cfg);

struct FederationResult {
    ClusterModelPool pool;
    RunHistory history;
};

// Called after each completed round (post aggregation/eval, pre restart).
using RoundCallback = std::function<void(const FederationState& state, int round)>;

// Full run of T rounds, including the IFCA failure/restart path. Restarts
// re-randomize the whole pool with a derived seed and count against the same
// round budget; exhausting max_restarts terminates the run with the
// clustering_failure flag set.
FederationResult run_federation(const FederationConfig& cfg,
                                const std::vector<ClientDataset>& clients,
                                ClusterModelPool initial_pool,
                                const RoundCallback& on_round = {});

// Per-round, per-client identity matrix (0 = did not participate).
ClusterTrace cluster_trace_from_history(const RunHistory& history,
                                        const std::vector<ClientDataset>& clients);

}  // namespace cpcfl
