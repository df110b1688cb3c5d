#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cpcfl/datasets.hpp"
#include "cpcfl/nn.hpp"

namespace cpcfl {

// ---------------------------------------------------------------------------
// Evaluation report
// ---------------------------------------------------------------------------

struct EvaluationReport {
    std::vector<double> per_client_accuracy;
    double mean_accuracy = 0.0;  // mean of the per-client test accuracies
    // F1/AUROC over predictions pooled across clients.
    double f1_macro = 0.0;
    double f1_weighted = 0.0;
    double auroc_ovr_macro = 0.0;
    double auroc_ovr_weighted = 0.0;
    double auroc_ovo_macro = 0.0;
    double auroc_ovo_weighted = 0.0;
    int round = -1;
    bool auroc_warning = false;  // some class/pair skipped for missing support

    bool operator==(const EvaluationReport&) const = default;
};

// Each client picks its pool model by lowest full-batch train loss (ties to
// the lowest index) and is scored on its own test set.
EvaluationReport evaluate_pool(const std::vector<ModelParams>& pool,
                               const std::vector<ClientDataset>& clients);

// ---------------------------------------------------------------------------
// Classification scores
// ---------------------------------------------------------------------------

struct F1Scores {
    double macro = 0.0;
    double weighted = 0.0;
};

// confusion is row-major [true_class * class_count + predicted_class].
// Per-class F1 = 2PR/(P+R), 0 when P+R = 0; macro is the unweighted mean
// over classes, weighted uses true-class support (zero-support classes get
// weight 0).
F1Scores f1_scores(const std::vector<std::int64_t>& confusion, int class_count);

enum class AurocScheme { ovr, ovo };
enum class AurocAverage { macro, weighted };

// Mann-Whitney AUROC with average ranks on ties. OvR: per-class
// class-vs-rest; classes without positives are skipped (macro) / weight 0
// (weighted) and set *warning. OvO: ordered class pairs (j, k) restricted to
// samples of the two classes, scored with column j; weighted uses pair
// prevalence (n_j + n_k).
double auroc(const Tensor& scores, const std::vector<int>& labels, AurocScheme scheme,
             AurocAverage average, bool* warning = nullptr);

// ---------------------------------------------------------------------------
// Clustering agreement
// ---------------------------------------------------------------------------

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

struct ClusterTrace {
    // per_round[t][i] = cluster identity (1-based) of client i at round t;
    // 0 marks a client that did not participate in that round.
    std::vector<std::vector<int>> per_round;
    std::vector<int> ground_truth;
};

// ARI between the assignments at round t and the ground-truth clusters,
// over clients that participated in that round.
double clustering_agreement(const ClusterTrace& trace, std::size_t round);

// ---------------------------------------------------------------------------
// Multi-trial statistics
// ---------------------------------------------------------------------------

enum class SdMode {
    sample,      // n-1 denominator
    population,  // n denominator (the convention behind the paper-style tables)
};

struct TrialStats {
    double mean = 0.0;
    double sd = 0.0;
};

TrialStats trial_statistics(const std::vector<double>& scores, SdMode mode = SdMode::sample);

}  // namespace cpcfl
