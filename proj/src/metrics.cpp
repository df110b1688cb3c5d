#include "cpcfl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "cpcfl/federation.hpp"

namespace cpcfl {

// ---------------------------------------------------------------------------
// F1
// ---------------------------------------------------------------------------

F1Scores f1_scores(const std::vector<std::int64_t>& confusion, int class_count) {
    if (class_count <= 0 ||
        confusion.size() != static_cast<std::size_t>(class_count) * class_count) {
        throw ValidationError("f1_scores: confusion must be class_count x class_count");
    }
    std::int64_t total = 0;
    for (std::int64_t v : confusion) {
        if (v < 0) throw ValidationError("f1_scores: negative confusion count");
        total += v;
    }
    if (total == 0) throw ValidationError("f1_scores: all-zero confusion matrix");

    F1Scores scores;
    double weighted_sum = 0.0;
    std::int64_t support_total = 0;
    for (int c = 0; c < class_count; ++c) {
        std::int64_t tp = confusion[static_cast<std::size_t>(c) * class_count + c];
        std::int64_t fp = 0, fn = 0;
        for (int other = 0; other < class_count; ++other) {
            if (other == c) continue;
            fp += confusion[static_cast<std::size_t>(other) * class_count + c];
            fn += confusion[static_cast<std::size_t>(c) * class_count + other];
        }
        const double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        const double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
        const double f1 =
            precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        scores.macro += f1;
        const std::int64_t support = tp + fn;
        weighted_sum += f1 * static_cast<double>(support);
        support_total += support;
    }
    scores.macro /= static_cast<double>(class_count);
    scores.weighted = support_total > 0 ? weighted_sum / static_cast<double>(support_total) : 0.0;
    return scores;
}

// ---------------------------------------------------------------------------
// AUROC
// ---------------------------------------------------------------------------

namespace {

// Mann-Whitney with average ranks on ties over (score, is_positive) pairs.
double binary_auc(std::vector<std::pair<double, bool>>& items) {
    std::sort(items.begin(), items.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    const std::size_t n = items.size();
    double pos_rank_sum = 0.0;
    std::size_t positives = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && items[j].first == items[i].first) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based average
        for (std::size_t t = i; t < j; ++t) {
            if (items[t].second) {
                pos_rank_sum += avg_rank;
                ++positives;
            }
        }
        i = j;
    }
    const std::size_t negatives = n - positives;
    const double u = pos_rank_sum -
                     static_cast<double>(positives) * (static_cast<double>(positives) + 1.0) / 2.0;
    return u / (static_cast<double>(positives) * static_cast<double>(negatives));
}

}  // namespace

double auroc(const Tensor& scores, const std::vector<int>& labels, AurocScheme scheme,
             AurocAverage average, bool* warning) {
    const std::size_t n = labels.size();
    if (scores.rows() != n || n == 0) throw ValidationError("auroc: score/label count mismatch");
    const int k = static_cast<int>(scores.cols());
    for (std::size_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (int c = 0; c < k; ++c) row_sum += scores(i, static_cast<std::size_t>(c));
        if (std::abs(row_sum - 1.0) > 1e-6) {
            throw ValidationError("auroc: probability row " + std::to_string(i) +
                                  " does not sum to 1");
        }
    }
    std::vector<std::size_t> support(static_cast<std::size_t>(k), 0);
    for (int label : labels) {
        if (label < 0 || label >= k) throw ValidationError("auroc: label out of range");
        ++support[static_cast<std::size_t>(label)];
    }
    const int present =
        static_cast<int>(std::count_if(support.begin(), support.end(),
                                       [](std::size_t s) { return s > 0; }));
    if (present < 2) throw ValidationError("auroc: need at least 2 classes present");

    double weighted_sum = 0.0;
    double weight_total = 0.0;
    std::size_t terms = 0;
    double macro_sum = 0.0;
    bool skipped = false;

    if (scheme == AurocScheme::ovr) {
        for (int c = 0; c < k; ++c) {
            if (support[static_cast<std::size_t>(c)] == 0 ||
                support[static_cast<std::size_t>(c)] == n) {
                skipped = true;
                continue;
            }
            std::vector<std::pair<double, bool>> items;
            items.reserve(n);
            for (std::size_t i = 0; i < n; ++i) {
                items.emplace_back(scores(i, static_cast<std::size_t>(c)), labels[i] == c);
            }
            const double auc = binary_auc(items);
            macro_sum += auc;
            ++terms;
            const double w = static_cast<double>(support[static_cast<std::size_t>(c)]);
            weighted_sum += auc * w;
            weight_total += w;
        }
    } else {
        for (int pos = 0; pos < k; ++pos) {
            for (int neg = 0; neg < k; ++neg) {
                if (pos == neg) continue;
                const std::size_t np = support[static_cast<std::size_t>(pos)];
                const std::size_t nn = support[static_cast<std::size_t>(neg)];
                if (np == 0 || nn == 0) {
                    skipped = true;
                    continue;
                }
                std::vector<std::pair<double, bool>> items;
                items.reserve(np + nn);
                for (std::size_t i = 0; i < n; ++i) {
                    if (labels[i] == pos || labels[i] == neg) {
                        items.emplace_back(scores(i, static_cast<std::size_t>(pos)),
                                           labels[i] == pos);
                    }
                }
                const double auc = binary_auc(items);
                macro_sum += auc;
                ++terms;
                const double w = static_cast<double>(np + nn);  // pair prevalence
                weighted_sum += auc * w;
                weight_total += w;
            }
        }
    }
    if (terms == 0) throw ValidationError("auroc: no class with both positives and negatives");
    if (warning != nullptr && skipped) *warning = true;
    return average == AurocAverage::macro ? macro_sum / static_cast<double>(terms)
                                          : weighted_sum / weight_total;
}

// ---------------------------------------------------------------------------
// Adjusted Rand Index
// ---------------------------------------------------------------------------

namespace {

double choose2(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size() || a.empty()) {
        throw ValidationError("adjusted_rand_index: size mismatch or empty input");
    }
    // Contingency via label compaction.
    std::vector<int> a_ids(a.size()), b_ids(b.size());
    auto compact = [](const std::vector<int>& labels, std::vector<int>& ids) {
        std::vector<int> seen;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            auto it = std::find(seen.begin(), seen.end(), labels[i]);
            if (it == seen.end()) {
                seen.push_back(labels[i]);
                ids[i] = static_cast<int>(seen.size()) - 1;
            } else {
                ids[i] = static_cast<int>(it - seen.begin());
            }
        }
        return seen.size();
    };
    const std::size_t ka = compact(a, a_ids);
    const std::size_t kb = compact(b, b_ids);
    std::vector<std::int64_t> table(ka * kb, 0);
    std::vector<std::int64_t> row_sum(ka, 0), col_sum(kb, 0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++table[static_cast<std::size_t>(a_ids[i]) * kb + static_cast<std::size_t>(b_ids[i])];
        ++row_sum[static_cast<std::size_t>(a_ids[i])];
        ++col_sum[static_cast<std::size_t>(b_ids[i])];
    }
    double index = 0.0;
    for (std::int64_t v : table) index += choose2(static_cast<double>(v));
    double sum_a = 0.0, sum_b = 0.0;
    for (std::int64_t v : row_sum) sum_a += choose2(static_cast<double>(v));
    for (std::int64_t v : col_sum) sum_b += choose2(static_cast<double>(v));
    const double pairs = choose2(static_cast<double>(a.size()));
    const double expected = pairs > 0.0 ? sum_a * sum_b / pairs : 0.0;
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) {
        // Both partitions trivial (all-singleton or all-together on each side).
        return index == expected ? 1.0 : 0.0;
    }
    return (index - expected) / (max_index - expected);
}

double clustering_agreement(const ClusterTrace& trace, std::size_t round) {
    if (round >= trace.per_round.size()) {
        throw ValidationError("clustering_agreement: round " + std::to_string(round) +
                              " outside history of " + std::to_string(trace.per_round.size()) +
                              " rounds");
    }
    const std::vector<int>& assignments = trace.per_round[round];
    if (assignments.size() != trace.ground_truth.size()) {
        throw ValidationError("clustering_agreement: trace/ground-truth size mismatch");
    }
    std::vector<int> a, b;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i] <= 0) continue;  // did not participate
        a.push_back(assignments[i]);
        b.push_back(trace.ground_truth[i]);
    }
    return adjusted_rand_index(a, b);
}

// ---------------------------------------------------------------------------
// Trial statistics
// ---------------------------------------------------------------------------

TrialStats trial_statistics(const std::vector<double>& scores, SdMode mode) {
    if (scores.size() < 2) {
        throw ValidationError("trial_statistics: need at least 2 trials for a standard deviation");
    }
    TrialStats stats;
    stats.mean = std::accumulate(scores.begin(), scores.end(), 0.0) /
                 static_cast<double>(scores.size());
    double ss = 0.0;
    for (double v : scores) {
        const double d = v - stats.mean;
        ss += d * d;
    }
    const double denom = mode == SdMode::sample ? static_cast<double>(scores.size()) - 1.0
                                                : static_cast<double>(scores.size());
    stats.sd = std::sqrt(ss / denom);
    return stats;
}

// ---------------------------------------------------------------------------
// Pool evaluation
// ---------------------------------------------------------------------------

EvaluationReport evaluate_pool(const std::vector<ModelParams>& pool,
                               const std::vector<ClientDataset>& clients) {
    if (pool.empty()) throw ValidationError("evaluate_pool: empty pool");
    if (clients.empty()) throw ValidationError("evaluate_pool: no clients");
    const int k = static_cast<int>(pool.front().arch.class_count);

    EvaluationReport report;
    std::vector<std::int64_t> confusion(static_cast<std::size_t>(k) * k, 0);
    std::vector<int> pooled_labels;
    std::vector<Tensor> pooled_scores;
    std::size_t pooled_rows = 0;

    ClusterModelPool wrapped;
    wrapped.models = pool;
    for (const ClientDataset& client : clients) {
        if (client.test.size() == 0) {
            throw ValidationError("evaluate_pool: client " + std::to_string(client.client_id) +
                                  " has an empty test set");
        }
        const int selected = select_model(client, wrapped);
        const ModelParams& model = pool[static_cast<std::size_t>(selected - 1)];
        const Tensor probs =
            forward(model, Branch::encoder_classifier, client.test.features, RunMode::eval);
        report.per_client_accuracy.push_back(accuracy(probs, client.test.labels));
        const std::vector<int> preds = argmax_rows(probs);
        for (std::size_t i = 0; i < preds.size(); ++i) {
            ++confusion[static_cast<std::size_t>(client.test.labels[i]) * k +
                        static_cast<std::size_t>(preds[i])];
        }
        pooled_labels.insert(pooled_labels.end(), client.test.labels.begin(),
                             client.test.labels.end());
        pooled_rows += probs.rows();
        pooled_scores.push_back(probs);
    }
    report.mean_accuracy =
        std::accumulate(report.per_client_accuracy.begin(), report.per_client_accuracy.end(),
                        0.0) /
        static_cast<double>(report.per_client_accuracy.size());

    const F1Scores f1 = f1_scores(confusion, k);
    report.f1_macro = f1.macro;
    report.f1_weighted = f1.weighted;

    Tensor all_scores({pooled_rows, static_cast<std::size_t>(k)});
    std::size_t row = 0;
    for (const Tensor& block : pooled_scores) {
        std::memcpy(all_scores.row(row), block.data(), block.size() * sizeof(double));
        row += block.rows();
    }
    report.auroc_ovr_macro = auroc(all_scores, pooled_labels, AurocScheme::ovr,
                                   AurocAverage::macro, &report.auroc_warning);
    report.auroc_ovr_weighted = auroc(all_scores, pooled_labels, AurocScheme::ovr,
                                      AurocAverage::weighted, &report.auroc_warning);
    report.auroc_ovo_macro = auroc(all_scores, pooled_labels, AurocScheme::ovo,
                                   AurocAverage::macro, &report.auroc_warning);
    report.auroc_ovo_weighted = auroc(all_scores, pooled_labels, AurocScheme::ovo,
                                      AurocAverage::weighted, &report.auroc_warning);
    return report;
}

}  // namespace cpcfl
