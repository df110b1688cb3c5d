#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cpcfl/datagen.hpp"
#include "cpcfl/federation.hpp"
#include "cpcfl/metrics.hpp"
#include "support/oracles.hpp"

using namespace cpcfl;

TEST_CASE("f1_scores: diagonal confusion is perfect") {
    const std::vector<std::int64_t> confusion{5, 0, 0, 0, 7, 0, 0, 0, 3};
    const F1Scores scores = f1_scores(confusion, 3);
    CHECK(scores.macro == doctest::Approx(1.0));
    CHECK(scores.weighted == doctest::Approx(1.0));
}

TEST_CASE("f1_scores: binary TP=FP=FN=TN=1 gives 0.5 everywhere") {
    // rows = true class, cols = predicted. class 0 as positive:
    // TP=1 (0->0), FN=1 (0->1), FP=1 (1->0), TN=1 (1->1).
    const std::vector<std::int64_t> confusion{1, 1, 1, 1};
    const F1Scores scores = f1_scores(confusion, 2);
    CHECK(scores.macro == doctest::Approx(0.5));
    CHECK(scores.weighted == doctest::Approx(0.5));
}

TEST_CASE("f1_scores: zero-support class weighs nothing in the weighted mean") {
    // class 2 never appears as a true label.
    const std::vector<std::int64_t> confusion{4, 0, 0, 0, 4, 0, 0, 0, 0};
    const F1Scores scores = f1_scores(confusion, 3);
    CHECK(scores.weighted == doctest::Approx(1.0));
    CHECK(scores.macro == doctest::Approx(2.0 / 3.0));  // macro still counts it as 0
}

TEST_CASE("f1_scores: equal supports make weighted == macro") {
    const std::vector<std::int64_t> confusion{6, 2, 0, 1, 5, 2, 2, 0, 6};
    const F1Scores scores = f1_scores(confusion, 3);
    CHECK(scores.weighted == doctest::Approx(scores.macro));
}

TEST_CASE("f1_scores: all-zero confusion is invalid") {
    CHECK_THROWS_AS(f1_scores(std::vector<std::int64_t>(9, 0), 3), ValidationError);
}

TEST_CASE("auroc: perfect separation, ties, and the 4-sample hand case") {
    // 4-sample binary case from a hand-computed pair count.
    Tensor scores({4, 2});
    const double class1[] = {0.9, 0.8, 0.4, 0.3};
    for (std::size_t i = 0; i < 4; ++i) {
        scores(i, 1) = class1[i];
        scores(i, 0) = 1.0 - class1[i];
    }
    const std::vector<int> labels{1, 0, 1, 0};
    CHECK(auroc(scores, labels, AurocScheme::ovr, AurocAverage::macro) == doctest::Approx(0.75));

    // Perfectly separated scores: 1.0 under every scheme.
    Tensor sep({6, 2});
    std::vector<int> sep_labels{0, 0, 0, 1, 1, 1};
    for (std::size_t i = 0; i < 6; ++i) {
        sep(i, 1) = i < 3 ? 0.1 + 0.01 * static_cast<double>(i) : 0.8 + 0.01 * static_cast<double>(i);
        sep(i, 0) = 1.0 - sep(i, 1);
    }
    for (auto scheme : {AurocScheme::ovr, AurocScheme::ovo}) {
        for (auto avg : {AurocAverage::macro, AurocAverage::weighted}) {
            CHECK(auroc(sep, sep_labels, scheme, avg) == doctest::Approx(1.0));
        }
    }

    // All-identical scores: 0.5 by the tie convention.
    Tensor ties({5, 2});
    for (std::size_t i = 0; i < 5; ++i) {
        ties(i, 0) = 0.5;
        ties(i, 1) = 0.5;
    }
    CHECK(auroc(ties, {0, 1, 0, 1, 1}, AurocScheme::ovr, AurocAverage::macro) ==
          doctest::Approx(0.5));
}

TEST_CASE("auroc: matches exhaustive pair counting on random small instances") {
    Rng rng(31);
    for (int instance = 0; instance < 30; ++instance) {
        const std::size_t n = 5 + rng.uniform_int(15);  // <= 20 samples
        Tensor scores({n, 2});
        std::vector<int> labels(n);
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            double p = rng.uniform();
            if (rng.bernoulli(0.3)) p = 0.5;  // inject ties
            scores(i, 1) = p;
            scores(i, 0) = 1.0 - p;
            labels[i] = rng.bernoulli(0.5) ? 1 : 0;
            has_pos |= labels[i] == 1;
            has_neg |= labels[i] == 0;
        }
        if (!has_pos || !has_neg) continue;
        std::vector<double> class1_scores(n);
        for (std::size_t i = 0; i < n; ++i) class1_scores[i] = scores(i, 1);
        const double expected = oracles::pair_count_auc(class1_scores, labels);
        CHECK(std::abs(auroc(scores, labels, AurocScheme::ovr, AurocAverage::macro) - expected) <
              1e-12);
    }
}

TEST_CASE("auroc: invariant under strictly monotone score transforms") {
    // Binary rows [p, 1-p] mapped through the strictly increasing
    // q = p^3 / (p^3 + (1-p)^3) stay row-stochastic and preserve both
    // columns' orderings, so every scheme/average must agree exactly.
    Rng rng(32);
    const std::size_t n = 40;
    Tensor binary({n, 2});
    Tensor mapped({n, 2});
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double p = rng.uniform();
        binary(i, 0) = p;
        binary(i, 1) = 1.0 - p;
        const double q = p * p * p / (p * p * p + (1.0 - p) * (1.0 - p) * (1.0 - p));
        mapped(i, 0) = q;
        mapped(i, 1) = 1.0 - q;
        labels[i] = rng.bernoulli(0.5) ? 1 : 0;
    }
    labels[0] = 0;
    labels[1] = 1;
    for (auto scheme : {AurocScheme::ovr, AurocScheme::ovo}) {
        for (auto avg : {AurocAverage::macro, AurocAverage::weighted}) {
            CHECK(std::abs(auroc(mapped, labels, scheme, avg) -
                           auroc(binary, labels, scheme, avg)) < 1e-12);
        }
    }
}

TEST_CASE("auroc: binary OvR macro equals OvO macro") {
    Rng rng(33);
    const std::size_t n = 25;
    Tensor scores({n, 2});
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double p = rng.uniform();
        scores(i, 0) = p;
        scores(i, 1) = 1.0 - p;
        labels[i] = rng.bernoulli(0.4) ? 1 : 0;
    }
    labels[0] = 0;
    labels[1] = 1;
    CHECK(auroc(scores, labels, AurocScheme::ovr, AurocAverage::macro) ==
          doctest::Approx(auroc(scores, labels, AurocScheme::ovo, AurocAverage::macro))
              .epsilon(1e-12));
}

TEST_CASE("auroc: missing class is skipped with a warning") {
    Tensor scores({4, 3});
    for (std::size_t i = 0; i < 4; ++i) {
        scores(i, 0) = 0.5;
        scores(i, 1) = 0.3;
        scores(i, 2) = 0.2;
    }
    bool warning = false;
    (void)auroc(scores, {0, 1, 0, 1}, AurocScheme::ovr, AurocAverage::macro, &warning);
    CHECK(warning);  // class 2 has no positives
}

TEST_CASE("adjusted_rand_index: permutation invariance and hand cases") {
    const std::vector<int> truth{0, 0, 1, 1, 2, 2};
    CHECK(adjusted_rand_index(truth, truth) == doctest::Approx(1.0));
    const std::vector<int> permuted{2, 2, 0, 0, 1, 1};
    CHECK(adjusted_rand_index(truth, permuted) == doctest::Approx(1.0));

    // All clients in one cluster vs 3 balanced true clusters: ARI = 0.
    std::vector<int> truth60(60), ones60(60, 1);
    for (int i = 0; i < 60; ++i) truth60[static_cast<std::size_t>(i)] = i / 20;
    CHECK(adjusted_rand_index(ones60, truth60) == doctest::Approx(0.0));
}

TEST_CASE("adjusted_rand_index: random assignments score near zero (monte carlo)") {
    std::vector<int> truth(60);
    for (int i = 0; i < 60; ++i) truth[static_cast<std::size_t>(i)] = i / 20;
    Rng rng(34);
    for (int draw = 0; draw < 100; ++draw) {
        std::vector<int> random_assignment(60);
        for (int& v : random_assignment) v = static_cast<int>(rng.uniform_int(3));
        CHECK(std::abs(adjusted_rand_index(random_assignment, truth)) < 0.15);
    }
}

TEST_CASE("clustering_agreement: reads one round of a trace") {
    ClusterTrace trace;
    trace.ground_truth = {0, 0, 1, 1};
    trace.per_round = {{1, 1, 1, 1}, {1, 1, 2, 2}, {0, 2, 1, 1}};
    CHECK(clustering_agreement(trace, 1) == doctest::Approx(1.0));
    // Round 2: client 0 did not participate; remaining {2,1,1} vs {0,1,1}.
    CHECK(clustering_agreement(trace, 2) == doctest::Approx(1.0));
    CHECK_THROWS_AS(clustering_agreement(trace, 3), ValidationError);
}

TEST_CASE("trial_statistics: modes, fixtures, and edge cases") {
    SUBCASE("identical trials have zero SD") {
        const TrialStats stats = trial_statistics({3.5, 3.5, 3.5});
        CHECK(stats.mean == doctest::Approx(3.5));
        CHECK(stats.sd == doctest::Approx(0.0));
    }
    SUBCASE("two trials: sample SD is |a-b|/sqrt(2)") {
        const TrialStats stats = trial_statistics({2.0, 5.0});
        CHECK(stats.mean == doctest::Approx(3.5));
        CHECK(stats.sd == doctest::Approx(3.0 / std::sqrt(2.0)));
    }
    SUBCASE("published five-trial fixture reproduces its mean and SD") {
        const std::vector<double> trials{76.13, 76.47, 77.43, 76.40, 77.00};
        const TrialStats stats = trial_statistics(trials, SdMode::population);
        CHECK(std::abs(stats.mean - 76.69) < 0.005);
        CHECK(std::abs(stats.sd - 0.47) < 0.005);
    }
    SUBCASE("fewer than two trials is an error") {
        CHECK_THROWS_AS(trial_statistics({1.0}), ValidationError);
    }
}

namespace {

std::vector<ClientDataset> tiny_clients(int count, int classes, std::uint64_t seed) {
    SyntheticConfig synth;
    synth.classes = classes;
    synth.dim = 6;
    synth.per_class_train = 200;
    synth.per_class_test = 60;
    synth.unlabeled_count = 10;
    synth.class_separation = 4.0;
    synth.seed = seed;
    const SyntheticData data = generate_synthetic(synth);
    PartitionSpec spec;
    spec.num_clients = count;
    spec.num_groups = 1;
    spec.classes_per_client = classes;
    spec.majors_per_client = 1;
    spec.major_count = 12;
    spec.minor_count = 6;
    spec.test_per_class = 8;
    return partition_clients(data.train_pool, data.test_pool, spec);
}

}  // namespace

TEST_CASE("evaluate_pool: mean accuracy equals the mean of per-client accuracies") {
    const auto clients = tiny_clients(4, 3, 41);
    ArchConfig arch;
    arch.input_dim = 6;
    arch.encoder_widths = {10};
    arch.rep_dim = 5;
    arch.class_count = 3;
    std::vector<ModelParams> pool{build_model(arch, 1), build_model(arch, 2)};
    const EvaluationReport report = evaluate_pool(pool, clients);
    double mean = 0.0;
    for (double acc : report.per_client_accuracy) mean += acc;
    mean /= static_cast<double>(report.per_client_accuracy.size());
    CHECK(std::abs(report.mean_accuracy - mean) < 1e-12);
    CHECK(report.per_client_accuracy.size() == clients.size());
}

namespace {

std::vector<ClientDataset> separable_clients(int count, int classes, std::uint64_t seed) {
    SyntheticConfig synth;
    synth.classes = classes;
    synth.dim = 6;
    synth.per_class_train = 200;
    synth.per_class_test = 60;
    synth.unlabeled_count = 10;
    synth.class_separation = 10.0;
    synth.seed = seed;
    const SyntheticData data = generate_synthetic(synth);
    PartitionSpec spec;
    spec.num_clients = count;
    spec.num_groups = 1;
    spec.classes_per_client = classes;
    spec.majors_per_client = 1;
    spec.major_count = 12;
    spec.minor_count = 6;
    spec.test_per_class = 8;
    return partition_clients(data.train_pool, data.test_pool, spec);
}

}  // namespace

TEST_CASE("evaluate_pool: a perfectly matched pool scores accuracy and f1 of 1") {
    // Train one model to saturation on 10-sigma-separated data so every test
    // prediction is correct.
    const auto clients = separable_clients(3, 3, 42);
    ArchConfig arch;
    arch.input_dim = 6;
    arch.encoder_widths = {16};
    arch.rep_dim = 8;
    arch.class_count = 3;
    ModelParams model = build_model(arch, 3);
    // Pool all client train data.
    std::size_t total = 0;
    for (const auto& c : clients) total += c.train.size();
    Tensor features({total, 6});
    std::vector<int> labels;
    std::size_t row = 0;
    for (const auto& c : clients) {
        std::memcpy(features.row(row), c.train.features.data(),
                    c.train.features.size() * sizeof(double));
        row += c.train.size();
        labels.insert(labels.end(), c.train.labels.begin(), c.train.labels.end());
    }
    Rng rng(4);
    train_cross_entropy(model, features, labels, 150, 150, AdamConfig{0.01, 0.9, 0.999, 1e-8}, 32,
                        rng);
    const EvaluationReport report = evaluate_pool({model}, clients);
    CHECK(report.mean_accuracy == doctest::Approx(1.0));
    CHECK(report.f1_macro == doctest::Approx(1.0));
}
