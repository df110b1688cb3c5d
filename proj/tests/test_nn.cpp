#include <doctest.h>

#include <cmath>

#include "cpcfl/nn.hpp"
#include "support/oracles.hpp"

using namespace cpcfl;

namespace {

Tensor random_batch(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
    return oracles::random_tensor({rows, cols}, rng, scale);
}

std::vector<std::vector<double>> to_rows(const Tensor& t) {
    std::vector<std::vector<double>> rows(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t c = 0; c < t.cols(); ++c) rows[r][c] = t(r, c);
    }
    return rows;
}

}  // namespace

TEST_CASE("dense: zero weights map any input to zero") {
    Rng rng(1);
    Network net = make_network({{LayerKind::dense, 4, 3}}, rng);
    net.layers[0].weight.fill(0.0);
    net.layers[0].bias.fill(0.0);
    const Tensor out = net_forward(net, random_batch(5, 4, rng), RunMode::eval);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("dense: identity-initialized 2x2 layer passes input through") {
    Rng rng(1);
    Network net = make_network({{LayerKind::dense, 2, 2}}, rng);
    net.layers[0].weight.fill(0.0);
    net.layers[0].weight(0, 0) = 1.0;
    net.layers[0].weight(1, 1) = 1.0;
    net.layers[0].bias.fill(0.0);
    const Tensor out = net_forward(net, Tensor::row_vector({1.0, 2.0}), RunMode::eval);
    CHECK(out[0] == doctest::Approx(1.0));
    CHECK(out[1] == doctest::Approx(2.0));
}

TEST_CASE("forward: random 3-layer MLP matches the straight-line oracle") {
    Rng rng(42);
    Network net = make_network(
        {{LayerKind::dense, 6, 8}, {LayerKind::relu}, {LayerKind::dense, 8, 5},
         {LayerKind::relu}, {LayerKind::dense, 5, 4}, {LayerKind::softmax}},
        rng);
    const Tensor batch = random_batch(7, 6, rng);
    const Tensor out = net_forward(net, batch, RunMode::eval);
    const auto expected = oracles::naive_forward(net, to_rows(batch), false);
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) {
            CHECK(std::abs(out(r, c) - expected[r][c]) < 1e-12);
        }
    }
}

TEST_CASE("forward: train-mode batchnorm matches the straight-line oracle") {
    Rng rng(43);
    Network net = make_network(
        {{LayerKind::dense, 5, 6}, {LayerKind::batchnorm, 6, 6}, {LayerKind::relu}}, rng);
    for (std::size_t i = 0; i < net.layers[1].gamma.size(); ++i) {
        net.layers[1].gamma[i] = 0.5 + 0.1 * static_cast<double>(i);
        net.layers[1].beta[i] = -0.2 * static_cast<double>(i);
    }
    const Tensor batch = random_batch(9, 5, rng);
    const Tensor out = net_forward(net, batch, RunMode::train);
    const auto expected = oracles::naive_forward(net, to_rows(batch), true);
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) {
            CHECK(std::abs(out(r, c) - expected[r][c]) < 1e-12);
        }
    }
}

TEST_CASE("forward: shape mismatch names the offending layer") {
    Rng rng(2);
    Network net = make_network({{LayerKind::dense, 4, 3}, {LayerKind::dense, 3, 2}}, rng);
    CHECK_THROWS_WITH_AS(net_forward(net, random_batch(2, 5, rng), RunMode::eval, nullptr, "enc"),
                         doctest::Contains("enc layer 0 (dense)"), DimensionError);
}

TEST_CASE("softmax: rows sum to 1 and are shift invariant") {
    Rng rng(3);
    Network net = make_network({{LayerKind::softmax}}, rng);
    Tensor logits = random_batch(6, 9, rng, 3.0);
    const Tensor probs = net_forward(net, logits, RunMode::eval);
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < probs.cols(); ++c) sum += probs(r, c);
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    Tensor shifted = logits;
    for (std::size_t r = 0; r < shifted.rows(); ++r) {
        for (std::size_t c = 0; c < shifted.cols(); ++c) shifted(r, c) += 17.5;
    }
    const Tensor probs_shifted = net_forward(net, shifted, RunMode::eval);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        CHECK(std::abs(probs[i] - probs_shifted[i]) < 1e-12);
    }
}

TEST_CASE("batchnorm: train output is standardized before affine, eval is affine") {
    Rng rng(4);
    Network net = make_network({{LayerKind::batchnorm, 5, 5}}, rng);
    const Tensor batch = random_batch(64, 5, rng, 2.5);
    const Tensor out = net_forward(net, batch, RunMode::train);  // gamma=1, beta=0
    for (std::size_t j = 0; j < 5; ++j) {
        double mean = 0.0;
        for (std::size_t b = 0; b < out.rows(); ++b) mean += out(b, j);
        mean /= static_cast<double>(out.rows());
        double var = 0.0;
        for (std::size_t b = 0; b < out.rows(); ++b) var += (out(b, j) - mean) * (out(b, j) - mean);
        var /= static_cast<double>(out.rows());
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(var - 1.0) < 1e-4);  // eps = 1e-5 shrinks variance slightly
    }
    // Eval mode with fresh running stats (0, 1) is a near-identity affine map.
    const Tensor eval_out = net_forward(net, batch, RunMode::eval);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        CHECK(eval_out[i] == doctest::Approx(batch[i] / std::sqrt(1.0 + kBatchnormEps)));
    }
}

TEST_CASE("backward: zero upstream gradient gives zero parameter gradients") {
    Rng rng(5);
    Network net = make_network({{LayerKind::dense, 4, 3}, {LayerKind::relu}}, rng);
    NetTrace trace;
    const Tensor out = net_forward(net, random_batch(3, 4, rng), RunMode::train, &trace);
    NetGrads grads = zero_grads(net);
    net_backward(net, trace, Tensor::zeros_like(out), grads);
    CHECK(oracles::all_zero(grads));
}

TEST_CASE("backward: requires a prior train-mode forward") {
    Rng rng(6);
    ModelParams model = build_model({.input_dim = 4, .encoder_widths = {5}, .rep_dim = 3,
                                     .class_count = 2},
                                    1);
    ForwardTrace trace;
    (void)forward(model, Branch::encoder_classifier, random_batch(2, 4, rng), RunMode::eval,
                  &trace);
    CHECK_THROWS_AS(backward(model, trace, Tensor({2, 2})), StateError);
}

TEST_CASE("gradients: single dense layer, scalar output, relative error < 1e-6") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(700 + seed);
        Network net = make_network({{LayerKind::dense, 6, 1}}, rng);
        const Tensor batch = random_batch(1, 6, rng);
        auto loss_value = [&] { return net_forward(net, batch, RunMode::train)[0]; };
        NetTrace trace;
        (void)net_forward(net, batch, RunMode::train, &trace);
        NetGrads grads = zero_grads(net);
        net_backward(net, trace, Tensor({1, 1}, {1.0}), grads);
        std::vector<const Tensor*> analytic;
        for (const Tensor& g : grads.tensors) analytic.push_back(&g);
        const auto report =
            oracles::finite_difference_check(trainable_tensors(net), analytic, loss_value);
        CHECK(report.max_rel_err < 1e-6);
    }
}

TEST_CASE("gradients: dense/relu/batchnorm/softmax + cross-entropy match finite differences") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(900 + seed);
        Network net = make_network(
            {{LayerKind::dense, 4, 6}, {LayerKind::batchnorm, 6, 6}, {LayerKind::relu},
             {LayerKind::dense, 6, 3}, {LayerKind::softmax}},
            rng);
        const Tensor batch = random_batch(5, 4, rng);
        const Tensor onehot = one_hot({0, 2, 1, 0, 2}, 3);

        NetTrace trace;
        const Tensor probs = net_forward(net, batch, RunMode::train, &trace);
        NetGrads grads = zero_grads(net);
        net_backward(net, trace, cross_entropy_grad(probs, onehot), grads);

        std::vector<const Tensor*> analytic;
        for (const Tensor& g : grads.tensors) analytic.push_back(&g);
        const auto report = oracles::finite_difference_check(
            trainable_tensors(net), analytic,
            [&] { return cross_entropy(net_forward(net, batch, RunMode::train), onehot); });
        CHECK(report.max_rel_err < 1e-5);
        CHECK(report.checked > 0);
    }
}

TEST_CASE("cross_entropy: spec examples") {
    // perfect prediction
    const Tensor perfect({2, 3}, {1.0, 0.0, 0.0, 0.0, 1.0, 0.0});
    CHECK(cross_entropy(perfect, perfect) == doctest::Approx(0.0).epsilon(1e-9));
    // uniform over 10 classes -> ln 10
    Tensor uniform({1, 10});
    uniform.fill(0.1);
    CHECK(cross_entropy(uniform, one_hot({3}, 10)) == doctest::Approx(std::log(10.0)));
    // [0.7, 0.2, 0.1] with label 0 -> -ln 0.7
    const Tensor probs({1, 3}, {0.7, 0.2, 0.1});
    CHECK(cross_entropy(probs, one_hot({0}, 3)) == doctest::Approx(-std::log(0.7)));
}

TEST_CASE("cross_entropy: row-sum violation raises a validation error") {
    const Tensor bad({1, 3}, {0.5, 0.2, 0.1});
    CHECK_THROWS_AS(cross_entropy(bad, one_hot({0}, 3)), ValidationError);
    const Tensor ok({1, 3}, {0.5, 0.4, 0.1});
    Tensor two_hot({1, 3});
    two_hot[0] = 1.0;
    two_hot[1] = 1.0;
    CHECK_THROWS_AS(cross_entropy(ok, two_hot), ValidationError);
}

TEST_CASE("cosine_similarity: spec examples and degenerate input") {
    const std::vector<double> v{0.3, -1.2, 2.0};
    CHECK(cosine_similarity(v, v) == doctest::Approx(1.0));
    CHECK(cosine_similarity(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0}) ==
          doctest::Approx(0.0));
    CHECK(cosine_similarity(std::vector<double>{1.0, 0.0}, std::vector<double>{1.0, 1.0}) ==
          doctest::Approx(1.0 / std::sqrt(2.0)));
    bool degenerate = false;
    CHECK(cosine_similarity(std::vector<double>{0.0, 0.0}, std::vector<double>{1.0, 1.0},
                            &degenerate) == 0.0);
    CHECK(degenerate);
    CHECK_THROWS_AS(cosine_similarity(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}),
                    DimensionError);
}

TEST_CASE("adam: zero gradient from a fresh state leaves parameters unchanged") {
    Rng rng(8);
    Tensor param = oracles::random_tensor({4, 4}, rng);
    const Tensor saved = param;
    const Tensor zero = Tensor::zeros_like(param);
    AdamOptimizer opt({&param}, {});
    opt.step({&zero});
    CHECK(oracles::bitwise_equal(param, saved));
}

TEST_CASE("adam: first step matches the hand-evaluated update") {
    Tensor param({3}, {1.0, -2.0, 0.5});
    const Tensor grad({3}, {0.3, -0.7, 2.0});
    const AdamConfig cfg;
    AdamOptimizer opt({&param}, cfg);
    opt.step({&grad});
    // After one step from zero state: m_hat = g, v_hat = g^2.
    const double expected[] = {1.0 - cfg.lr * (0.3 / (0.3 + cfg.eps)),
                               -2.0 - cfg.lr * (-0.7 / (0.7 + cfg.eps)),
                               0.5 - cfg.lr * (2.0 / (2.0 + cfg.eps))};
    for (int i = 0; i < 3; ++i) CHECK(param[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("adam: constant gradient follows the closed-form trajectory") {
    const double g = 0.42;
    Tensor param({1}, {3.0});
    const Tensor grad({1}, {g});
    const AdamConfig cfg;
    AdamOptimizer opt({&param}, cfg);
    const int steps = 200;
    for (int t = 0; t < steps; ++t) opt.step({&grad});
    // Every bias-corrected step moves by lr * g / (|g| + eps).
    const double expected = 3.0 - steps * cfg.lr * (g / (g + cfg.eps));
    CHECK(param[0] == doctest::Approx(expected).epsilon(1e-9));
    CHECK(std::abs((3.0 - param[0]) / steps) == doctest::Approx(cfg.lr).epsilon(1e-6));
}

TEST_CASE("build_model: head variants and determinism") {
    ArchConfig arch;
    arch.input_dim = 8;
    arch.encoder_widths = {16, 12};
    arch.rep_dim = 6;
    arch.class_count = 10;

    SUBCASE("theta_c: single dense layer with softmax, 10 outputs") {
        const ModelParams model = build_model(arch, 5);
        REQUIRE(model.classifier.layers.size() == 2);
        CHECK(model.classifier.layers[0].kind == LayerKind::dense);
        CHECK(model.classifier.layers[0].out_dim == 10);
        CHECK(model.classifier.layers[1].kind == LayerKind::softmax);
    }
    SUBCASE("theta_c-3: three hidden ReLU dense layers before the output") {
        arch.head_hidden_layers = 3;
        const ModelParams model = build_model(arch, 5);
        REQUIRE(model.classifier.layers.size() == 8);
        for (int i = 0; i < 3; ++i) {
            CHECK(model.classifier.layers[2 * i].kind == LayerKind::dense);
            CHECK(model.classifier.layers[2 * i + 1].kind == LayerKind::relu);
        }
        CHECK(model.classifier.layers[6].kind == LayerKind::dense);
        CHECK(model.classifier.layers[7].kind == LayerKind::softmax);
    }
    SUBCASE("same seed twice gives bitwise-identical parameters") {
        const ModelParams a = build_model(arch, 77);
        const ModelParams b = build_model(arch, 77);
        CHECK(oracles::bitwise_equal(a, b));
        const ModelParams c = build_model(arch, 78);
        CHECK_FALSE(oracles::bitwise_equal(a, c));
    }
    SUBCASE("nonpositive dims are rejected") {
        arch.rep_dim = 0;
        CHECK_THROWS_AS(build_model(arch, 1), ValidationError);
    }
}

TEST_CASE("forward determinism: same seed and input give identical outputs") {
    ArchConfig arch;
    arch.input_dim = 5;
    arch.encoder_widths = {7};
    arch.rep_dim = 4;
    arch.class_count = 3;
    const ModelParams a = build_model(arch, 9);
    const ModelParams b = build_model(arch, 9);
    Rng rng(10);
    const Tensor batch = random_batch(6, 5, rng);
    const Tensor out_a = forward(a, Branch::encoder_classifier, batch, RunMode::eval);
    const Tensor out_b = forward(b, Branch::encoder_classifier, batch, RunMode::eval);
    CHECK(oracles::bitwise_equal(out_a, out_b));
}

TEST_CASE("train_cross_entropy: step count and freezing") {
    ArchConfig arch;
    arch.input_dim = 6;
    arch.encoder_widths = {8};
    arch.rep_dim = 4;
    arch.class_count = 3;
    ModelParams model = build_model(arch, 11);
    Rng data_rng(12);
    const Tensor features = random_batch(50, 6, data_rng);
    std::vector<int> labels(50);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 3);

    SUBCASE("ceil(50/32) * 3 = 6 optimizer steps") {
        Rng rng(13);
        const CeTrainStats stats =
            train_cross_entropy(model, features, labels, 3, 3, {}, 32, rng);
        CHECK(stats.steps == 6);
    }
    SUBCASE("0 epochs leaves the model bitwise unchanged") {
        const ModelParams saved = model;
        Rng rng(13);
        const CeTrainStats stats =
            train_cross_entropy(model, features, labels, 0, 0, {}, 32, rng);
        CHECK(stats.steps == 0);
        CHECK(oracles::bitwise_equal(model, saved));
    }
    SUBCASE("frozen encoder stays bitwise identical while the head moves") {
        const ModelParams saved = model;
        Rng rng(13);
        train_cross_entropy(model, features, labels, 2, 0, {}, 32, rng);
        CHECK(oracles::bitwise_equal(model.encoder, saved.encoder));
        CHECK_FALSE(oracles::bitwise_equal(model.classifier, saved.classifier));
    }
}
