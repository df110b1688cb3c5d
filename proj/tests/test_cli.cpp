#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cpcfl/checkpoint.hpp"
#include "cpcfl/cli.hpp"
#include "cpcfl/datagen.hpp"
#include "support/oracles.hpp"

using namespace cpcfl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "cpcfl_cli_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    out << j.dump(2) << "\n";
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

json tiny_arch() {
    return json{{"input_dim", 8}, {"encoder_widths", {12}}, {"rep_dim", 6},
                {"class_count", 6}, {"projector_dim", 6}, {"predictor_bottleneck", 2}};
}

json tiny_generate_config() {
    return json{
        {"synthetic",
         {{"classes", 6}, {"dim", 8}, {"per_class_train", 300}, {"per_class_test", 60},
          {"unlabeled_count", 200}, {"class_separation", 3.0}, {"proxy_per_class", 30},
          {"seed", 5}}},
        {"partition",
         {{"num_clients", 6}, {"num_groups", 3}, {"classes_per_client", 3},
          {"majors_per_client", 1}, {"major_count", 12}, {"minor_count", 6},
          {"test_per_class", 8}, {"seed", 5}}}};
}

int run(const std::vector<std::string>& args) { return cli::run_cli(args); }

}  // namespace

TEST_CASE("cli: missing config file is a usage error (exit 2)") {
    CHECK(run({"generate", "--config", "/nonexistent/nope.json"}) == cli::kExitUsage);
    CHECK(run({"federate", "--config", "/nonexistent/nope.json"}) == cli::kExitUsage);
    CHECK(run({"bogus-subcommand"}) == cli::kExitUsage);
    CHECK(run({"generate"}) == cli::kExitUsage);  // --config required
}

TEST_CASE("cli: unknown config keys are rejected") {
    const fs::path dir = fresh_dir("badkey");
    json cfg = tiny_generate_config();
    cfg["synthetic"]["typo_key"] = 1;
    write_json(dir / "gen.json", cfg);
    CHECK(run({"generate", "--config", (dir / "gen.json").string(), "--out",
               (dir / "data").string(), "--quiet"}) == cli::kExitUsage);
}

TEST_CASE("cli generate: writes client files, manifest, and is byte-identical on rerun") {
    const fs::path dir = fresh_dir("generate");
    write_json(dir / "gen.json", tiny_generate_config());
    const std::string data_a = (dir / "data_a").string();
    const std::string data_b = (dir / "data_b").string();
    REQUIRE(run({"generate", "--config", (dir / "gen.json").string(), "--out", data_a,
                 "--quiet"}) == cli::kExitOk);
    REQUIRE(run({"generate", "--config", (dir / "gen.json").string(), "--out", data_b,
                 "--quiet"}) == cli::kExitOk);

    int client_files = 0;
    for (const auto& entry : fs::directory_iterator(fs::path(data_a) / "clients")) {
        ++client_files;
        const auto rel = entry.path().filename();
        CHECK(slurp(entry.path()) == slurp(fs::path(data_b) / "clients" / rel));
    }
    CHECK(client_files == 6);
    CHECK(fs::exists(fs::path(data_a) / "unlabeled.bin"));
    CHECK(fs::exists(fs::path(data_a) / "proxy_train.bin"));
    CHECK(slurp(fs::path(data_a) / "partition.txt") == slurp(fs::path(data_b) / "partition.txt"));
    CHECK(slurp(fs::path(data_a) / "unlabeled.bin") == slurp(fs::path(data_b) / "unlabeled.bin"));
}

TEST_CASE("cli pretrain: sweep rows, loss csv length, and E_p=0 equals seeded init") {
    const fs::path dir = fresh_dir("pretrain");
    write_json(dir / "gen.json", tiny_generate_config());
    const std::string data_dir = (dir / "data").string();
    REQUIRE(run({"generate", "--config", (dir / "gen.json").string(), "--out", data_dir,
                 "--quiet"}) == cli::kExitOk);

    json pre{{"arch", tiny_arch()},
             {"data", data_dir + "/unlabeled.bin"},
             {"proxy_train", data_dir + "/proxy_train.bin"},
             {"proxy_test", data_dir + "/proxy_test.bin"},
             {"method", "simclr"},
             {"epochs", 3},
             {"batch_size", 32},
             {"temperature", 0.1},
             {"seed", 9},
             {"linear_eval", {{"epochs", 5}, {"lr", 0.01}}},
             {"variants", json::array({json{{"temperature", 0.1}}, json{{"temperature", 0.5}}})}};
    write_json(dir / "pre.json", pre);
    const std::string out = (dir / "out").string();
    REQUIRE(run({"pretrain", "--config", (dir / "pre.json").string(), "--out", out, "--quiet"}) ==
            cli::kExitOk);

    // Sweep has 2 rows, exactly one selected.
    std::ifstream sweep(fs::path(out) / "sweep.csv");
    std::string line;
    std::getline(sweep, line);  // header
    int rows = 0, selected = 0;
    while (std::getline(sweep, line)) {
        if (line.empty()) continue;
        ++rows;
        std::stringstream ss(line);
        std::string field;
        std::getline(ss, field, ',');  // variant
        std::getline(ss, field, ',');  // method
        std::getline(ss, field, ',');  // linear_eval
        std::getline(ss, field, ',');  // selected
        if (field == "1") ++selected;
    }
    CHECK(rows == 2);
    CHECK(selected == 1);

    // Loss CSV rows == epochs.
    std::ifstream loss(fs::path(out) / "loss.csv");
    int loss_rows = -1;  // skip header
    while (std::getline(loss, line)) {
        if (!line.empty()) ++loss_rows;
    }
    CHECK(loss_rows == 3);

    // epochs = 0: checkpoint equals the seeded initialization.
    json zero = pre;
    zero["epochs"] = 0;
    zero.erase("variants");
    write_json(dir / "pre0.json", zero);
    const std::string out0 = (dir / "out0").string();
    REQUIRE(run({"pretrain", "--config", (dir / "pre0.json").string(), "--out", out0,
                 "--quiet"}) == cli::kExitOk);
    const auto [encoder, arch] = load_encoder_checkpoint(out0 + "/encoder.ckpt");
    ArchConfig expected_arch;
    expected_arch.input_dim = 8;
    expected_arch.encoder_widths = {12};
    expected_arch.rep_dim = 6;
    expected_arch.class_count = 6;
    expected_arch.projector_dim = 6;
    expected_arch.predictor_bottleneck = 2;
    CHECK(arch == expected_arch);
    const ModelParams seeded = build_model(expected_arch, 9);
    CHECK(oracles::bitwise_equal(encoder, seeded.encoder));
}

TEST_CASE("cli federate: comm cost lines, round counts, reruns byte-identical") {
    const fs::path dir = fresh_dir("federate");
    write_json(dir / "gen.json", tiny_generate_config());
    const std::string data_dir = (dir / "data").string();
    REQUIRE(run({"generate", "--config", (dir / "gen.json").string(), "--out", data_dir,
                 "--quiet"}) == cli::kExitOk);

    json fed{{"arch", tiny_arch()},
             {"data_dir", data_dir},
             {"algorithm", "cpcfl"},
             {"clusters", 3},
             {"rounds", 4},
             {"explore_rounds", 1},
             {"local_epochs", 1},
             {"encoder_local_epochs", 1},
             {"batch_size", 16},
             {"eval_every", 2},
             {"seed", 3}};
    write_json(dir / "fed.json", fed);
    const std::string run_a = (dir / "run_a").string();
    const std::string run_b = (dir / "run_b").string();
    REQUIRE(run({"federate", "--config", (dir / "fed.json").string(), "--out", run_a,
                 "--quiet"}) == cli::kExitOk);
    REQUIRE(run({"federate", "--config", (dir / "fed.json").string(), "--out", run_b,
                 "--quiet"}) == cli::kExitOk);

    for (const char* file : {"history.jsonl", "summary.json", "metrics.csv",
                             "cluster_trace.csv", "config.json"}) {
        CHECK(slurp(fs::path(run_a) / file) == slurp(fs::path(run_b) / file));
    }

    const json summary = json::parse(slurp(fs::path(run_a) / "summary.json"));
    CHECK(summary.at("rounds_completed").get<int>() == 4);
    // (N+1)ST = 4 * 1 * 4 = 16
    CHECK(summary.at("comm_cost_closed_form").get<double>() == doctest::Approx(16.0));
    CHECK(summary.at("final").at("mean_accuracy").is_number());
    CHECK_FALSE(summary.at("final_ari").is_null());

    // History has exactly T records.
    int history_lines = 0;
    std::stringstream history(slurp(fs::path(run_a) / "history.jsonl"));
    std::string line;
    while (std::getline(history, line)) {
        if (!line.empty()) ++history_lines;
    }
    CHECK(history_lines == 4);

    // FedAvg run reports 2ST.
    json fedavg = fed;
    fedavg["algorithm"] = "fedavg";
    fedavg["clusters"] = 1;
    fedavg["explore_rounds"] = 0;
    write_json(dir / "fedavg.json", fedavg);
    const std::string run_c = (dir / "run_c").string();
    REQUIRE(run({"federate", "--config", (dir / "fedavg.json").string(), "--out", run_c,
                 "--quiet"}) == cli::kExitOk);
    const json fedavg_summary = json::parse(slurp(fs::path(run_c) / "summary.json"));
    CHECK(fedavg_summary.at("comm_cost_closed_form").get<double>() == doctest::Approx(8.0));

    // report regenerates metrics.csv from the history.
    const std::string metrics_before = slurp(fs::path(run_a) / "metrics.csv");
    fs::remove(fs::path(run_a) / "metrics.csv");
    REQUIRE(run({"report", "--run", run_a, "--quiet"}) == cli::kExitOk);
    CHECK(slurp(fs::path(run_a) / "metrics.csv") == metrics_before);
}

TEST_CASE("cli federate: encoder checkpoint arch mismatch is a config error") {
    const fs::path dir = fresh_dir("federate_mismatch");
    write_json(dir / "gen.json", tiny_generate_config());
    const std::string data_dir = (dir / "data").string();
    REQUIRE(run({"generate", "--config", (dir / "gen.json").string(), "--out", data_dir,
                 "--quiet"}) == cli::kExitOk);

    // Checkpoint with a different rep_dim.
    ArchConfig other;
    other.input_dim = 8;
    other.encoder_widths = {12};
    other.rep_dim = 4;
    other.class_count = 6;
    Rng rng(1);
    save_encoder_checkpoint((dir / "enc.ckpt").string(), build_encoder(other, rng), other);

    json fed{{"arch", tiny_arch()},      {"data_dir", data_dir},
             {"algorithm", "cpcfl"},     {"clusters", 2},
             {"rounds", 2},              {"explore_rounds", 0},
             {"local_epochs", 1},        {"encoder_local_epochs", 1},
             {"pretrained_encoder", (dir / "enc.ckpt").string()},
             {"seed", 3}};
    write_json(dir / "fed.json", fed);
    CHECK(run({"federate", "--config", (dir / "fed.json").string(), "--out",
               (dir / "run").string(), "--quiet"}) == cli::kExitUsage);
}

TEST_CASE("cli experiment: trial table, SD n/a for one trial, deterministic reruns") {
    const fs::path dir = fresh_dir("experiment");
    json manifest{
        {"name", "smoke"},
        {"trials", 2},
        {"base_seed", 50},
        {"parallel", true},
        {"synthetic",
         {{"classes", 6}, {"dim", 8}, {"per_class_train", 300}, {"per_class_test", 60},
          {"unlabeled_count", 150}, {"class_separation", 3.0}, {"proxy_per_class", 20},
          {"seed", 5}}},
        {"partition",
         {{"num_clients", 6}, {"num_groups", 3}, {"classes_per_client", 3},
          {"majors_per_client", 1}, {"major_count", 12}, {"minor_count", 6},
          {"test_per_class", 8}}},
        {"arch", tiny_arch()},
        {"pretrain", {{"epochs", 2}, {"batch_size", 32}, {"temperature", 0.1}}},
        {"federation",
         {{"clusters", 3}, {"rounds", 3}, {"explore_rounds", 1}, {"local_epochs", 1},
          {"encoder_local_epochs", 1}, {"batch_size", 16}, {"eval_every", 0}}},
        {"methods",
         json::array({json{{"name", "fedavg_none"}, {"algorithm", "fedavg"}, {"pretrain", "none"}},
                      json{{"name", "cpcfl_simclr"}, {"algorithm", "cpcfl"},
                           {"pretrain", "simclr"}}})}};
    write_json(dir / "exp.json", manifest);

    const std::string out_a = (dir / "exp_a").string();
    const std::string out_b = (dir / "exp_b").string();
    REQUIRE(run({"experiment", "--config", (dir / "exp.json").string(), "--out", out_a,
                 "--quiet"}) == cli::kExitOk);
    REQUIRE(run({"experiment", "--config", (dir / "exp.json").string(), "--out", out_b,
                 "--quiet"}) == cli::kExitOk);

    // Determinism, including under parallel trial execution.
    CHECK(slurp(fs::path(out_a) / "results.csv") == slurp(fs::path(out_b) / "results.csv"));
    CHECK(slurp(fs::path(out_a) / "table.txt") == slurp(fs::path(out_b) / "table.txt"));
    CHECK(slurp(fs::path(out_a) / "summary.json") == slurp(fs::path(out_b) / "summary.json"));
    for (int trial = 0; trial < 2; ++trial) {
        for (const std::string method : {"fedavg_none", "cpcfl_simclr"}) {
            const fs::path rel =
                fs::path("trial_" + std::to_string(trial)) / "runs" / method / "history.jsonl";
            CHECK(slurp(fs::path(out_a) / rel) == slurp(fs::path(out_b) / rel));
        }
    }

    const json summary = json::parse(slurp(fs::path(out_a) / "summary.json"));
    CHECK(summary.at("cpcfl_simclr").at("trials").size() == 2);
    CHECK(summary.at("cpcfl_simclr").at("sd").is_number());

    // One trial: SD reported as n/a.
    const std::string out_c = (dir / "exp_c").string();
    REQUIRE(run({"experiment", "--config", (dir / "exp.json").string(), "--out", out_c,
                 "--trials", "1", "--quiet"}) == cli::kExitOk);
    const std::string table = slurp(fs::path(out_c) / "table.txt");
    CHECK(table.find("n/a") != std::string::npos);
    const json summary_c = json::parse(slurp(fs::path(out_c) / "summary.json"));
    CHECK(summary_c.at("cpcfl_simclr").at("sd").is_null());
}

TEST_CASE("cli experiment: full method matrix produces one table row per method") {
    const fs::path dir = fresh_dir("matrix");
    json manifest{
        {"name", "matrix"},
        {"trials", 1},
        {"base_seed", 60},
        {"synthetic",
         {{"classes", 6}, {"dim", 8}, {"per_class_train", 300}, {"per_class_test", 60},
          {"unlabeled_count", 120}, {"class_separation", 3.0}, {"proxy_per_class", 20},
          {"seed", 5}}},
        {"partition",
         {{"num_clients", 6}, {"num_groups", 3}, {"classes_per_client", 3},
          {"majors_per_client", 1}, {"major_count", 12}, {"minor_count", 6},
          {"test_per_class", 8}}},
        {"arch", tiny_arch()},
        {"pretrain", {{"epochs", 2}, {"batch_size", 32}, {"temperature", 0.1}}},
        {"federation",
         {{"clusters", 2}, {"rounds", 2}, {"explore_rounds", 1}, {"local_epochs", 1},
          {"encoder_local_epochs", 1}, {"batch_size", 16}, {"eval_every", 0}}},
        {"methods",
         json::array(
             {json{{"name", "fedavg_none"}, {"algorithm", "fedavg"}, {"pretrain", "none"}},
              json{{"name", "fedavg_simclr"}, {"algorithm", "fedavg"}, {"pretrain", "simclr"}},
              json{{"name", "ifca_none"}, {"algorithm", "ifca"}, {"pretrain", "none"}},
              json{{"name", "ifca_fedavg"}, {"algorithm", "ifca"}, {"pretrain", "fedavg"}},
              json{{"name", "cpcfl_simclr"}, {"algorithm", "cpcfl"}, {"pretrain", "simclr"}}})}};
    write_json(dir / "exp.json", manifest);
    const std::string out = (dir / "out").string();
    REQUIRE(run({"experiment", "--config", (dir / "exp.json").string(), "--out", out,
                 "--quiet"}) == cli::kExitOk);
    const std::string table = slurp(fs::path(out) / "table.txt");
    for (const char* row : {"fedavg_none", "fedavg_simclr", "ifca_none", "ifca_fedavg",
                            "cpcfl_simclr"}) {
        CHECK(table.find(row) != std::string::npos);
    }
    // The chained encoder is persisted per trial for audit.
    CHECK(fs::exists(fs::path(out) / "trial_0" / "encoders" / "fedavg.ckpt"));
    CHECK(fs::exists(fs::path(out) / "trial_0" / "encoders" / "simclr.ckpt"));
}

TEST_CASE("cli generate: idx ingestion mode partitions real files") {
    const fs::path dir = fresh_dir("idx_mode");
    // 3x3-pixel IDX fixtures with 90 images over 3 classes.
    const int n = 90;
    {
        std::ofstream images(dir / "images.idx", std::ios::binary);
        const unsigned char header[] = {0, 0, 8, 3, 0, 0, 0, n, 0, 0, 0, 3, 0, 0, 0, 3};
        images.write(reinterpret_cast<const char*>(header), sizeof(header));
        for (int i = 0; i < n; ++i) {
            for (int p = 0; p < 9; ++p) {
                images.put(static_cast<char>((i * 7 + p * 11) % 256));
            }
        }
        std::ofstream labels(dir / "labels.idx", std::ios::binary);
        const unsigned char lheader[] = {0, 0, 8, 1, 0, 0, 0, n};
        labels.write(reinterpret_cast<const char*>(lheader), sizeof(lheader));
        for (int i = 0; i < n; ++i) labels.put(static_cast<char>(i % 3));
    }
    json cfg{{"idx",
              {{"train_images", (dir / "images.idx").string()},
               {"train_labels", (dir / "labels.idx").string()},
               {"test_images", (dir / "images.idx").string()},
               {"test_labels", (dir / "labels.idx").string()},
               {"proxy_per_class", 5}}},
             {"partition",
              {{"num_clients", 2}, {"num_groups", 1}, {"classes_per_client", 2},
               {"majors_per_client", 1}, {"major_count", 6}, {"minor_count", 3},
               {"test_per_class", 4}, {"seed", 3}}}};
    write_json(dir / "gen.json", cfg);
    const std::string out = (dir / "data").string();
    REQUIRE(run({"generate", "--config", (dir / "gen.json").string(), "--out", out, "--quiet"}) ==
            cli::kExitOk);
    const ClientDataset client = load_client(out + "/clients/client_000.bin");
    CHECK(client.train.size() == 9);
    CHECK(client.train.feature_dim() == 9);
    const LabeledDataset proxy = load_labeled(out + "/proxy_train.bin");
    CHECK(proxy.size() == 15);  // 5 per class x 3 classes
}

TEST_CASE("cli: commands do not mutate their input files") {
    const fs::path dir = fresh_dir("immutability");
    write_json(dir / "gen.json", tiny_generate_config());
    const std::string config_before = slurp(dir / "gen.json");
    const std::string data_dir = (dir / "data").string();
    REQUIRE(run({"generate", "--config", (dir / "gen.json").string(), "--out", data_dir,
                 "--quiet"}) == cli::kExitOk);
    CHECK(slurp(dir / "gen.json") == config_before);

    const std::string unlabeled_before = slurp(fs::path(data_dir) / "unlabeled.bin");
    json fed{{"arch", tiny_arch()}, {"data_dir", data_dir}, {"algorithm", "fedavg"},
             {"clusters", 1},       {"rounds", 2},          {"explore_rounds", 0},
             {"local_epochs", 1},   {"encoder_local_epochs", 1}, {"seed", 4}};
    write_json(dir / "fed.json", fed);
    REQUIRE(run({"federate", "--config", (dir / "fed.json").string(), "--out",
                 (dir / "run").string(), "--quiet"}) == cli::kExitOk);
    CHECK(slurp(fs::path(data_dir) / "unlabeled.bin") == unlabeled_before);
}

TEST_CASE("checkpoints round-trip bitwise") {
    const fs::path dir = fresh_dir("checkpoint");
    ArchConfig arch;
    arch.input_dim = 7;
    arch.encoder_widths = {9};
    arch.rep_dim = 5;
    arch.class_count = 4;
    ModelParams model = build_model(arch, 123);
    attach_contrastive_heads(model, PretrainMethod::byol, 124);

    const std::string model_path = (dir / "model.ckpt").string();
    save_model_checkpoint(model_path, model);
    const ModelParams loaded = load_model_checkpoint(model_path);
    CHECK(oracles::bitwise_equal(loaded, model));
    CHECK(loaded.arch == model.arch);
    REQUIRE(loaded.momentum_encoder.has_value());
    CHECK(oracles::bitwise_equal(*loaded.momentum_encoder, *model.momentum_encoder));

    const std::string enc_path = (dir / "enc.ckpt").string();
    save_encoder_checkpoint(enc_path, model.encoder, arch);
    const auto [encoder, loaded_arch] = load_encoder_checkpoint(enc_path);
    CHECK(oracles::bitwise_equal(encoder, model.encoder));
    CHECK(loaded_arch == arch);

    // Saving twice produces identical bytes.
    const std::string enc_path2 = (dir / "enc2.ckpt").string();
    save_encoder_checkpoint(enc_path2, model.encoder, arch);
    CHECK(slurp(enc_path) == slurp(enc_path2));

    // Wrong kind is a format error.
    CHECK_THROWS_AS(load_model_checkpoint(enc_path), FormatError);
}
