#include "cpcfl/cli.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cpcfl/checkpoint.hpp"
#include "cpcfl/datagen.hpp"
#include "cpcfl/federation.hpp"
#include "cpcfl/idx.hpp"
#include "cpcfl/metrics.hpp"
#include "cpcfl/pretrain.hpp"

namespace cpcfl::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Small utilities
// ---------------------------------------------------------------------------

std::string fmt_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
}

void check_keys(const json& j, const std::string& where,
                const std::vector<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError(where + ": unknown key \"" + key + "\"");
        }
    }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config key \"" + key + "\": " + e.what());
    }
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << content;
    if (!out) throw IoError("write failed for " + path);
}

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> trials;
    bool quiet = false;
};

// Output directory: --out wins, then the config's "out", then
// $CPCFL_OUT_ROOT/<fallback>, then ./<fallback>.
std::string resolve_out_dir(const CommonOptions& opts, const json& cfg,
                            const std::string& fallback) {
    if (opts.out.has_value()) return *opts.out;
    if (cfg.contains("out")) return cfg.at("out").get<std::string>();
    if (const char* root = std::getenv("CPCFL_OUT_ROOT")) {
        return (fs::path(root) / fallback).string();
    }
    return fallback;
}

// ---------------------------------------------------------------------------
// Config parsing (JSON -> typed configs, with explicit defaults)
// ---------------------------------------------------------------------------

ArchConfig parse_arch(const json& j) {
    check_keys(j, "arch",
               {"input_dim", "encoder_widths", "rep_dim", "head_hidden_layers", "head_hidden_dim",
                "class_count", "projector_dim", "predictor_bottleneck"});
    ArchConfig arch;
    arch.input_dim = get_or<std::size_t>(j, "input_dim", arch.input_dim);
    arch.encoder_widths = get_or<std::vector<std::size_t>>(j, "encoder_widths", arch.encoder_widths);
    arch.rep_dim = get_or<std::size_t>(j, "rep_dim", arch.rep_dim);
    arch.head_hidden_layers = get_or<int>(j, "head_hidden_layers", arch.head_hidden_layers);
    arch.head_hidden_dim = get_or<std::size_t>(j, "head_hidden_dim", arch.head_hidden_dim);
    arch.class_count = get_or<std::size_t>(j, "class_count", arch.class_count);
    arch.projector_dim = get_or<std::size_t>(j, "projector_dim", arch.projector_dim);
    arch.predictor_bottleneck =
        get_or<std::size_t>(j, "predictor_bottleneck", arch.predictor_bottleneck);
    return arch;
}

json arch_to_json(const ArchConfig& a) {
    return json{{"input_dim", a.input_dim},
                {"encoder_widths", a.encoder_widths},
                {"rep_dim", a.rep_dim},
                {"head_hidden_layers", a.head_hidden_layers},
                {"head_hidden_dim", a.head_hidden_dim},
                {"class_count", a.class_count},
                {"projector_dim", a.projector_dim},
                {"predictor_bottleneck", a.predictor_bottleneck}};
}

SyntheticConfig parse_synthetic(const json& j) {
    check_keys(j, "synthetic",
               {"classes", "dim", "per_class_train", "per_class_test", "unlabeled_count",
                "class_separation", "noise_sigma", "unlabeled_blend", "proxy_per_class", "seed"});
    SyntheticConfig cfg;
    cfg.classes = get_or<int>(j, "classes", cfg.classes);
    cfg.dim = get_or<int>(j, "dim", cfg.dim);
    cfg.per_class_train = get_or<int>(j, "per_class_train", cfg.per_class_train);
    cfg.per_class_test = get_or<int>(j, "per_class_test", cfg.per_class_test);
    cfg.unlabeled_count = get_or<int>(j, "unlabeled_count", cfg.unlabeled_count);
    cfg.class_separation = get_or<double>(j, "class_separation", cfg.class_separation);
    cfg.noise_sigma = get_or<double>(j, "noise_sigma", cfg.noise_sigma);
    cfg.unlabeled_blend = get_or<double>(j, "unlabeled_blend", cfg.unlabeled_blend);
    cfg.proxy_per_class = get_or<int>(j, "proxy_per_class", cfg.proxy_per_class);
    cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
    return cfg;
}

json synthetic_to_json(const SyntheticConfig& c) {
    return json{{"classes", c.classes},
                {"dim", c.dim},
                {"per_class_train", c.per_class_train},
                {"per_class_test", c.per_class_test},
                {"unlabeled_count", c.unlabeled_count},
                {"class_separation", c.class_separation},
                {"noise_sigma", c.noise_sigma},
                {"unlabeled_blend", c.unlabeled_blend},
                {"proxy_per_class", c.proxy_per_class},
                {"seed", c.seed}};
}

PartitionSpec parse_partition(const json& j) {
    check_keys(j, "partition",
               {"num_clients", "num_groups", "classes_per_client", "majors_per_client",
                "major_count", "minor_count", "test_per_class", "seed"});
    PartitionSpec spec;
    spec.num_clients = get_or<int>(j, "num_clients", spec.num_clients);
    spec.num_groups = get_or<int>(j, "num_groups", spec.num_groups);
    spec.classes_per_client = get_or<int>(j, "classes_per_client", spec.classes_per_client);
    spec.majors_per_client = get_or<int>(j, "majors_per_client", spec.majors_per_client);
    spec.major_count = get_or<int>(j, "major_count", spec.major_count);
    spec.minor_count = get_or<int>(j, "minor_count", spec.minor_count);
    spec.test_per_class = get_or<int>(j, "test_per_class", spec.test_per_class);
    spec.seed = get_or<std::uint64_t>(j, "seed", spec.seed);
    return spec;
}

json partition_to_json(const PartitionSpec& s) {
    return json{{"num_clients", s.num_clients},
                {"num_groups", s.num_groups},
                {"classes_per_client", s.classes_per_client},
                {"majors_per_client", s.majors_per_client},
                {"major_count", s.major_count},
                {"minor_count", s.minor_count},
                {"test_per_class", s.test_per_class},
                {"seed", s.seed}};
}

AugmentParams parse_augment(const json& j) {
    check_keys(j, "augment", {"noise_sigma", "mask_prob", "scale_min", "scale_max", "flip_prob"});
    AugmentParams params;
    params.noise_sigma = get_or<double>(j, "noise_sigma", params.noise_sigma);
    params.mask_prob = get_or<double>(j, "mask_prob", params.mask_prob);
    params.scale_min = get_or<double>(j, "scale_min", params.scale_min);
    params.scale_max = get_or<double>(j, "scale_max", params.scale_max);
    params.flip_prob = get_or<double>(j, "flip_prob", params.flip_prob);
    return params;
}

json augment_to_json(const AugmentParams& a) {
    return json{{"noise_sigma", a.noise_sigma},
                {"mask_prob", a.mask_prob},
                {"scale_min", a.scale_min},
                {"scale_max", a.scale_max},
                {"flip_prob", a.flip_prob}};
}

// Contrastive config from a pretrain JSON block. The presence rules follow
// the domain invariants: temperature iff simclr, target_update_rate iff
// byol; when the key is absent the per-method default is applied.
PretrainConfig parse_pretrain_block(const json& j, PretrainMethod method) {
    PretrainConfig cfg;
    cfg.method = method;
    cfg.epochs = get_or<std::size_t>(j, "epochs", cfg.epochs);
    cfg.batch_size = get_or<std::size_t>(j, "batch_size", cfg.batch_size);
    cfg.learning_rate = get_or<double>(j, "learning_rate", cfg.learning_rate);
    if (method == PretrainMethod::simclr) {
        cfg.temperature = get_or<double>(j, "temperature", 0.1);
    } else if (j.contains("temperature")) {
        throw ConfigError("pretrain: temperature is simclr-only");
    }
    if (method == PretrainMethod::byol) {
        cfg.target_update_rate = get_or<double>(j, "target_update_rate", 0.9);
    } else if (j.contains("target_update_rate")) {
        throw ConfigError("pretrain: target_update_rate is byol-only");
    }
    if (j.contains("augment")) cfg.augment = parse_augment(j.at("augment"));
    cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
    cfg.validate();
    return cfg;
}

json pretrain_to_json(const PretrainConfig& c) {
    json j{{"method", pretrain_method_name(c.method)},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"learning_rate", c.learning_rate},
           {"augment", augment_to_json(c.augment)},
           {"seed", c.seed}};
    if (c.temperature) j["temperature"] = *c.temperature;
    if (c.target_update_rate) j["target_update_rate"] = *c.target_update_rate;
    return j;
}

FederationConfig parse_federation(const json& j) {
    FederationConfig cfg;
    cfg.algorithm = algorithm_from_name(get_or<std::string>(j, "algorithm", "cpcfl"));
    cfg.clusters = get_or<int>(j, "clusters", cfg.clusters);
    cfg.rounds = get_or<int>(j, "rounds", cfg.rounds);
    cfg.explore_rounds = get_or<int>(j, "explore_rounds", cfg.explore_rounds);
    cfg.local_epochs = get_or<int>(j, "local_epochs", cfg.local_epochs);
    cfg.encoder_local_epochs = get_or<int>(j, "encoder_local_epochs", cfg.local_epochs);
    cfg.local_lr = get_or<double>(j, "local_lr", cfg.local_lr);
    cfg.batch_size = get_or<int>(j, "batch_size", cfg.batch_size);
    cfg.participation_fraction =
        get_or<double>(j, "participation_fraction", cfg.participation_fraction);
    cfg.global_encoder = get_or<bool>(j, "global_encoder", cfg.global_encoder);
    cfg.restart.max_restarts = get_or<int>(j, "ifca_max_restarts", cfg.restart.max_restarts);
    cfg.restart.failure_window = get_or<int>(j, "ifca_failure_window", cfg.restart.failure_window);
    cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
    cfg.eval_every = get_or<int>(j, "eval_every", cfg.eval_every);
    cfg.model_size_units = get_or<double>(j, "model_size_units", cfg.model_size_units);
    return cfg;
}

json federation_to_json(const FederationConfig& c) {
    return json{{"algorithm", algorithm_name(c.algorithm)},
                {"clusters", c.clusters},
                {"rounds", c.rounds},
                {"explore_rounds", c.explore_rounds},
                {"local_epochs", c.local_epochs},
                {"encoder_local_epochs", c.encoder_local_epochs},
                {"local_lr", c.local_lr},
                {"batch_size", c.batch_size},
                {"participation_fraction", c.participation_fraction},
                {"global_encoder", c.global_encoder},
                {"ifca_max_restarts", c.restart.max_restarts},
                {"ifca_failure_window", c.restart.failure_window},
                {"seed", c.seed},
                {"eval_every", c.eval_every},
                {"model_size_units", c.model_size_units}};
}

// ---------------------------------------------------------------------------
// Run output files
// ---------------------------------------------------------------------------

json report_to_json(const EvaluationReport& r) {
    return json{{"mean_accuracy", r.mean_accuracy},
                {"per_client_accuracy", r.per_client_accuracy},
                {"f1_macro", r.f1_macro},
                {"f1_weighted", r.f1_weighted},
                {"auroc_ovr_macro", r.auroc_ovr_macro},
                {"auroc_ovr_weighted", r.auroc_ovr_weighted},
                {"auroc_ovo_macro", r.auroc_ovo_macro},
                {"auroc_ovo_weighted", r.auroc_ovo_weighted},
                {"auroc_warning", r.auroc_warning},
                {"round", r.round}};
}

json record_to_json(const RoundRecord& r, std::optional<double> ari) {
    json j{{"round", r.round},
           {"exploration", r.exploration},
           {"participants", r.participants},
           {"selections", r.selections},
           {"cluster_sizes", r.cluster_sizes},
           {"mean_local_loss", r.mean_local_loss},
           {"comm_units", r.cumulative_comm_units},
           {"restarts", r.restarts_so_far}};
    j["eval"] = r.eval.has_value() ? report_to_json(*r.eval) : json(nullptr);
    j["ari"] = ari.has_value() ? json(*ari) : json(nullptr);
    return j;
}

bool has_ground_truth(const std::vector<ClientDataset>& clients) {
    return std::all_of(clients.begin(), clients.end(),
                       [](const ClientDataset& c) { return c.true_cluster >= 0; });
}

std::optional<double> round_ari(const ClusterTrace& trace, std::size_t round, bool truth) {
    if (!truth) return std::nullopt;
    return clustering_agreement(trace, round);
}

const char* kMetricsHeader =
    "round,mean_accuracy,f1_macro,f1_weighted,auroc_ovr_macro,auroc_ovr_weighted,"
    "auroc_ovo_macro,auroc_ovo_weighted,ari\n";

std::string metrics_csv_row(const RoundRecord& r, std::optional<double> ari) {
    const EvaluationReport& e = *r.eval;
    std::ostringstream row;
    row << r.round << ',' << fmt_double(e.mean_accuracy) << ',' << fmt_double(e.f1_macro) << ','
        << fmt_double(e.f1_weighted) << ',' << fmt_double(e.auroc_ovr_macro) << ','
        << fmt_double(e.auroc_ovr_weighted) << ',' << fmt_double(e.auroc_ovo_macro) << ','
        << fmt_double(e.auroc_ovo_weighted) << ',' << (ari ? fmt_double(*ari) : "") << '\n';
    return row.str();
}

struct RunSummary {
    json j;
    double final_accuracy = 0.0;
    std::optional<double> final_ari;
};

RunSummary write_run_outputs(const std::string& dir, const json& config_snapshot,
                             const FederationConfig& cfg, const FederationResult& result,
                             const std::vector<ClientDataset>& clients) {
    fs::create_directories(dir);
    fs::create_directories(fs::path(dir) / "checkpoints");
    write_text_file((fs::path(dir) / "config.json").string(), config_snapshot.dump(2) + "\n");

    const bool truth = has_ground_truth(clients);
    const ClusterTrace trace = cluster_trace_from_history(result.history, clients);

    std::ostringstream history_lines;
    std::ostringstream metrics_csv;
    metrics_csv << kMetricsHeader;
    std::optional<double> final_ari;
    const EvaluationReport* final_eval = nullptr;
    for (std::size_t i = 0; i < result.history.rounds.size(); ++i) {
        const RoundRecord& record = result.history.rounds[i];
        const std::optional<double> ari = round_ari(trace, i, truth);
        history_lines << record_to_json(record, ari).dump() << '\n';
        if (record.eval.has_value()) {
            metrics_csv << metrics_csv_row(record, ari);
            final_eval = &*record.eval;
            final_ari = ari;
        }
    }
    write_text_file((fs::path(dir) / "history.jsonl").string(), history_lines.str());
    write_text_file((fs::path(dir) / "metrics.csv").string(), metrics_csv.str());

    std::ostringstream trace_csv;
    trace_csv << "round";
    for (std::size_t c = 0; c < clients.size(); ++c) trace_csv << ",client_" << c;
    trace_csv << '\n';
    for (std::size_t t = 0; t < trace.per_round.size(); ++t) {
        trace_csv << result.history.rounds[t].round;
        for (int v : trace.per_round[t]) trace_csv << ',' << v;
        trace_csv << '\n';
    }
    write_text_file((fs::path(dir) / "cluster_trace.csv").string(), trace_csv.str());

    for (std::size_t n = 0; n < result.pool.models.size(); ++n) {
        save_model_checkpoint(
            (fs::path(dir) / "checkpoints" / ("pool_final_model_" + std::to_string(n + 1) + ".ckpt"))
                .string(),
            result.pool.models[n]);
    }

    RunSummary summary;
    summary.j = json{{"algorithm", algorithm_name(cfg.algorithm)},
                     {"clusters", cfg.clusters},
                     {"rounds_budget", cfg.rounds},
                     {"rounds_completed", result.history.rounds.size()},
                     {"comm_cost_closed_form",
                      comm_cost(cfg.rounds, cfg.clusters, cfg.model_size_units, cfg.algorithm)},
                     {"comm_cost_cumulative",
                      result.history.rounds.empty()
                          ? 0.0
                          : result.history.rounds.back().cumulative_comm_units},
                     {"restart_count", result.history.restart_count},
                     {"restart_rounds", result.history.restart_rounds},
                     {"clustering_failure", result.history.clustering_failure},
                     {"seed", cfg.seed}};
    summary.j["final"] = final_eval != nullptr ? report_to_json(*final_eval) : json(nullptr);
    summary.j["final_ari"] = final_ari.has_value() ? json(*final_ari) : json(nullptr);
    if (final_eval != nullptr) summary.final_accuracy = final_eval->mean_accuracy;
    summary.final_ari = final_ari;
    write_text_file((fs::path(dir) / "summary.json").string(), summary.j.dump(2) + "\n");
    return summary;
}

// ---------------------------------------------------------------------------
// Data loading helpers
// ---------------------------------------------------------------------------

std::vector<ClientDataset> load_clients_dir(const std::string& data_dir) {
    const fs::path dir = fs::path(data_dir) / "clients";
    if (!fs::is_directory(dir)) {
        throw ConfigError("data_dir has no clients/ directory: " + data_dir);
    }
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".bin") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ConfigError("no client files under " + dir.string());
    std::vector<ClientDataset> clients;
    clients.reserve(files.size());
    for (const std::string& file : files) clients.push_back(load_client(file));
    return clients;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

// First per_class occurrences of each class, for proxy sets over ingested data.
LabeledDataset subsample_per_class(const LabeledDataset& data, int per_class) {
    std::vector<std::size_t> rows;
    std::vector<int> taken(static_cast<std::size_t>(data.class_count), 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        int& count = taken[static_cast<std::size_t>(data.labels[i])];
        if (count < per_class) {
            ++count;
            rows.push_back(i);
        }
    }
    LabeledDataset out;
    out.class_count = data.class_count;
    out.features = Tensor({rows.size(), data.feature_dim()});
    out.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::memcpy(out.features.row(i), data.features.row(rows[i]),
                    data.feature_dim() * sizeof(double));
        out.labels.push_back(data.labels[rows[i]]);
    }
    return out;
}

int cmd_generate(const CommonOptions& opts) {
    json cfg_json = load_json_file(opts.config_path);
    check_keys(cfg_json, "generate config", {"synthetic", "partition", "idx", "out"});
    PartitionSpec part = parse_partition(cfg_json.value("partition", json::object()));
    if (opts.seed.has_value()) part.seed = *opts.seed;
    const std::string out_dir = resolve_out_dir(opts, cfg_json, "data");

    SyntheticData data;
    json source_snapshot;
    if (cfg_json.contains("idx")) {
        // Real-data ingestion: MNIST-family IDX pairs for the labeled pools;
        // the unlabeled pool is the training features with labels dropped.
        const json& idx = cfg_json.at("idx");
        check_keys(idx, "idx",
                   {"train_images", "train_labels", "test_images", "test_labels",
                    "proxy_per_class"});
        data.train_pool = load_idx(idx.at("train_images").get<std::string>(),
                                   idx.at("train_labels").get<std::string>());
        data.test_pool = load_idx(idx.at("test_images").get<std::string>(),
                                  idx.at("test_labels").get<std::string>());
        data.test_pool.class_count = data.train_pool.class_count =
            std::max(data.train_pool.class_count, data.test_pool.class_count);
        data.unlabeled.samples = data.train_pool.features;
        const int proxy = get_or<int>(idx, "proxy_per_class", 100);
        data.proxy_train = subsample_per_class(data.train_pool, proxy);
        data.proxy_test = subsample_per_class(data.test_pool, proxy);
        source_snapshot = json{{"idx", idx}};
    } else {
        SyntheticConfig synth = parse_synthetic(cfg_json.value("synthetic", json::object()));
        if (opts.seed.has_value()) synth.seed = *opts.seed;
        data = generate_synthetic(synth);
        source_snapshot = json{{"synthetic", synthetic_to_json(synth)}};
    }
    const std::vector<ClientDataset> clients =
        partition_clients(data.train_pool, data.test_pool, part);

    fs::create_directories(fs::path(out_dir) / "clients");
    json snapshot = source_snapshot;
    snapshot["partition"] = partition_to_json(part);
    write_text_file((fs::path(out_dir) / "config.json").string(), snapshot.dump(2) + "\n");
    save_unlabeled((fs::path(out_dir) / "unlabeled.bin").string(), data.unlabeled);
    if (data.proxy_train.size() > 0) {
        save_labeled((fs::path(out_dir) / "proxy_train.bin").string(), data.proxy_train);
        save_labeled((fs::path(out_dir) / "proxy_test.bin").string(), data.proxy_test);
    }
    for (const ClientDataset& client : clients) {
        std::ostringstream name;
        name << "client_" << std::setw(3) << std::setfill('0') << client.client_id << ".bin";
        save_client((fs::path(out_dir) / "clients" / name.str()).string(), client);
    }
    const std::string manifest = partition_manifest(clients);
    write_text_file((fs::path(out_dir) / "partition.txt").string(), manifest);
    if (!opts.quiet) std::cout << manifest;
    return kExitOk;
}

// ---------------------------------------------------------------------------
// pretrain
// ---------------------------------------------------------------------------

struct LinearEvalConfig {
    std::size_t epochs = 40;
    double lr = 0.01;
    std::size_t batch_size = 64;
};

LinearEvalConfig parse_linear_eval(const json& j) {
    check_keys(j, "linear_eval", {"epochs", "lr", "batch_size"});
    LinearEvalConfig cfg;
    cfg.epochs = get_or<std::size_t>(j, "epochs", cfg.epochs);
    cfg.lr = get_or<double>(j, "lr", cfg.lr);
    cfg.batch_size = get_or<std::size_t>(j, "batch_size", cfg.batch_size);
    return cfg;
}

int cmd_pretrain(const CommonOptions& opts) {
    json cfg_json = load_json_file(opts.config_path);
    check_keys(cfg_json, "pretrain config",
               {"arch", "data", "labeled_data", "proxy_train", "proxy_test", "method", "epochs",
                "batch_size", "learning_rate", "temperature", "target_update_rate", "augment",
                "seed", "linear_eval", "variants", "out"});
    if (opts.seed.has_value()) cfg_json["seed"] = *opts.seed;
    const std::string out_dir = resolve_out_dir(opts, cfg_json, "pretrain");
    const ArchConfig arch = parse_arch(cfg_json.value("arch", json::object()));
    const std::string method_name = get_or<std::string>(cfg_json, "method", "simclr");
    const LinearEvalConfig lin =
        parse_linear_eval(cfg_json.value("linear_eval", json::object()));

    if (!cfg_json.contains("proxy_train") || !cfg_json.contains("proxy_test")) {
        throw ConfigError("pretrain config: proxy_train/proxy_test paths are required");
    }
    const LabeledDataset proxy_train =
        load_labeled(cfg_json.at("proxy_train").get<std::string>());
    const LabeledDataset proxy_test = load_labeled(cfg_json.at("proxy_test").get<std::string>());

    // Variants: base settings merged with per-variant overrides.
    std::vector<json> variant_jsons;
    json base = cfg_json;
    base.erase("variants");
    if (cfg_json.contains("variants")) {
        for (const json& overrides : cfg_json.at("variants")) {
            json merged = base;
            merged.update(overrides);
            variant_jsons.push_back(std::move(merged));
        }
        if (variant_jsons.empty()) throw ConfigError("pretrain config: empty variants list");
    } else {
        variant_jsons.push_back(base);
    }

    fs::create_directories(out_dir);
    const std::uint64_t seed = get_or<std::uint64_t>(cfg_json, "seed", 1);
    const ModelParams base_model = build_model(arch, seed);

    struct VariantOutcome {
        json config;
        Network encoder;
        std::vector<double> losses;
        double linear_eval = 0.0;
    };
    std::vector<VariantOutcome> outcomes;
    for (std::size_t v = 0; v < variant_jsons.size(); ++v) {
        const json& vj = variant_jsons[v];
        VariantOutcome outcome;
        if (method_name == "supervised") {
            const std::string labeled_path =
                get_or<std::string>(vj, "labeled_data",
                                    get_or<std::string>(vj, "proxy_train", ""));
            if (labeled_path.empty()) {
                throw ConfigError("pretrain config: supervised method needs labeled_data");
            }
            const LabeledDataset labeled = load_labeled(labeled_path);
            SupervisedPretrainResult trained = supervised_pretrain(
                base_model, labeled, get_or<std::size_t>(vj, "epochs", 50),
                get_or<double>(vj, "learning_rate", 1e-3),
                get_or<std::size_t>(vj, "batch_size", 64), get_or<std::uint64_t>(vj, "seed", 1));
            outcome.encoder = std::move(trained.encoder);
            outcome.losses = std::move(trained.epoch_losses);
            outcome.config = json{{"method", "supervised"},
                                  {"epochs", get_or<std::size_t>(vj, "epochs", 50)},
                                  {"learning_rate", get_or<double>(vj, "learning_rate", 1e-3)},
                                  {"batch_size", get_or<std::size_t>(vj, "batch_size", 64)},
                                  {"seed", get_or<std::uint64_t>(vj, "seed", 1)}};
        } else {
            const PretrainConfig pcfg =
                parse_pretrain_block(vj, pretrain_method_from_name(method_name));
            if (!cfg_json.contains("data")) {
                throw ConfigError("pretrain config: data path is required");
            }
            const UnlabeledDataset unlabeled =
                load_unlabeled(cfg_json.at("data").get<std::string>());
            PretrainResult trained = pretrain_encoder(base_model, unlabeled, pcfg);
            outcome.encoder = std::move(trained.encoder);
            outcome.losses = std::move(trained.epoch_losses);
            outcome.config = pretrain_to_json(pcfg);
        }
        outcome.linear_eval = linear_evaluation(outcome.encoder, proxy_train, proxy_test,
                                                lin.epochs, lin.lr, lin.batch_size, seed);
        std::ostringstream loss_csv;
        loss_csv << "epoch,mean_loss\n";
        for (std::size_t e = 0; e < outcome.losses.size(); ++e) {
            loss_csv << e << ',' << fmt_double(outcome.losses[e]) << '\n';
        }
        write_text_file((fs::path(out_dir) / ("loss_v" + std::to_string(v) + ".csv")).string(),
                        loss_csv.str());
        outcomes.push_back(std::move(outcome));
    }

    std::size_t best = 0;
    for (std::size_t v = 1; v < outcomes.size(); ++v) {
        if (outcomes[v].linear_eval > outcomes[best].linear_eval) best = v;
    }
    std::ostringstream sweep;
    sweep << "variant,method,linear_eval,selected,params\n";
    for (std::size_t v = 0; v < outcomes.size(); ++v) {
        sweep << v << ',' << method_name << ',' << fmt_double(outcomes[v].linear_eval) << ','
              << (v == best ? 1 : 0) << ',' << '"' << outcomes[v].config.dump() << '"' << '\n';
    }
    write_text_file((fs::path(out_dir) / "sweep.csv").string(), sweep.str());
    fs::copy_file(fs::path(out_dir) / ("loss_v" + std::to_string(best) + ".csv"),
                  fs::path(out_dir) / "loss.csv", fs::copy_options::overwrite_existing);
    save_encoder_checkpoint((fs::path(out_dir) / "encoder.ckpt").string(),
                            outcomes[best].encoder, arch);

    json snapshot = cfg_json;
    snapshot["selected_variant"] = best;
    snapshot["selected_linear_eval"] = outcomes[best].linear_eval;
    write_text_file((fs::path(out_dir) / "config.json").string(), snapshot.dump(2) + "\n");
    if (!opts.quiet) {
        std::cout << "pretrain: " << outcomes.size() << " variant(s), selected " << best
                  << " (linear eval " << fmt_double(outcomes[best].linear_eval) << ")\n";
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// federate
// ---------------------------------------------------------------------------

int cmd_federate(const CommonOptions& opts) {
    json cfg_json = load_json_file(opts.config_path);
    check_keys(cfg_json, "federate config",
               {"arch", "data_dir", "pretrained_encoder", "algorithm", "clusters", "rounds",
                "explore_rounds", "local_epochs", "encoder_local_epochs", "local_lr", "batch_size",
                "participation_fraction", "global_encoder", "ifca_max_restarts",
                "ifca_failure_window", "seed", "eval_every", "model_size_units",
                "checkpoint_every", "out"});
    if (opts.seed.has_value()) cfg_json["seed"] = *opts.seed;
    FederationConfig cfg = parse_federation(cfg_json);
    try {
        cfg.validate();
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    ArchConfig arch = parse_arch(cfg_json.value("arch", json::object()));
    if (!cfg_json.contains("data_dir")) throw ConfigError("federate config: data_dir is required");
    const std::vector<ClientDataset> clients =
        load_clients_dir(cfg_json.at("data_dir").get<std::string>());

    if (clients.front().train.feature_dim() != arch.input_dim) {
        throw ConfigError("federate: client feature dim " +
                          std::to_string(clients.front().train.feature_dim()) +
                          " != arch input_dim " + std::to_string(arch.input_dim));
    }
    if (static_cast<std::size_t>(clients.front().train.class_count) != arch.class_count) {
        throw ConfigError("federate: client class count != arch class_count");
    }

    std::optional<Network> encoder;
    if (cfg_json.contains("pretrained_encoder")) {
        const auto [net, ckpt_arch] =
            load_encoder_checkpoint(cfg_json.at("pretrained_encoder").get<std::string>());
        if (!(ckpt_arch == arch)) {
            throw ConfigError("federate: checkpoint/architecture mismatch with configured arch");
        }
        encoder = net;
    }

    const std::string out_dir = resolve_out_dir(opts, cfg_json, "run");
    const int checkpoint_every = get_or<int>(cfg_json, "checkpoint_every", 0);
    fs::create_directories(fs::path(out_dir) / "checkpoints");

    ClusterModelPool pool = make_initial_pool(cfg, arch, encoder);
    RoundCallback on_round;
    if (checkpoint_every > 0) {
        on_round = [&](const FederationState& state, int t) {
            if ((t + 1) % checkpoint_every != 0) return;
            for (std::size_t n = 0; n < state.pool.models.size(); ++n) {
                std::ostringstream name;
                name << "pool_round_" << std::setw(4) << std::setfill('0') << t << "_model_"
                     << (n + 1) << ".ckpt";
                save_model_checkpoint((fs::path(out_dir) / "checkpoints" / name.str()).string(),
                                      state.pool.models[n]);
            }
        };
    }
    const FederationResult result = run_federation(cfg, clients, std::move(pool), on_round);

    json snapshot = federation_to_json(cfg);
    snapshot["arch"] = arch_to_json(arch);
    snapshot["data_dir"] = cfg_json.at("data_dir");
    if (cfg_json.contains("pretrained_encoder")) {
        snapshot["pretrained_encoder"] = cfg_json.at("pretrained_encoder");
    }
    snapshot["checkpoint_every"] = checkpoint_every;
    const RunSummary summary = write_run_outputs(out_dir, snapshot, cfg, result, clients);

    if (!opts.quiet) {
        std::cout << "federate: " << algorithm_name(cfg.algorithm) << ", "
                  << result.history.rounds.size() << " rounds, final accuracy "
                  << fmt_double(summary.final_accuracy) << ", comm cost "
                  << fmt_double(
                         comm_cost(cfg.rounds, cfg.clusters, cfg.model_size_units, cfg.algorithm))
                  << " units\n";
    }
    if (result.history.clustering_failure) {
        std::cerr << "clustering failure: ifca exhausted " << cfg.restart.max_restarts
                  << " restarts; run terminated after " << result.history.rounds.size()
                  << " rounds\n";
        return kExitRuntime;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// experiment
// ---------------------------------------------------------------------------

struct MethodSpec {
    std::string name;
    Algorithm algorithm = Algorithm::cpcfl;
    std::string pretrain = "none";     // none|simclr|byol|simsiam|supervised|fedavg
    json overrides = json::object();   // federation overrides
};

struct MethodOutcome {
    std::string name;
    int trial = 0;
    double accuracy = 0.0;
    double f1_macro = 0.0;
    std::optional<double> ari;
    bool clustering_failure = false;
};

struct TrialOutcome {
    int trial = 0;
    std::vector<MethodOutcome> methods;
    std::string error;  // nonempty on failure
};

struct ExperimentPlan {
    std::string name = "experiment";
    int trials = 5;
    std::uint64_t base_seed = 100;
    bool parallel = false;
    SyntheticConfig synth;
    PartitionSpec part;
    ArchConfig arch;
    json pretrain_block = json::object();
    json federation_block = json::object();
    std::vector<MethodSpec> methods;
    std::string out_dir;
};

FederationConfig method_federation_config(const ExperimentPlan& plan, const MethodSpec& method,
                                          std::uint64_t trial_seed) {
    json merged = plan.federation_block;
    merged["algorithm"] = algorithm_name(method.algorithm);
    if (method.algorithm == Algorithm::fedavg) merged["clusters"] = 1;
    merged.update(method.overrides);
    merged["seed"] = trial_seed;
    FederationConfig cfg = parse_federation(merged);
    try {
        cfg.validate();
    } catch (const ValidationError& e) {
        throw ConfigError("method " + method.name + ": " + e.what());
    }
    return cfg;
}

TrialOutcome run_trial(const ExperimentPlan& plan, int trial) {
    TrialOutcome outcome;
    outcome.trial = trial;
    const std::uint64_t trial_seed = plan.base_seed + static_cast<std::uint64_t>(trial);
    const fs::path trial_dir = fs::path(plan.out_dir) / ("trial_" + std::to_string(trial));
    try {
        // Fixed mixture, per-trial resampled client partition (trial seed).
        SyntheticConfig synth = plan.synth;
        PartitionSpec part = plan.part;
        part.seed = trial_seed;
        const SyntheticData data = generate_synthetic(synth);
        const std::vector<ClientDataset> clients =
            partition_clients(data.train_pool, data.test_pool, part);
        fs::create_directories(trial_dir / "encoders");
        write_text_file((trial_dir / "partition.txt").string(), partition_manifest(clients));

        // Encoders by pretraining kind, cached per trial.
        std::map<std::string, Network> encoders;
        auto encoder_for = [&](const std::string& kind) -> const Network& {
            auto it = encoders.find(kind);
            if (it != encoders.end()) return it->second;
            Network encoder;
            if (kind == "simclr" || kind == "byol" || kind == "simsiam") {
                json block = plan.pretrain_block;
                block["seed"] = trial_seed;
                // The manifest's pretrain block is shared across methods;
                // method-specific knobs apply only where they belong.
                if (kind != "simclr") block.erase("temperature");
                if (kind != "byol") block.erase("target_update_rate");
                const PretrainConfig pcfg =
                    parse_pretrain_block(block, pretrain_method_from_name(kind));
                const ModelParams base_model = build_model(plan.arch, trial_seed);
                encoder = pretrain_encoder(base_model, data.unlabeled, pcfg).encoder;
            } else if (kind == "supervised") {
                if (data.proxy_train.size() == 0) {
                    throw ConfigError("supervised pretraining needs synthetic.proxy_per_class > 0");
                }
                const ModelParams base_model = build_model(plan.arch, trial_seed);
                encoder = supervised_pretrain(
                              base_model, data.proxy_train,
                              get_or<std::size_t>(plan.pretrain_block, "epochs", 50),
                              get_or<double>(plan.pretrain_block, "learning_rate", 1e-3),
                              get_or<std::size_t>(plan.pretrain_block, "batch_size", 64),
                              trial_seed)
                              .encoder;
            } else if (kind == "fedavg") {
                // Chain: encoder taken from a FedAvg(None) run on this trial.
                MethodSpec chain;
                chain.name = "fedavg_chain";
                chain.algorithm = Algorithm::fedavg;
                const FederationConfig chain_cfg =
                    method_federation_config(plan, chain, trial_seed);
                FederationResult chain_result = run_federation(
                    chain_cfg, clients, make_initial_pool(chain_cfg, plan.arch, std::nullopt));
                encoder = std::move(chain_result.pool.models.front().encoder);
            } else {
                throw ConfigError("unknown pretrain kind: " + kind);
            }
            save_encoder_checkpoint((trial_dir / "encoders" / (kind + ".ckpt")).string(), encoder,
                                    plan.arch);
            return encoders.emplace(kind, std::move(encoder)).first->second;
        };

        for (const MethodSpec& method : plan.methods) {
            const FederationConfig cfg = method_federation_config(plan, method, trial_seed);
            std::optional<Network> encoder;
            if (method.pretrain != "none") encoder = encoder_for(method.pretrain);
            const FederationResult result =
                run_federation(cfg, clients, make_initial_pool(cfg, plan.arch, encoder));

            json snapshot = federation_to_json(cfg);
            snapshot["arch"] = arch_to_json(plan.arch);
            snapshot["pretrain"] = method.pretrain;
            snapshot["method"] = method.name;
            const RunSummary summary = write_run_outputs(
                (trial_dir / "runs" / method.name).string(), snapshot, cfg, result, clients);

            MethodOutcome m;
            m.name = method.name;
            m.trial = trial;
            m.accuracy = summary.final_accuracy;
            m.f1_macro = summary.j.at("final").is_null()
                             ? 0.0
                             : summary.j.at("final").at("f1_macro").get<double>();
            m.ari = summary.final_ari;
            m.clustering_failure = result.history.clustering_failure;
            outcome.methods.push_back(std::move(m));
        }
    } catch (const std::exception& e) {
        outcome.error = e.what();
    }
    return outcome;
}

int cmd_experiment(const CommonOptions& opts) {
    json manifest = load_json_file(opts.config_path);
    check_keys(manifest, "experiment manifest",
               {"name", "trials", "base_seed", "parallel", "synthetic", "partition", "arch",
                "pretrain", "federation", "methods", "out"});
    ExperimentPlan plan;
    plan.name = get_or<std::string>(manifest, "name", plan.name);
    plan.trials = get_or<int>(manifest, "trials", plan.trials);
    plan.base_seed = get_or<std::uint64_t>(manifest, "base_seed", plan.base_seed);
    plan.parallel = get_or<bool>(manifest, "parallel", plan.parallel);
    plan.synth = parse_synthetic(manifest.value("synthetic", json::object()));
    plan.part = parse_partition(manifest.value("partition", json::object()));
    plan.arch = parse_arch(manifest.value("arch", json::object()));
    plan.pretrain_block = manifest.value("pretrain", json::object());
    plan.federation_block = manifest.value("federation", json::object());
    if (opts.trials.has_value()) plan.trials = *opts.trials;
    if (opts.seed.has_value()) plan.base_seed = *opts.seed;
    if (plan.trials < 1) throw ConfigError("experiment: trials must be >= 1");
    if (!manifest.contains("methods") || manifest.at("methods").empty()) {
        throw ConfigError("experiment: methods list is required");
    }
    for (const json& mj : manifest.at("methods")) {
        check_keys(mj, "method", {"name", "algorithm", "pretrain", "overrides"});
        MethodSpec method;
        method.algorithm = algorithm_from_name(get_or<std::string>(mj, "algorithm", "cpcfl"));
        method.pretrain = get_or<std::string>(mj, "pretrain", "none");
        method.name = get_or<std::string>(
            mj, "name", std::string(algorithm_name(method.algorithm)) + "_" + method.pretrain);
        method.overrides = mj.value("overrides", json::object());
        plan.methods.push_back(std::move(method));
    }
    plan.out_dir = resolve_out_dir(opts, manifest, "experiment");
    fs::create_directories(plan.out_dir);
    write_text_file((fs::path(plan.out_dir) / "manifest.json").string(), manifest.dump(2) + "\n");

    std::vector<TrialOutcome> outcomes(static_cast<std::size_t>(plan.trials));
    if (plan.parallel && plan.trials > 1) {
        std::vector<std::future<TrialOutcome>> futures;
        futures.reserve(static_cast<std::size_t>(plan.trials));
        for (int t = 0; t < plan.trials; ++t) {
            futures.push_back(
                std::async(std::launch::async, [&plan, t] { return run_trial(plan, t); }));
        }
        for (int t = 0; t < plan.trials; ++t) outcomes[static_cast<std::size_t>(t)] = futures[static_cast<std::size_t>(t)].get();
    } else {
        for (int t = 0; t < plan.trials; ++t) outcomes[static_cast<std::size_t>(t)] = run_trial(plan, t);
    }

    // results.csv always written, even on partial failure.
    std::ostringstream results;
    results << "method,trial,seed,accuracy,f1_macro,ari,clustering_failure\n";
    for (const TrialOutcome& trial : outcomes) {
        for (const MethodOutcome& m : trial.methods) {
            results << m.name << ',' << m.trial << ','
                    << plan.base_seed + static_cast<std::uint64_t>(m.trial) << ','
                    << fmt_double(m.accuracy) << ',' << fmt_double(m.f1_macro) << ','
                    << (m.ari ? fmt_double(*m.ari) : "") << ',' << (m.clustering_failure ? 1 : 0)
                    << '\n';
        }
    }
    write_text_file((fs::path(plan.out_dir) / "results.csv").string(), results.str());

    std::string first_error;
    for (const TrialOutcome& trial : outcomes) {
        if (!trial.error.empty()) {
            first_error = "trial " + std::to_string(trial.trial) + ": " + trial.error;
            break;
        }
    }
    if (!first_error.empty()) {
        write_text_file((fs::path(plan.out_dir) / "error.txt").string(), first_error + "\n");
        std::cerr << "experiment aborted: " << first_error << "\n";
        return kExitRuntime;
    }

    // Comparison table (population SD, matching the published-table convention).
    std::ostringstream table;
    table << "method";
    for (int t = 0; t < plan.trials; ++t) table << "\ttrial_" << t;
    table << "\tmean\tsd\n";
    json summary_json = json::object();
    for (const MethodSpec& method : plan.methods) {
        std::vector<double> scores;
        for (const TrialOutcome& trial : outcomes) {
            for (const MethodOutcome& m : trial.methods) {
                if (m.name == method.name) scores.push_back(m.accuracy);
            }
        }
        table << method.name;
        for (double s : scores) table << '\t' << fmt_double(s);
        json row{{"trials", scores}};
        if (scores.size() >= 2) {
            const TrialStats stats = trial_statistics(scores, SdMode::population);
            table << '\t' << fmt_double(stats.mean) << '\t' << fmt_double(stats.sd) << '\n';
            row["mean"] = stats.mean;
            row["sd"] = stats.sd;
        } else {
            table << '\t' << fmt_double(scores.empty() ? 0.0 : scores.front()) << "\tn/a\n";
            row["mean"] = scores.empty() ? 0.0 : scores.front();
            row["sd"] = nullptr;
        }
        summary_json[method.name] = std::move(row);
    }
    write_text_file((fs::path(plan.out_dir) / "table.txt").string(), table.str());
    write_text_file((fs::path(plan.out_dir) / "summary.json").string(),
                    summary_json.dump(2) + "\n");
    if (!opts.quiet) std::cout << table.str();
    return kExitOk;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

int cmd_report(const std::string& run_dir, bool quiet) {
    const fs::path dir(run_dir);
    if (!fs::is_regular_file(dir / "history.jsonl")) {
        throw ConfigError("report: no history.jsonl under " + run_dir);
    }
    std::ifstream in(dir / "history.jsonl");
    std::ostringstream metrics_csv;
    metrics_csv << kMetricsHeader;
    std::string line;
    json last_eval = nullptr;
    int rounds = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception& e) {
            throw FormatError("report: bad history line: " + std::string(e.what()));
        }
        ++rounds;
        if (!record.at("eval").is_null()) {
            const json& e = record.at("eval");
            metrics_csv << record.at("round").get<int>() << ','
                        << fmt_double(e.at("mean_accuracy").get<double>()) << ','
                        << fmt_double(e.at("f1_macro").get<double>()) << ','
                        << fmt_double(e.at("f1_weighted").get<double>()) << ','
                        << fmt_double(e.at("auroc_ovr_macro").get<double>()) << ','
                        << fmt_double(e.at("auroc_ovr_weighted").get<double>()) << ','
                        << fmt_double(e.at("auroc_ovo_macro").get<double>()) << ','
                        << fmt_double(e.at("auroc_ovo_weighted").get<double>()) << ','
                        << (record.at("ari").is_null()
                                ? ""
                                : fmt_double(record.at("ari").get<double>()))
                        << '\n';
            last_eval = record;
        }
    }
    write_text_file((dir / "metrics.csv").string(), metrics_csv.str());
    if (!quiet) {
        std::cout << "report: " << rounds << " rounds\n";
        if (!last_eval.is_null()) {
            const json& e = last_eval.at("eval");
            std::cout << "final round " << last_eval.at("round").get<int>() << ": accuracy "
                      << fmt_double(e.at("mean_accuracy").get<double>()) << ", f1_macro "
                      << fmt_double(e.at("f1_macro").get<double>()) << ", auroc_ovr_macro "
                      << fmt_double(e.at("auroc_ovr_macro").get<double>()) << "\n";
        }
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Clustered federated learning with contrastive encoder pre-training"};
    app.require_subcommand(1);

    CommonOptions opts;
    std::string run_dir;

    auto add_common = [&](CLI::App* cmd, bool needs_config) {
        auto* config_opt = cmd->add_option("--config", opts.config_path, "JSON config file");
        if (needs_config) config_opt->required();
        cmd->add_option("--seed", [&opts](const std::vector<std::string>& vals) {
            opts.seed = std::stoull(vals.front());
            return true;
        }, "Seed override");
        cmd->add_option("--out", [&opts](const std::vector<std::string>& vals) {
            opts.out = vals.front();
            return true;
        }, "Output directory override");
        cmd->add_flag("--quiet", opts.quiet, "Suppress stdout chatter");
    };

    CLI::App* generate = app.add_subcommand("generate", "Generate datasets and client partition");
    add_common(generate, true);
    CLI::App* pretrain = app.add_subcommand("pretrain", "Pre-train an encoder (with sweep)");
    add_common(pretrain, true);
    CLI::App* federate = app.add_subcommand("federate", "Run a federated training simulation");
    add_common(federate, true);
    CLI::App* experiment = app.add_subcommand("experiment", "Run a multi-trial experiment");
    add_common(experiment, true);
    experiment->add_option("--trials", [&opts](const std::vector<std::string>& vals) {
        opts.trials = std::stoi(vals.front());
        return true;
    }, "Trial count override");
    CLI::App* report = app.add_subcommand("report", "Rebuild reports from a run directory");
    report->add_option("--run", run_dir, "Run directory")->required();
    report->add_flag("--quiet", opts.quiet, "Suppress stdout chatter");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (generate->parsed()) return cmd_generate(opts);
        if (pretrain->parsed()) return cmd_pretrain(opts);
        if (federate->parsed()) return cmd_federate(opts);
        if (experiment->parsed()) return cmd_experiment(opts);
        if (report->parsed()) return cmd_report(run_dir, opts.quiet);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    std::cerr << "usage error: no subcommand\n";
    return kExitUsage;
}

}  // namespace cpcfl::cli
