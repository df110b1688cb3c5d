#include "cpcfl/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>

#include "binio.hpp"
#include "cpcfl/kernels.hpp"
#include "cpcfl/rng.hpp"

namespace cpcfl {

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

void SyntheticConfig::validate() const {
    if (classes < 2) throw ValidationError("synthetic: need at least 2 classes");
    if (dim < 2) throw ValidationError("synthetic: need dim >= 2");
    if (classes > dim) {
        throw ValidationError("synthetic: orthonormal class means need classes <= dim");
    }
    if (per_class_train <= 0 || per_class_test <= 0 || unlabeled_count <= 0) {
        throw ValidationError("synthetic: sample counts must be positive");
    }
    if (class_separation < 0.0) throw ValidationError("synthetic: class_separation must be >= 0");
    if (noise_sigma <= 0.0) throw ValidationError("synthetic: noise_sigma must be positive");
    if (unlabeled_blend < 0.0 || unlabeled_blend > 1.0) {
        throw ValidationError("synthetic: unlabeled_blend in [0,1]");
    }
    if (proxy_per_class < 0) throw ValidationError("synthetic: proxy_per_class must be >= 0");
}

namespace {

// k orthonormal rows via Gram-Schmidt over seeded gaussian draws.
std::vector<std::vector<double>> orthonormal_directions(int k, int dim, Rng& rng) {
    std::vector<std::vector<double>> dirs;
    dirs.reserve(static_cast<std::size_t>(k));
    while (static_cast<int>(dirs.size()) < k) {
        std::vector<double> v(static_cast<std::size_t>(dim));
        for (double& x : v) x = rng.normal();
        for (const auto& u : dirs) {
            const double proj = kernels::dot(v.data(), u.data(), v.size());
            kernels::axpy(-proj, u.data(), v.data(), v.size());
        }
        const double norm = std::sqrt(kernels::dot(v.data(), v.data(), v.size()));
        if (norm < 1e-8) continue;  // retry on a degenerate draw
        kernels::scale(1.0 / norm, v.data(), v.size());
        dirs.push_back(std::move(v));
    }
    return dirs;
}

Tensor sample_mixture(const std::vector<std::vector<double>>& means, double sigma,
                      const std::vector<int>& classes, Rng& rng) {
    const std::size_t dim = means.front().size();
    Tensor out({classes.size(), dim});
    for (std::size_t i = 0; i < classes.size(); ++i) {
        double* row = out.row(i);
        const std::vector<double>& mean = means[static_cast<std::size_t>(classes[i])];
        for (std::size_t j = 0; j < dim; ++j) row[j] = mean[j] + sigma * rng.normal();
    }
    return out;
}

constexpr std::uint64_t kMeansTag = 100;
constexpr std::uint64_t kAltMeansTag = 101;
constexpr std::uint64_t kTrainTag = 1;
constexpr std::uint64_t kTestTag = 2;
constexpr std::uint64_t kUnlabeledTag = 3;
constexpr std::uint64_t kProxyTrainTag = 4;
constexpr std::uint64_t kProxyTestTag = 5;

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    Rng mean_rng(derive_seed(cfg.seed, {stream::kSynthetic, kMeansTag}));
    auto directions = orthonormal_directions(cfg.classes, cfg.dim, mean_rng);
    std::vector<std::vector<double>> means = directions;
    for (auto& m : means) kernels::scale(cfg.class_separation, m.data(), m.size());

    std::vector<std::vector<double>> unlabeled_means = means;
    if (cfg.unlabeled_blend > 0.0) {
        Rng alt_rng(derive_seed(cfg.seed, {stream::kSynthetic, kAltMeansTag}));
        auto alt = orthonormal_directions(cfg.classes, cfg.dim, alt_rng);
        for (int c = 0; c < cfg.classes; ++c) {
            std::vector<double>& v = unlabeled_means[static_cast<std::size_t>(c)];
            const std::vector<double>& u = directions[static_cast<std::size_t>(c)];
            const std::vector<double>& w = alt[static_cast<std::size_t>(c)];
            for (std::size_t j = 0; j < v.size(); ++j) {
                v[j] = (1.0 - cfg.unlabeled_blend) * u[j] + cfg.unlabeled_blend * w[j];
            }
            const double norm = std::sqrt(kernels::dot(v.data(), v.data(), v.size()));
            if (norm > 0.0) kernels::scale(cfg.class_separation / norm, v.data(), v.size());
        }
    }

    SyntheticData data;
    auto make_labeled = [&](int per_class, std::uint64_t tag) {
        LabeledDataset set;
        set.class_count = cfg.classes;
        set.labels.reserve(static_cast<std::size_t>(per_class) * cfg.classes);
        for (int c = 0; c < cfg.classes; ++c) {
            for (int i = 0; i < per_class; ++i) set.labels.push_back(c);
        }
        Rng rng(derive_seed(cfg.seed, {stream::kSynthetic, tag}));
        set.features = sample_mixture(means, cfg.noise_sigma, set.labels, rng);
        return set;
    };
    data.train_pool = make_labeled(cfg.per_class_train, kTrainTag);
    data.test_pool = make_labeled(cfg.per_class_test, kTestTag);
    if (cfg.proxy_per_class > 0) {
        data.proxy_train = make_labeled(cfg.proxy_per_class, kProxyTrainTag);
        data.proxy_test = make_labeled(cfg.proxy_per_class, kProxyTestTag);
    }

    Rng unlabeled_rng(derive_seed(cfg.seed, {stream::kSynthetic, kUnlabeledTag}));
    std::vector<int> unlabeled_classes(static_cast<std::size_t>(cfg.unlabeled_count));
    for (int& c : unlabeled_classes) {
        c = static_cast<int>(unlabeled_rng.uniform_int(static_cast<std::uint64_t>(cfg.classes)));
    }
    data.unlabeled.samples =
        sample_mixture(unlabeled_means, cfg.noise_sigma, unlabeled_classes, unlabeled_rng);
    return data;
}

// ---------------------------------------------------------------------------
// Client partition
// ---------------------------------------------------------------------------

void PartitionSpec::validate() const {
    if (num_clients <= 0 || num_groups <= 0) {
        throw ValidationError("partition: client/group counts must be positive");
    }
    if (num_clients % num_groups != 0) {
        throw ValidationError("partition: num_clients must be divisible by num_groups");
    }
    if (classes_per_client <= 0) throw ValidationError("partition: classes_per_client > 0");
    if (majors_per_client < 0 || majors_per_client > classes_per_client) {
        throw ValidationError("partition: majors_per_client in [0, classes_per_client]");
    }
    if (major_count <= 0 || minor_count <= 0 || test_per_class <= 0) {
        throw ValidationError("partition: sample counts must be positive");
    }
}

std::vector<int> group_class_window(int class_count, int num_groups, int classes_per_client,
                                    int group) {
    if (classes_per_client > class_count) {
        throw ValidationError("partition: classes_per_client exceeds class count");
    }
    int start = 0;
    if (num_groups > 1) {
        // Windows evenly spaced over the class range. A stride of
        // classes_per_client-1 (one-class overlap, the K=10 / 3x4 layout)
        // and the disjoint layout both fall out when they tile exactly.
        if (class_count - classes_per_client < num_groups - 1) {
            throw ValidationError("partition: " + std::to_string(num_groups) + " distinct windows of " +
                                  std::to_string(classes_per_client) + " classes do not fit in " +
                                  std::to_string(class_count) + " classes");
        }
        start = static_cast<int>(std::llround(static_cast<double>(group) *
                                              static_cast<double>(class_count - classes_per_client) /
                                              static_cast<double>(num_groups - 1)));
    }
    std::vector<int> window(static_cast<std::size_t>(classes_per_client));
    for (int i = 0; i < classes_per_client; ++i) window[static_cast<std::size_t>(i)] = start + i;
    return window;
}

std::vector<ClientDataset> partition_clients(const LabeledDataset& train_pool,
                                             const LabeledDataset& test_pool,
                                             const PartitionSpec& spec) {
    spec.validate();
    train_pool.validate();
    test_pool.validate();
    if (train_pool.class_count != test_pool.class_count) {
        throw ValidationError("partition: train/test pools disagree on class count");
    }
    const int k = train_pool.class_count;
    const std::size_t dim = train_pool.feature_dim();

    // Per-class index pools; train indices are consumed without replacement
    // across all clients.
    std::vector<std::vector<std::size_t>> train_by_class(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < train_pool.size(); ++i) {
        train_by_class[static_cast<std::size_t>(train_pool.labels[i])].push_back(i);
    }
    std::vector<std::vector<std::size_t>> test_by_class(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < test_pool.size(); ++i) {
        test_by_class[static_cast<std::size_t>(test_pool.labels[i])].push_back(i);
    }
    std::vector<std::size_t> cursor(static_cast<std::size_t>(k), 0);
    for (int c = 0; c < k; ++c) {
        Rng rng(derive_seed(spec.seed, {stream::kPartition, static_cast<std::uint64_t>(c)}));
        rng.shuffle(train_by_class[static_cast<std::size_t>(c)]);
    }

    auto take_train = [&](int cls, int count, int client_id) {
        auto& pool = train_by_class[static_cast<std::size_t>(cls)];
        std::size_t& pos = cursor[static_cast<std::size_t>(cls)];
        if (pos + static_cast<std::size_t>(count) > pool.size()) {
            throw CapacityError("partition: class " + std::to_string(cls) + " exhausted (client " +
                                std::to_string(client_id) + " needs " + std::to_string(count) +
                                " more samples, " + std::to_string(pool.size() - pos) +
                                " left)");
        }
        std::vector<std::size_t> out(pool.begin() + static_cast<std::ptrdiff_t>(pos),
                                     pool.begin() + static_cast<std::ptrdiff_t>(pos + count));
        pos += static_cast<std::size_t>(count);
        return out;
    };

    const int per_group = spec.num_clients / spec.num_groups;
    std::vector<ClientDataset> clients;
    clients.reserve(static_cast<std::size_t>(spec.num_clients));
    for (int u = 0; u < spec.num_clients; ++u) {
        const int group = u / per_group;
        const std::vector<int> window =
            group_class_window(k, spec.num_groups, spec.classes_per_client, group);
        Rng client_rng(derive_seed(spec.seed,
                                   {stream::kPartition, 1000, static_cast<std::uint64_t>(u)}));

        // Which window slots are major classes ("randomly allocate").
        std::vector<std::size_t> major_slots = client_rng.sample_without_replacement(
            window.size(), static_cast<std::size_t>(spec.majors_per_client));
        std::vector<bool> is_major(window.size(), false);
        for (std::size_t slot : major_slots) is_major[slot] = true;

        ClientDataset client;
        client.client_id = u;
        client.true_cluster = group;

        std::vector<std::size_t> train_rows;
        std::vector<int> train_labels;
        for (std::size_t slot = 0; slot < window.size(); ++slot) {
            const int cls = window[slot];
            const int count = is_major[slot] ? spec.major_count : spec.minor_count;
            for (std::size_t row : take_train(cls, count, u)) {
                train_rows.push_back(row);
                train_labels.push_back(cls);
            }
        }
        client.train.class_count = k;
        client.train.labels = std::move(train_labels);
        client.train.features = Tensor({train_rows.size(), dim});
        for (std::size_t i = 0; i < train_rows.size(); ++i) {
            std::memcpy(client.train.features.row(i), train_pool.features.row(train_rows[i]),
                        dim * sizeof(double));
        }

        // Local test set: test_per_class held-out samples per window class,
        // drawn independently per client.
        std::vector<std::size_t> test_rows;
        std::vector<int> test_labels;
        for (int cls : window) {
            const auto& pool = test_by_class[static_cast<std::size_t>(cls)];
            if (pool.size() < static_cast<std::size_t>(spec.test_per_class)) {
                throw CapacityError("partition: test pool for class " + std::to_string(cls) +
                                    " has " + std::to_string(pool.size()) + " samples, need " +
                                    std::to_string(spec.test_per_class));
            }
            for (std::size_t pick : client_rng.sample_without_replacement(
                     pool.size(), static_cast<std::size_t>(spec.test_per_class))) {
                test_rows.push_back(pool[pick]);
                test_labels.push_back(cls);
            }
        }
        client.test.class_count = k;
        client.test.labels = std::move(test_labels);
        client.test.features = Tensor({test_rows.size(), dim});
        for (std::size_t i = 0; i < test_rows.size(); ++i) {
            std::memcpy(client.test.features.row(i), test_pool.features.row(test_rows[i]),
                        dim * sizeof(double));
        }
        clients.push_back(std::move(client));
    }
    return clients;
}

std::string partition_manifest(const std::vector<ClientDataset>& clients) {
    std::ostringstream out;
    out << "# client_id true_cluster train_size class:count...\n";
    for (const ClientDataset& client : clients) {
        std::map<int, int> counts;
        for (int label : client.train.labels) counts[label]++;
        out << client.client_id << ' ' << client.true_cluster << ' ' << client.train.size();
        for (const auto& [cls, count] : counts) out << ' ' << cls << ':' << count;
        out << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Relevance score
// ---------------------------------------------------------------------------

double relevance_score(const Network& encoder, const Tensor& features_a, const Tensor& features_b,
                       std::size_t sample_n, std::uint64_t seed) {
    if (features_a.rows() == 0 || features_b.rows() == 0) {
        throw ValidationError("relevance_score: empty dataset");
    }
    if (sample_n == 0 || sample_n > features_a.rows() || sample_n > features_b.rows()) {
        throw ValidationError("relevance_score: sample_n must be in [1, min(|A|, |B|)]");
    }
    auto sample_side = [&](const Tensor& features, std::uint64_t tag) {
        if (sample_n == features.rows()) {
            return net_forward(encoder, features, RunMode::eval);
        }
        Rng rng(derive_seed(seed, {stream::kRelevance, tag}));
        const std::vector<std::size_t> rows =
            rng.sample_without_replacement(features.rows(), sample_n);
        Tensor picked({sample_n, features.cols()});
        for (std::size_t i = 0; i < sample_n; ++i) {
            std::memcpy(picked.row(i), features.row(rows[i]), features.cols() * sizeof(double));
        }
        return net_forward(encoder, picked, RunMode::eval);
    };
    const Tensor reps_a = sample_side(features_a, 0);
    const Tensor reps_b = sample_side(features_b, 1);
    const std::size_t dim = reps_a.cols();
    double total = 0.0;
    for (std::size_t i = 0; i < sample_n; ++i) {
        for (std::size_t j = 0; j < sample_n; ++j) {
            total += cosine_similarity({reps_a.row(i), dim}, {reps_b.row(j), dim});
        }
    }
    return total / (static_cast<double>(sample_n) * static_cast<double>(sample_n));
}

// ---------------------------------------------------------------------------
// Container files: magic "CPDS", version 1 (layout in docs/formats.md)
// ---------------------------------------------------------------------------

namespace {

constexpr char kDataMagic[4] = {'C', 'P', 'D', 'S'};
constexpr std::uint32_t kDataVersion = 1;
constexpr std::uint8_t kKindLabeled = 0;
constexpr std::uint8_t kKindUnlabeled = 1;
constexpr std::uint8_t kKindClient = 2;

void write_labeled_block(std::ostream& out, const LabeledDataset& data) {
    binio::write_u32(out, static_cast<std::uint32_t>(data.class_count));
    binio::write_u64(out, data.size());
    binio::write_u64(out, data.feature_dim());
    binio::write_f64_array(out, data.features.data(), data.features.size());
    for (int label : data.labels) binio::write_i32(out, label);
}

LabeledDataset read_labeled_block(std::istream& in) {
    LabeledDataset data;
    data.class_count = static_cast<int>(binio::read_u32(in, "dataset"));
    const std::uint64_t n = binio::read_u64(in, "dataset");
    const std::uint64_t dim = binio::read_u64(in, "dataset");
    data.features = Tensor({static_cast<std::size_t>(n), static_cast<std::size_t>(dim)});
    binio::read_f64_array(in, data.features.data(), data.features.size(), "dataset");
    data.labels.resize(static_cast<std::size_t>(n));
    for (auto& label : data.labels) label = binio::read_i32(in, "dataset");
    data.validate();
    return data;
}

std::ofstream open_dataset_output(const std::string& path, std::uint8_t kind) {
    std::ofstream out = binio::open_output(path, "dataset");
    out.write(kDataMagic, 4);
    binio::write_u32(out, kDataVersion);
    binio::write_u8(out, kind);
    return out;
}

std::ifstream open_dataset_input(const std::string& path, std::uint8_t expected_kind) {
    std::ifstream in = binio::open_input(path, "dataset");
    binio::check_magic(in, kDataMagic, "dataset");
    const std::uint32_t version = binio::read_u32(in, "dataset");
    if (version != kDataVersion) {
        throw FormatError("dataset: unsupported version " + std::to_string(version));
    }
    const std::uint8_t kind = binio::read_u8(in, "dataset");
    if (kind != expected_kind) {
        throw FormatError("dataset: wrong container kind in " + path);
    }
    return in;
}

}  // namespace

void save_labeled(const std::string& path, const LabeledDataset& data) {
    data.validate();
    std::ofstream out = open_dataset_output(path, kKindLabeled);
    write_labeled_block(out, data);
    if (!out) throw IoError("dataset: write failed for " + path);
}

LabeledDataset load_labeled(const std::string& path) {
    std::ifstream in = open_dataset_input(path, kKindLabeled);
    return read_labeled_block(in);
}

void save_unlabeled(const std::string& path, const UnlabeledDataset& data) {
    std::ofstream out = open_dataset_output(path, kKindUnlabeled);
    binio::write_u64(out, data.size());
    binio::write_u64(out, data.feature_dim());
    binio::write_f64_array(out, data.samples.data(), data.samples.size());
    if (!out) throw IoError("dataset: write failed for " + path);
}

UnlabeledDataset load_unlabeled(const std::string& path) {
    std::ifstream in = open_dataset_input(path, kKindUnlabeled);
    const std::uint64_t n = binio::read_u64(in, "dataset");
    const std::uint64_t dim = binio::read_u64(in, "dataset");
    UnlabeledDataset data;
    data.samples = Tensor({static_cast<std::size_t>(n), static_cast<std::size_t>(dim)});
    binio::read_f64_array(in, data.samples.data(), data.samples.size(), "dataset");
    return data;
}

void save_client(const std::string& path, const ClientDataset& client) {
    std::ofstream out = open_dataset_output(path, kKindClient);
    binio::write_i32(out, client.client_id);
    binio::write_i32(out, client.true_cluster);
    write_labeled_block(out, client.train);
    write_labeled_block(out, client.test);
    if (!out) throw IoError("dataset: write failed for " + path);
}

ClientDataset load_client(const std::string& path) {
    std::ifstream in = open_dataset_input(path, kKindClient);
    ClientDataset client;
    client.client_id = binio::read_i32(in, "dataset");
    client.true_cluster = binio::read_i32(in, "dataset");
    client.train = read_labeled_block(in);
    client.test = read_labeled_block(in);
    return client;
}

}  // namespace cpcfl
