#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cpcfl/datasets.hpp"
#include "cpcfl/nn.hpp"

namespace cpcfl {

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

struct SyntheticConfig {
    int classes = 10;  // K
    int dim = 16;
    int per_class_train = 1000;
    int per_class_test = 200;
    int unlabeled_count = 2000;
    double class_separation = 2.5;  // distance of each class mean from the origin
    double noise_sigma = 1.0;
    // 0 = unlabeled pool drawn from the same mixture as the labeled pools;
    // 1 = from a fresh set of class directions. Models a pre-training
    // distribution that is similar to, but not identical with, client data.
    double unlabeled_blend = 0.0;
    // Extra labeled draws from the same mixture for linear-evaluation proxy
    // sets; 0 disables them.
    int proxy_per_class = 0;
    std::uint64_t seed = 1;

    void validate() const;
};

struct SyntheticData {
    LabeledDataset train_pool;
    LabeledDataset test_pool;
    UnlabeledDataset unlabeled;
    LabeledDataset proxy_train;  // empty unless proxy_per_class > 0
    LabeledDataset proxy_test;
};

// Gaussian class-conditional clusters around orthonormal direction vectors
// scaled by class_separation (requires classes <= dim). Pure function of the
// config.
SyntheticData generate_synthetic(const SyntheticConfig& cfg);

// ---------------------------------------------------------------------------
// Non-IID client partition
// ---------------------------------------------------------------------------

struct PartitionSpec {
    int num_clients = 60;
    int num_groups = 3;
    int classes_per_client = 4;
    int majors_per_client = 2;
    int major_count = 20;  // samples for each major class
    int minor_count = 5;   // samples for each remaining class
    int test_per_class = 20;
    std::uint64_t seed = 1;

    void validate() const;
};

// Class window of one group: windows of classes_per_client classes with a
// one-class overlap between adjacent groups (stride classes_per_client-1)
// when that fits in class_count, otherwise disjoint windows (stride
// classes_per_client). For K=10, 3 groups of 4 this gives the windows
// {0..3}, {3..6}, {6..9}.
std::vector<int> group_class_window(int class_count, int num_groups, int classes_per_client,
                                    int group);

// Splits the train pool over clients without replacement (a capacity error
// names the exhausted class). Within a client, majors_per_client classes
// chosen uniformly at random receive major_count samples, the rest
// minor_count. Local test sets draw test_per_class samples per class from
// the held-out test pool, independently per client.
std::vector<ClientDataset> partition_clients(const LabeledDataset& train_pool,
                                             const LabeledDataset& test_pool,
                                             const PartitionSpec& spec);

// Audit text: one line per client with its group and per-class counts.
std::string partition_manifest(const std::vector<ClientDataset>& clients);

// ---------------------------------------------------------------------------
// Dataset relevance
// ---------------------------------------------------------------------------

// Encodes sample_n rows from each side and returns the mean over all
// sample_n^2 cross-pair cosine similarities of the representations.
double relevance_score(const Network& encoder, const Tensor& features_a, const Tensor& features_b,
                       std::size_t sample_n = 300, std::uint64_t seed = 1);

// ---------------------------------------------------------------------------
// Dataset container files (layout in docs/formats.md)
// ---------------------------------------------------------------------------

void save_labeled(const std::string& path, const LabeledDataset& data);
LabeledDataset load_labeled(const std::string& path);
void save_unlabeled(const std::string& path, const UnlabeledDataset& data);
UnlabeledDataset load_unlabeled(const std::string& path);
void save_client(const std::string& path, const ClientDataset& client);
ClientDataset load_client(const std::string& path);

}  // namespace cpcfl
