#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cpcfl/errors.hpp"
#include "cpcfl/tensor.hpp"

namespace cpcfl {

struct LabeledDataset {
    Tensor features;  // [n, d]
    std::vector<int> labels;
    int class_count = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t feature_dim() const { return features.cols(); }

    void validate() const {
        if (features.rows() != labels.size()) {
            throw ValidationError("labeled dataset: " + std::to_string(features.rows()) +
                                  " feature rows vs " + std::to_string(labels.size()) + " labels");
        }
        for (int label : labels) {
            if (label < 0 || label >= class_count) {
                throw ValidationError("labeled dataset: label " + std::to_string(label) +
                                      " outside [0, " + std::to_string(class_count) + ")");
            }
        }
    }
};

struct UnlabeledDataset {
    Tensor samples;  // [n, d]

    std::size_t size() const { return samples.rows(); }
    std::size_t feature_dim() const { return samples.cols(); }
};

// One client's private training data plus a local test set following the
// same distribution. true_cluster is ground truth for evaluation only; the
// federation algorithms never read it.
struct ClientDataset {
    int client_id = 0;
    LabeledDataset train;
    LabeledDataset test;
    int true_cluster = -1;
};

}  // namespace cpcfl
