#pragma once

#include <string>

#include "cpcfl/datasets.hpp"

namespace cpcfl {

// Reads an MNIST-family IDX image/label file pair (big-endian magics
// 0x00000803 and 0x00000801). Pixels are flattened row-major and scaled to
// [0, 1]. Bad magic, truncated payload and image/label count mismatch raise
// distinct FormatErrors.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);

}  // namespace cpcfl
