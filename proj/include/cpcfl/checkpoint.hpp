#pragma once

#include <string>
#include <utility>

#include "cpcfl/nn.hpp"

namespace cpcfl {

// Versioned binary checkpoints (layout in docs/formats.md). All numbers are
// written little-endian; parameter payloads are raw 64-bit reals, so a
// save/load cycle is bitwise exact.

void save_encoder_checkpoint(const std::string& path, const Network& encoder,
                             const ArchConfig& arch);
std::pair<Network, ArchConfig> load_encoder_checkpoint(const std::string& path);

void save_model_checkpoint(const std::string& path, const ModelParams& model);
ModelParams load_model_checkpoint(const std::string& path);

}  // namespace cpcfl
