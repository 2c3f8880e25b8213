#pragma once

#include <string>

#include "wden/model.hpp"

namespace wden {

// Container: "WDEN1" magic line, config key/value lines, one manifest line per
// tensor (name, shape, element offset into the payload), then a "data <bytes>"
// line followed by the raw float32 little-endian payload in manifest order.
void save_weights(const std::string& path, const ModelConfig& cfg, ModelParams<float>& params);

struct LoadedModel {
  ModelConfig config;
  ModelParams<float> params;
};

// Rejects wrong magic, malformed headers, manifest entries that disagree with
// the config's implied shapes, and payload size mismatches.
LoadedModel load_weights(const std::string& path);

}  // namespace wden
