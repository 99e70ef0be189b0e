#pragma once

#include <filesystem>
#include <string>

#include "dampen/nn.hpp"

namespace dampen {

/// Self-describing text checkpoint, format tag "dampen-ckpt-v1": model spec,
/// seed, and every parameter/statistic array as decimal floats with 17
/// significant digits. The round trip is bitwise lossless.
std::string serialize_checkpoint(const ModelState& model);
ModelState parse_checkpoint(const std::string& text);

void save_checkpoint(const ModelState& model, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

/// Content hash of the serialized checkpoint; importance files record it so
/// stale importances are detectable.
std::string model_fingerprint(const ModelState& model);

}  // namespace dampen
