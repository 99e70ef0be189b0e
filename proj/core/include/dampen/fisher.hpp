#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>

#include "dampen/data.hpp"
#include "dampen/nn.hpp"

namespace dampen {

/// Diagonal Fisher importances: the mean over samples of the squared
/// per-sample loss gradient, aligned with the model's flat parameter layout.
struct ImportanceVector {
  Eigen::VectorXd values;
  std::int64_t sample_count = 0;
  std::string model_fingerprint;
};

/// Fixed accumulation chunk size. Partial sums are taken over consecutive
/// 256-row chunks and combined in chunk order, so results are bitwise
/// identical for any worker count.
inline constexpr int kImportanceChunk = 256;

/// importances[i] = (1/n) * sum over samples of (d loss / d theta_i)^2,
/// gradients taken in eval mode.
ImportanceVector compute_importances(const ModelState& model,
                                     const TabularDataset& data,
                                     int workers = 1);

/// Text container, format tag "dampen-fim-v1"; bitwise-lossless round trip.
void persist_importances(const ImportanceVector& iv,
                         const std::filesystem::path& path);
ImportanceVector load_importances(const std::filesystem::path& path);

/// True when the stored fingerprint matches the model the caller wants to
/// use the importances with.
bool fingerprint_matches(const ImportanceVector& iv, const ModelState& model);

}  // namespace dampen
