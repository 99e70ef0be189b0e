#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dampen/fisher.hpp"
#include "dampen/nn.hpp"

namespace dampen {

struct SSDConfig {
  double alpha = 1.0;   // selection weighting, > 0
  double lambda = 1.0;  // dampening constant, >= 0
  void validate() const;
};

struct UnlearnReport {
  double percentile_p = -1.0;  // -1 when alpha was supplied directly
  double chosen_alpha = 0.0;
  std::int64_t dampened_count = 0;
  double dampened_fraction = 0.0;
  std::int64_t forget_size = 0;
  std::int64_t full_size = 0;
};

std::string serialize_report(const UnlearnReport& r);  // dampen-rpt-v1
UnlearnReport parse_report(const std::string& text);

/// How the adaptive alpha reads the importance-ratio distribution.
/// `top_forget_fraction` (default) takes the p-th percentile of forget/full
/// ratios, so the selection fires on exactly the top (100-p)% most
/// forget-specialized coordinates regardless of the overall gradient scale.
/// `full_over_forget` takes the p-th percentile of full/forget ratios
/// instead; the two agree when the ratio distribution is log-symmetric
/// around 1, but for forget sets whose gradients dominate everywhere (e.g.
/// mislabeled rows) it degenerates to selecting every parameter.
enum class AlphaMode { top_forget_fraction, full_over_forget };

/// p = 100 - log(1 + 100 * forget_size / full_size), clamped to [0, 100].
/// Natural log by default; the base is configurable.
double compute_percentile_p(std::int64_t forget_size, std::int64_t full_size,
                            double log_base = 2.718281828459045);

/// Percentile of per-parameter importance ratios. Coordinates whose forget
/// importance is exactly zero can never be selected and are excluded from
/// the ratio population. Throws when the population is empty (nothing to
/// unlearn). The result is always positive.
double select_alpha_adaptive(const ImportanceVector& imp_full,
                             const ImportanceVector& imp_forget, double p,
                             AlphaMode mode = AlphaMode::top_forget_fraction);

/// Selective synaptic dampening: parameter i is selected when
/// forget_i > alpha * full_i and then scaled by
/// beta = min(lambda * full_i / forget_i, 1). Batch-norm running statistics
/// are untouched. The report counts every selected parameter, including
/// those whose beta capped at 1.
std::pair<ModelState, UnlearnReport> ssd_dampen(const ModelState& model,
                                                const ImportanceVector& imp_full,
                                                const ImportanceVector& imp_forget,
                                                const SSDConfig& cfg);

struct AssdOptions {
  double log_base = 2.718281828459045;
  AlphaMode mode = AlphaMode::top_forget_fraction;
};

/// Parameter-free pipeline: percentile p from the forget/full sizes, alpha
/// from the ratio distribution, dampening with lambda = 1. An empty forget
/// set is the identity transform with p = 100 and no dampened parameters.
std::pair<ModelState, UnlearnReport> assd_unlearn(
    const ModelState& model, const ImportanceVector& imp_full,
    const ImportanceVector& imp_forget, std::int64_t forget_size,
    std::int64_t full_size, const AssdOptions& opts = {});

struct SweepRow {
  double alpha = 0.0;
  double retain_acc = 0.0;
  double forget_acc = 0.0;
  double mia = 0.0;
  std::int64_t dampened_count = 0;
};

/// Applies ssd_dampen (lambda = 1) per grid point to a fresh copy of the
/// model and records accuracies plus the membership-inference score of the
/// forget set (attacker trained on retain-vs-test losses).
std::vector<SweepRow> alpha_sweep(const ModelState& model,
                                  const ImportanceVector& imp_full,
                                  const ImportanceVector& imp_forget,
                                  const std::vector<double>& alpha_grid,
                                  const TabularDataset& retain,
                                  const TabularDataset& forget,
                                  const TabularDataset& test,
                                  std::uint64_t seed);

/// CSV with header alpha,retain_acc,forget_acc,mia,dampened_count.
std::string sweep_to_csv(const std::vector<SweepRow>& rows);

}  // namespace dampen
