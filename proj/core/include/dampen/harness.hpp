#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dampen/data.hpp"
#include "dampen/nn.hpp"
#include "dampen/unlearn.hpp"

namespace dampen {

struct MethodMetrics {
  double retain_acc = 0.0;  // accuracy on D_r (clean retained training rows)
  double test_acc = 0.0;    // accuracy on the held-out temporal test split
  double mia = 0.0;         // % of forget rows classified as member; NaN at rate 0
  double wall_seconds = 0.0;  // diagnostic only, never exported
};

struct ScenarioResult {
  std::string model_size;  // e.g. "3x100"
  double error_rate = 0.0;
  std::uint64_t seed = 0;
  MethodMetrics baseline;
  MethodMetrics retrain;
  MethodMetrics finetune;
  MethodMetrics assd;
  UnlearnReport unlearn_report;
  std::int64_t retrain_forget_rows_seen = 0;  // audit counter, must stay 0
};

struct AggregateCell {
  std::string model_size;
  double error_rate = 0.0;
  std::string split;   // "train" (= D_r) or "test"
  std::string method;  // baseline | retrain | finetune | assd
  double mean = 0.0;
  double stdev = 0.0;
  int n_scenarios = 0;
  double p_value = 0.0;  // baseline-vs-assd for the cell group; NaN when n < 5
};

struct AggregateReport {
  std::vector<AggregateCell> cells;
  std::vector<ScenarioResult> scenarios;
};

/// "NxW" for uniform hidden widths, otherwise the widths joined with '-'.
std::string model_size_tag(const ModelSpec& spec);

/// One error-correction scenario end to end: temporal split, label
/// injection, baseline / retrain / fine-tune / ASSD, accuracy and MIA for
/// each. The retrained model never sees a forget row (audited).
ScenarioResult run_scenario(const TabularDataset& full_data,
                            const ModelSpec& spec, const TrainConfig& train_cfg,
                            double rate, std::uint64_t seed,
                            double test_fraction = 0.2);

struct ExperimentConfig {
  std::vector<ModelSpec> specs;
  std::vector<double> rates = {0.0025, 0.01, 0.025, 0.05, 0.075, 0.10};
  int n_scenarios = 100;
  std::uint64_t base_seed = 0;
  TrainConfig train;
  double test_fraction = 0.2;
  int workers = 1;
};

/// Runs specs x rates x n_scenarios scenarios (scenario i uses seed
/// base_seed + i, shared across cells so error scenarios are comparable
/// between model sizes). Scenarios are independent jobs; aggregation order
/// is fixed, so results do not depend on the worker count. `on_result` fires
/// as scenarios complete (under a lock), letting callers persist partial
/// results when a later scenario fails.
AggregateReport run_experiment(
    const TabularDataset& full_data, const ExperimentConfig& cfg,
    const std::function<void(const ScenarioResult&)>& on_result = {});

/// Two-sided Wilcoxon signed-rank p-value for paired per-scenario
/// accuracies. Requires equal lengths >= 5; identical vectors give 1.0.
double significance_test(const std::vector<double>& baseline_accs,
                         const std::vector<double>& unlearn_accs);

/// Writes aggregate.csv (one row per model size / rate / split / method) and
/// scenarios.csv (one row per scenario, sorted ascending by baseline test
/// accuracy). Floats carry 17 significant digits.
void export_results(const AggregateReport& report,
                    const std::filesystem::path& dir);
void export_scenarios(const std::vector<ScenarioResult>& scenarios,
                      const std::filesystem::path& file);

std::string scenarios_csv_header();

struct GridPoint {
  double learning_rate = 0.0;
  double weight_decay = 0.0;
  double val_acc = 0.0;
};

struct GridSearchResult {
  std::vector<GridPoint> table;
  GridPoint best;
};

/// Fixed-grid replacement for a black-box hyperparameter search: trains on
/// the earlier 80% of `clean_train` per (lr, wd) pair and scores validation
/// accuracy on the last 20%; best by validation accuracy, first grid point
/// wins ties.
GridSearchResult grid_search(const TabularDataset& clean_train,
                             const ModelSpec& spec, const TrainConfig& base,
                             const std::vector<double>& lr_grid,
                             const std::vector<double>& wd_grid);

}  // namespace dampen
