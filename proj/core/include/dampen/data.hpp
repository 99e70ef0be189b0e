#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dampen {

/// Column roles for a CSV table. Feature columns are either z-scored
/// numerics or one-hot categoricals; the label is either read directly from
/// a column or derived from real vs. scheduled delivery days.
struct SchemaConfig {
  enum class LabelMode { direct, delay };

  std::vector<std::string> numeric_columns;
  std::vector<std::string> categorical_columns;
  std::string timestamp_column;

  LabelMode label_mode = LabelMode::direct;
  // direct mode: the class index of a row is the position of its label value
  // in `classes`.
  std::string label_column;
  std::vector<std::string> classes;
  // delay mode: class 0/1/2 = early/on-time/delayed, three classes.
  std::string real_days_column;
  std::string scheduled_days_column;

  int num_classes() const;
  void validate() const;  // throws std::invalid_argument
};

SchemaConfig schema_from_json(const std::string& json_text);
SchemaConfig load_schema(const std::filesystem::path& path);

/// Original column values, kept alongside the processed feature matrix so
/// preprocessing can be refit on a row subset (the training split) without
/// touching the source file.
struct RawColumns {
  std::vector<std::vector<double>> numeric;            // [schema column][row]
  std::vector<std::vector<std::string>> categorical;   // [schema column][row]
};

struct TabularDataset {
  Eigen::MatrixXd features;  // n x d, z-scored numerics then one-hot blocks
  std::vector<int> labels;   // values in [0, num_classes)
  std::vector<double> timestamps;
  std::vector<std::string> feature_names;
  int num_classes = 0;
  std::vector<std::int64_t> row_ids;  // provenance, survives subsetting
  SchemaConfig schema;
  RawColumns raw;

  int rows() const { return static_cast<int>(labels.size()); }
  int feature_dim() const { return static_cast<int>(features.cols()); }

  /// Row-sliced copy; indices refer to current row positions.
  TabularDataset subset(const std::vector<int>& indices) const;
};

/// Builds a dataset directly from a matrix; features double as raw numeric
/// columns so the split/refit pipeline works on it unchanged.
TabularDataset make_dataset(const Eigen::MatrixXd& features,
                            const std::vector<int>& labels, int num_classes);

struct LoadReport {
  std::int64_t rows_read = 0;
  std::int64_t rows_dropped = 0;
};

/// Loads and preprocesses a CSV. Rows with unparseable required fields are
/// dropped and counted. The returned dataset is transformed with statistics
/// fit on all loaded rows; temporal_split refits them on the training rows
/// only before training ever sees the data.
TabularDataset load_csv(const std::filesystem::path& path,
                        const SchemaConfig& schema,
                        LoadReport* report = nullptr);

/// early=0 if real < scheduled, on-time=1 if equal, delayed=2 if real >
/// scheduled. Throws on non-finite input.
int derive_delay_label(double real_days, double scheduled_days);

/// Splits rows by ascending timestamp (stable on ties); the last
/// ceil(test_fraction * n) rows form the test set. Numeric means/variances
/// and categorical vocabularies are refit on the training rows and applied
/// to both splits.
std::pair<TabularDataset, TabularDataset> temporal_split(
    const TabularDataset& data, double test_fraction = 0.2);

/// Everything needed to rebuild a corrupted training set and its forget/
/// retain partition: which rows were flipped, from what, to what.
struct ErrorScenario {
  std::uint64_t seed = 0;
  double error_rate = 0.0;
  std::int64_t train_rows = 0;
  std::vector<int> flipped_indices;  // ascending
  std::vector<int> original_labels;
  std::vector<int> new_labels;
};

/// Flips exactly round(rate * n) distinct uniformly chosen labels, each to a
/// uniformly chosen different class. round() is half-away-from-zero.
std::pair<TabularDataset, ErrorScenario> inject_label_errors(
    const TabularDataset& train, double rate, std::uint64_t seed);

void save_scenario(const ErrorScenario& s, const std::filesystem::path& path);
ErrorScenario load_scenario(const std::filesystem::path& path);

/// Synthetic benchmark generator: Gaussian-mixture features labeled by a
/// seeded random teacher network with additive logit noise; per-class logit
/// offsets are calibrated so class frequencies follow a power law. Cluster
/// weights follow their own power law, giving the long tail of small
/// subpopulations where individual rows can be memorized.
struct SyntheticConfig {
  int n = 20000;
  int d = 20;
  int num_classes = 3;
  std::uint64_t seed = 0;
  int clusters = 8000;
  double cluster_exponent = 0.2;  // cluster g weight proportional to (g+1)^-e
  double center_spread = 3.0;
  double feature_noise = 0.08;
  int teacher_hidden = 32;
  double logit_scale = 3.0;
  double label_noise = 0.45;
  double power_exponent = 1.0;  // class k frequency proportional to (k+1)^-a
};

TabularDataset generate_synthetic(const SyntheticConfig& cfg);
TabularDataset generate_synthetic(int n, int d, int num_classes,
                                  std::uint64_t seed);

}  // namespace dampen
