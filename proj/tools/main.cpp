// dampen: train tabular classifiers, compute Fisher importances, and remove
// the influence of bad training rows by selective synaptic dampening.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dampen/checkpoint.hpp"
#include "dampen/csv.hpp"
#include "dampen/data.hpp"
#include "dampen/fisher.hpp"
#include "dampen/harness.hpp"
#include "dampen/mia.hpp"
#include "dampen/nn.hpp"
#include "dampen/textio.hpp"
#include "dampen/unlearn.hpp"

namespace {

using nlohmann::json;

/// Command-line or config mistakes; exit code 1 instead of 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<int> parse_hidden(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      out.push_back(std::stoi(part));
    } catch (const std::exception&) {
      throw UsageError("bad --hidden value: '" + part + "'");
    }
  }
  if (out.empty()) throw UsageError("--hidden needs at least one layer");
  return out;
}

// "NxW" tags ("3x100") or explicit width lists ("100,100,100").
std::vector<int> parse_model_tag(const std::string& tag) {
  const std::size_t x = tag.find('x');
  if (x != std::string::npos && tag.find(',') == std::string::npos) {
    try {
      const int layers = std::stoi(tag.substr(0, x));
      const int width = std::stoi(tag.substr(x + 1));
      if (layers < 1 || width < 1) throw std::invalid_argument("");
      return std::vector<int>(layers, width);
    } catch (const std::exception&) {
      throw UsageError("bad model size tag: '" + tag + "'");
    }
  }
  return parse_hidden(tag);
}

std::vector<int> read_rows_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open rows file: " + path.string());
  std::vector<int> rows;
  long long v = 0;
  while (in >> v) rows.push_back(static_cast<int>(v));
  if (rows.empty()) throw UsageError("rows file is empty: " + path.string());
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  return rows;
}

struct DatasetArgs {
  std::string data_path;
  std::string schema_path;
  double test_fraction = 0.2;
};

void add_dataset_options(CLI::App* cmd, DatasetArgs& args) {
  cmd->add_option("--data", args.data_path, "Input CSV dataset")->required();
  cmd->add_option("--schema", args.schema_path, "Schema config (JSON)")
      ->required();
  cmd->add_option("--test-fraction", args.test_fraction,
                  "Temporal test split fraction; 0 trains on all rows")
      ->capture_default_str();
}

struct LoadedData {
  dampen::TabularDataset full;
  dampen::TabularDataset train;
  dampen::TabularDataset test;  // empty when test_fraction == 0
  bool has_test = false;
};

LoadedData load_split(const DatasetArgs& args, bool verbose) {
  dampen::LoadReport report;
  LoadedData out;
  out.full = dampen::load_csv(args.data_path,
                              dampen::load_schema(args.schema_path), &report);
  if (verbose) {
    std::cerr << "loaded " << report.rows_read << " rows ("
              << report.rows_dropped << " dropped), "
              << out.full.feature_dim() << " features, "
              << out.full.num_classes << " classes\n";
  }
  if (args.test_fraction == 0.0) {
    out.train = out.full;
    return out;
  }
  auto [train, test] = dampen::temporal_split(out.full, args.test_fraction);
  out.train = std::move(train);
  out.test = std::move(test);
  out.has_test = true;
  return out;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  DatasetArgs data;
  std::string hidden = "100,100,100";
  bool no_batch_norm = false;
  dampen::TrainConfig cfg;
  std::string out;
  bool verbose = false;
};

int cmd_train(const TrainArgs& args) {
  LoadedData data = load_split(args.data, args.verbose);

  dampen::ModelSpec spec;
  spec.input_dim = data.train.feature_dim();
  spec.hidden_layers = parse_hidden(args.hidden);
  spec.num_classes = data.train.num_classes;
  spec.batch_norm = !args.no_batch_norm;

  dampen::ModelState model = dampen::init_model(spec, args.cfg.seed);
  model = dampen::train(model, data.train, args.cfg);
  dampen::save_checkpoint(model, args.out);

  std::cout << "train_acc " << dampen::evaluate_accuracy(model, data.train)
            << '\n';
  if (data.has_test)
    std::cout << "test_acc " << dampen::evaluate_accuracy(model, data.test)
              << '\n';
  std::cout << "checkpoint " << args.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// importances

struct ImportanceArgs {
  DatasetArgs data;
  std::string ckpt;
  std::string rows_file;
  std::string scenario_file;
  int workers = 1;
  std::string out;
  bool verbose = false;
};

std::vector<int> selected_rows(const std::string& rows_file,
                               const std::string& scenario_file) {
  if (!rows_file.empty() && !scenario_file.empty())
    throw UsageError("--rows and --scenario are mutually exclusive");
  if (!rows_file.empty()) return read_rows_file(rows_file);
  if (!scenario_file.empty())
    return dampen::load_scenario(scenario_file).flipped_indices;
  return {};
}

int cmd_importances(const ImportanceArgs& args) {
  LoadedData data = load_split(args.data, args.verbose);
  dampen::ModelState model = dampen::load_checkpoint(args.ckpt);

  dampen::TabularDataset target = data.train;
  const std::vector<int> rows = selected_rows(args.rows_file, args.scenario_file);
  if (!rows.empty()) target = data.train.subset(rows);

  dampen::ImportanceVector iv =
      dampen::compute_importances(model, target, args.workers);
  dampen::persist_importances(iv, args.out);
  std::cout << "samples " << iv.sample_count << '\n';
  std::cout << "importances " << args.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// unlearn

struct UnlearnArgs {
  std::string ckpt;
  std::string full_path;
  std::string forget_path;
  double alpha = 0.0;
  bool alpha_set = false;
  double lambda = 1.0;
  double log_base = 2.718281828459045;
  std::string mode = "top-fraction";
  std::string out;
  std::string report_path;
};

int cmd_unlearn(const UnlearnArgs& args) {
  dampen::ModelState model = dampen::load_checkpoint(args.ckpt);
  dampen::ImportanceVector full = dampen::load_importances(args.full_path);
  dampen::ImportanceVector forget = dampen::load_importances(args.forget_path);
  for (const auto* iv : {&full, &forget}) {
    if (!dampen::fingerprint_matches(*iv, model))
      std::cerr << "warning: importances fingerprint " << iv->model_fingerprint
                << " does not match this checkpoint\n";
  }

  dampen::ModelState out_model = model;
  dampen::UnlearnReport report;
  if (args.alpha_set) {
    dampen::SSDConfig cfg;
    cfg.alpha = args.alpha;
    cfg.lambda = args.lambda;
    std::tie(out_model, report) = dampen::ssd_dampen(model, full, forget, cfg);
  } else {
    dampen::AssdOptions opts;
    opts.log_base = args.log_base;
    if (args.mode == "formula") {
      opts.mode = dampen::AlphaMode::full_over_forget;
    } else if (args.mode == "top-fraction") {
      opts.mode = dampen::AlphaMode::top_forget_fraction;
    } else {
      throw UsageError("--mode must be 'formula' or 'top-fraction'");
    }
    std::tie(out_model, report) = dampen::assd_unlearn(
        model, full, forget, forget.sample_count, full.sample_count, opts);
  }

  dampen::save_checkpoint(out_model, args.out);
  const std::string text = dampen::serialize_report(report);
  if (!args.report_path.empty()) dampen::write_file(args.report_path, text);
  std::cout << text;
  std::cout << "checkpoint " << args.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// mia

struct MiaArgs {
  DatasetArgs data;
  std::string ckpt;
  std::string rows_file;
  std::string scenario_file;
  std::uint64_t seed = 0;
  bool verbose = false;
};

int cmd_mia(const MiaArgs& args) {
  if (args.data.test_fraction <= 0.0)
    throw UsageError("mia needs a temporal test split (--test-fraction > 0)");
  LoadedData data = load_split(args.data, args.verbose);

  const std::vector<int> rows = selected_rows(args.rows_file, args.scenario_file);
  if (rows.empty()) throw UsageError("mia needs --rows or --scenario");

  std::vector<int> retain_rows;
  {
    std::set<int> forget_set(rows.begin(), rows.end());
    for (int i = 0; i < data.train.rows(); ++i)
      if (!forget_set.count(i)) retain_rows.push_back(i);
  }
  if (retain_rows.empty()) throw UsageError("forget rows cover the whole split");

  dampen::ModelState model = dampen::load_checkpoint(args.ckpt);
  const dampen::TabularDataset retain = data.train.subset(retain_rows);
  const dampen::TabularDataset forget = data.train.subset(rows);

  dampen::AttackModel attacker = dampen::fit_attacker(
      dampen::to_vector(dampen::per_sample_losses(model, retain)),
      dampen::to_vector(dampen::per_sample_losses(model, data.test)), args.seed);
  if (attacker.degenerate)
    std::cerr << "warning: degenerate attacker (all losses identical)\n";
  const double score = dampen::mia_score(
      attacker, dampen::to_vector(dampen::per_sample_losses(model, forget)));
  std::cout << "mia " << score << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepArgs {
  DatasetArgs data;
  std::string ckpt;
  std::string rows_file;
  std::string scenario_file;
  std::string grid;      // comma-separated alphas
  std::string grid_log;  // "lo:hi:count"
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out;
  bool verbose = false;
};

std::vector<double> parse_grid(const SweepArgs& args) {
  std::vector<double> grid;
  if (!args.grid.empty() && !args.grid_log.empty())
    throw UsageError("--grid and --grid-log are mutually exclusive");
  if (!args.grid.empty()) {
    std::stringstream ss(args.grid);
    std::string part;
    while (std::getline(ss, part, ',')) grid.push_back(dampen::parse_double(part));
  } else if (!args.grid_log.empty()) {
    std::stringstream ss(args.grid_log);
    std::string lo_s, hi_s, count_s;
    if (!std::getline(ss, lo_s, ':') || !std::getline(ss, hi_s, ':') ||
        !std::getline(ss, count_s, ':'))
      throw UsageError("--grid-log expects lo:hi:count");
    const double lo = dampen::parse_double(lo_s);
    const double hi = dampen::parse_double(hi_s);
    const int count = static_cast<int>(dampen::parse_int(count_s));
    if (!(lo > 0.0) || !(hi > lo) || count < 2)
      throw UsageError("--grid-log needs 0 < lo < hi and count >= 2");
    for (int i = 0; i < count; ++i) {
      const double t = static_cast<double>(i) / (count - 1);
      grid.push_back(lo * std::pow(hi / lo, t));
    }
  } else {
    throw UsageError("sweep needs --grid or --grid-log");
  }
  if (!std::is_sorted(grid.begin(), grid.end()))
    throw UsageError("alpha grid must be ascending");
  return grid;
}

int cmd_sweep(const SweepArgs& args) {
  if (args.data.test_fraction <= 0.0)
    throw UsageError("sweep needs a temporal test split (--test-fraction > 0)");
  LoadedData data = load_split(args.data, args.verbose);
  const std::vector<int> rows = selected_rows(args.rows_file, args.scenario_file);
  if (rows.empty()) throw UsageError("sweep needs --rows or --scenario");

  std::vector<int> retain_rows;
  {
    std::set<int> forget_set(rows.begin(), rows.end());
    for (int i = 0; i < data.train.rows(); ++i)
      if (!forget_set.count(i)) retain_rows.push_back(i);
  }
  dampen::ModelState model = dampen::load_checkpoint(args.ckpt);
  const dampen::TabularDataset retain = data.train.subset(retain_rows);
  const dampen::TabularDataset forget = data.train.subset(rows);

  const dampen::ImportanceVector full =
      dampen::compute_importances(model, data.train, args.workers);
  const dampen::ImportanceVector fscore =
      dampen::compute_importances(model, forget, args.workers);

  const std::vector<dampen::SweepRow> table = dampen::alpha_sweep(
      model, full, fscore, parse_grid(args), retain, forget, data.test, args.seed);
  dampen::write_file(args.out, dampen::sweep_to_csv(table));
  std::cout << "sweep " << args.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// experiment

struct ExperimentArgs {
  std::string config_path;
  std::string out_dir;
  int workers = 1;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed_override;
  bool verbose = false;
};

void require_keys(const json& obj, const std::set<std::string>& allowed,
                  const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key()))
      throw UsageError("unknown key '" + it.key() + "' in " + where);
  }
}

void apply_override(json& root, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw UsageError("override must look like key=value: '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  json* node = &root;
  std::stringstream ss(path);
  std::string key, next;
  std::getline(ss, key, '.');
  while (std::getline(ss, next, '.')) {
    node = &(*node)[key];
    if (!node->is_object() && !node->is_null())
      throw UsageError("override path '" + path + "' crosses a non-object");
    key = next;
  }
  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;  // plain string
  (*node)[key] = parsed;
}

dampen::TrainConfig train_config_from_json(const json& obj) {
  require_keys(obj,
               {"epochs", "learning_rate", "lr_decay", "weight_decay",
                "momentum", "batch_size"},
               "train");
  dampen::TrainConfig cfg;
  cfg.epochs = obj.value("epochs", cfg.epochs);
  cfg.learning_rate = obj.value("learning_rate", cfg.learning_rate);
  cfg.lr_decay = obj.value("lr_decay", cfg.lr_decay);
  cfg.weight_decay = obj.value("weight_decay", cfg.weight_decay);
  cfg.momentum = obj.value("momentum", cfg.momentum);
  cfg.batch_size = obj.value("batch_size", cfg.batch_size);
  return cfg;
}

dampen::SyntheticConfig synthetic_config_from_json(const json& obj) {
  require_keys(obj,
               {"n", "d", "classes", "seed", "clusters", "center_spread",
                "feature_noise", "teacher_hidden", "logit_scale", "label_noise",
                "power_exponent"},
               "dataset.synthetic");
  dampen::SyntheticConfig cfg;
  cfg.n = obj.value("n", cfg.n);
  cfg.d = obj.value("d", cfg.d);
  cfg.num_classes = obj.value("classes", cfg.num_classes);
  cfg.seed = obj.value("seed", cfg.seed);
  cfg.clusters = obj.value("clusters", cfg.clusters);
  cfg.center_spread = obj.value("center_spread", cfg.center_spread);
  cfg.feature_noise = obj.value("feature_noise", cfg.feature_noise);
  cfg.teacher_hidden = obj.value("teacher_hidden", cfg.teacher_hidden);
  cfg.logit_scale = obj.value("logit_scale", cfg.logit_scale);
  cfg.label_noise = obj.value("label_noise", cfg.label_noise);
  cfg.power_exponent = obj.value("power_exponent", cfg.power_exponent);
  return cfg;
}

int cmd_experiment(const ExperimentArgs& args) {
  json root;
  try {
    root = json::parse(dampen::read_file(args.config_path));
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw UsageError("config must be a JSON object");
  for (const std::string& assignment : args.overrides)
    apply_override(root, assignment);

  require_keys(root,
               {"dataset", "models", "rates", "scenarios", "base_seed",
                "test_fraction", "train"},
               "experiment config");
  if (!root.contains("dataset"))
    throw UsageError("experiment config is missing 'dataset'");
  if (!root.contains("models"))
    throw UsageError("experiment config is missing 'models'");

  const json& dataset = root["dataset"];
  require_keys(dataset, {"csv", "schema", "synthetic"}, "dataset");
  dampen::TabularDataset full;
  if (dataset.contains("synthetic")) {
    full = dampen::generate_synthetic(
        synthetic_config_from_json(dataset["synthetic"]));
  } else if (dataset.contains("csv") && dataset.contains("schema")) {
    dampen::LoadReport report;
    full = dampen::load_csv(dataset["csv"].get<std::string>(),
                            dampen::load_schema(dataset["schema"].get<std::string>()),
                            &report);
    if (args.verbose)
      std::cerr << "loaded " << report.rows_read << " rows ("
                << report.rows_dropped << " dropped)\n";
  } else {
    throw UsageError("dataset needs either 'synthetic' or 'csv' + 'schema'");
  }

  dampen::ExperimentConfig cfg;
  for (const json& entry : root["models"]) {
    dampen::ModelSpec spec;
    spec.input_dim = full.feature_dim();
    spec.num_classes = full.num_classes;
    if (entry.is_string())
      spec.hidden_layers = parse_model_tag(entry.get<std::string>());
    else
      spec.hidden_layers = entry.get<std::vector<int>>();
    cfg.specs.push_back(std::move(spec));
  }
  if (root.contains("rates"))
    cfg.rates = root["rates"].get<std::vector<double>>();
  cfg.n_scenarios = root.value("scenarios", cfg.n_scenarios);
  cfg.base_seed = root.value("base_seed", cfg.base_seed);
  if (args.seed_override) cfg.base_seed = *args.seed_override;
  cfg.test_fraction = root.value("test_fraction", cfg.test_fraction);
  if (root.contains("train")) cfg.train = train_config_from_json(root["train"]);
  cfg.workers = args.workers;

  std::filesystem::create_directories(args.out_dir);
  std::vector<dampen::ScenarioResult> completed;
  int done = 0;
  const int total =
      static_cast<int>(cfg.specs.size() * cfg.rates.size()) * cfg.n_scenarios;
  auto on_result = [&](const dampen::ScenarioResult& r) {
    completed.push_back(r);
    ++done;
    if (args.verbose)
      std::cerr << "scenario " << done << "/" << total << " " << r.model_size
                << " rate=" << r.error_rate << " seed=" << r.seed << '\n';
  };

  try {
    const dampen::AggregateReport report =
        dampen::run_experiment(full, cfg, on_result);
    dampen::export_results(report, args.out_dir);
  } catch (const std::exception& e) {
    dampen::export_scenarios(
        completed, std::filesystem::path(args.out_dir) / "partial_scenarios.csv");
    throw;
  }
  std::cout << "scenarios " << total << '\n';
  std::cout << "aggregate " << (std::filesystem::path(args.out_dir) / "aggregate.csv").string()
            << '\n';
  std::cout << "per_scenario "
            << (std::filesystem::path(args.out_dir) / "scenarios.csv").string()
            << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  int n = 20000;
  int d = 20;
  int classes = 3;
  std::uint64_t seed = 0;
  std::string out;
  std::string schema_out;
};

int cmd_synth(const SynthArgs& args) {
  dampen::SyntheticConfig cfg;
  cfg.n = args.n;
  cfg.d = args.d;
  cfg.num_classes = args.classes;
  cfg.seed = args.seed;
  const dampen::TabularDataset ds = dampen::generate_synthetic(cfg);

  std::ostringstream out;
  for (int c = 0; c < args.d; ++c) out << 'f' << c << ',';
  out << "label,timestamp\n";
  for (int i = 0; i < ds.rows(); ++i) {
    for (int c = 0; c < args.d; ++c)
      out << dampen::format_double(ds.raw.numeric[c][i]) << ',';
    out << ds.labels[i] << ',' << dampen::format_double(ds.timestamps[i]) << '\n';
  }
  dampen::write_file(args.out, out.str());

  if (!args.schema_out.empty()) {
    json schema;
    schema["numeric_columns"] = json::array();
    for (int c = 0; c < args.d; ++c)
      schema["numeric_columns"].push_back("f" + std::to_string(c));
    schema["categorical_columns"] = json::array();
    schema["timestamp_column"] = "timestamp";
    schema["label"] = {{"mode", "direct"}, {"column", "label"}};
    json classes = json::array();
    for (int k = 0; k < args.classes; ++k) classes.push_back(std::to_string(k));
    schema["label"]["classes"] = classes;
    dampen::write_file(args.schema_out, schema.dump(2) + "\n");
  }
  std::cout << "dataset " << args.out << '\n';
  return 0;
}

void add_train_config_options(CLI::App* cmd, dampen::TrainConfig& cfg) {
  cmd->add_option("--epochs", cfg.epochs, "Training epochs")
      ->capture_default_str();
  cmd->add_option("--lr", cfg.learning_rate, "Initial learning rate")
      ->capture_default_str();
  cmd->add_option("--lr-decay", cfg.lr_decay, "Per-epoch learning rate decay")
      ->capture_default_str();
  cmd->add_option("--weight-decay", cfg.weight_decay,
                  "L2 penalty on linear weights")
      ->capture_default_str();
  cmd->add_option("--momentum", cfg.momentum, "SGD momentum")
      ->capture_default_str();
  cmd->add_option("--batch", cfg.batch_size, "Mini-batch size")
      ->capture_default_str();
  cmd->add_option("--seed", cfg.seed, "RNG seed")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dampen: selective synaptic dampening toolkit for unlearning "
               "mislabeled tabular training data"};
  app.require_subcommand(0, 1);

  TrainArgs train_args;
  CLI::App* train_cmd =
      app.add_subcommand("train", "Train a classifier and save a checkpoint");
  add_dataset_options(train_cmd, train_args.data);
  train_cmd->add_option("--hidden", train_args.hidden,
                        "Hidden layer widths, comma separated")
      ->capture_default_str();
  train_cmd->add_flag("--no-batch-norm", train_args.no_batch_norm,
                      "Disable batch normalization");
  add_train_config_options(train_cmd, train_args.cfg);
  train_cmd->add_option("--out", train_args.out, "Checkpoint output path")
      ->required();
  train_cmd->add_flag("-v,--verbose", train_args.verbose, "Verbose progress");

  ImportanceArgs imp_args;
  CLI::App* imp_cmd = app.add_subcommand(
      "importances",
      "Compute and store diagonal Fisher importances for a checkpoint");
  add_dataset_options(imp_cmd, imp_args.data);
  imp_cmd->add_option("--ckpt", imp_args.ckpt, "Model checkpoint")->required();
  imp_cmd->add_option("--rows", imp_args.rows_file,
                      "Restrict to these training-split row indices (one per "
                      "line); default is the whole training split");
  imp_cmd->add_option("--scenario", imp_args.scenario_file,
                      "Restrict to the flipped rows of a scenario record");
  imp_cmd->add_option("--workers", imp_args.workers, "Worker threads")
      ->capture_default_str();
  imp_cmd->add_option("--out", imp_args.out, "Importance file output path")
      ->required();
  imp_cmd->add_flag("-v,--verbose", imp_args.verbose, "Verbose progress");

  UnlearnArgs unlearn_args;
  CLI::App* unlearn_cmd = app.add_subcommand(
      "unlearn", "Dampen a checkpoint; adaptive by default, fixed with --alpha");
  unlearn_cmd->add_option("--ckpt", unlearn_args.ckpt, "Model checkpoint")
      ->required();
  unlearn_cmd->add_option("--full", unlearn_args.full_path,
                          "Importances over the full training data")
      ->required();
  unlearn_cmd->add_option("--forget", unlearn_args.forget_path,
                          "Importances over the forget set")
      ->required();
  CLI::Option* alpha_opt = unlearn_cmd->add_option(
      "--alpha", unlearn_args.alpha, "Fixed selection weighting (plain SSD)");
  unlearn_cmd->add_option("--lambda", unlearn_args.lambda,
                          "Dampening constant for fixed SSD")
      ->capture_default_str();
  unlearn_cmd->add_option("--log-base", unlearn_args.log_base,
                          "Log base of the percentile rule")
      ->capture_default_str();
  unlearn_cmd->add_option("--mode", unlearn_args.mode,
                          "Adaptive alpha mode: top-fraction | formula")
      ->capture_default_str();
  unlearn_cmd->add_option("--out", unlearn_args.out, "Dampened checkpoint path")
      ->required();
  unlearn_cmd->add_option("--report", unlearn_args.report_path,
                          "Also write the unlearn report to this file");

  MiaArgs mia_args;
  CLI::App* mia_cmd = app.add_subcommand(
      "mia", "Membership-inference score of a forget set against a checkpoint");
  add_dataset_options(mia_cmd, mia_args.data);
  mia_cmd->add_option("--ckpt", mia_args.ckpt, "Model checkpoint")->required();
  mia_cmd->add_option("--rows", mia_args.rows_file,
                      "Forget rows (training-split indices, one per line)");
  mia_cmd->add_option("--scenario", mia_args.scenario_file,
                      "Forget rows from a scenario record");
  mia_cmd->add_option("--seed", mia_args.seed, "Attacker balancing seed")
      ->capture_default_str();
  mia_cmd->add_flag("-v,--verbose", mia_args.verbose, "Verbose progress");

  SweepArgs sweep_args;
  CLI::App* sweep_cmd = app.add_subcommand(
      "sweep", "Dampen across an alpha grid and record metrics per point");
  add_dataset_options(sweep_cmd, sweep_args.data);
  sweep_cmd->add_option("--ckpt", sweep_args.ckpt, "Model checkpoint")
      ->required();
  sweep_cmd->add_option("--rows", sweep_args.rows_file,
                        "Forget rows (training-split indices, one per line)");
  sweep_cmd->add_option("--scenario", sweep_args.scenario_file,
                        "Forget rows from a scenario record");
  sweep_cmd->add_option("--grid", sweep_args.grid,
                        "Ascending comma-separated alpha values");
  sweep_cmd->add_option("--grid-log", sweep_args.grid_log,
                        "Log-spaced grid as lo:hi:count");
  sweep_cmd->add_option("--seed", sweep_args.seed, "Attacker balancing seed")
      ->capture_default_str();
  sweep_cmd->add_option("--workers", sweep_args.workers,
                        "Worker threads for importance computation")
      ->capture_default_str();
  sweep_cmd->add_option("--out", sweep_args.out, "Sweep CSV output path")
      ->required();
  sweep_cmd->add_flag("-v,--verbose", sweep_args.verbose, "Verbose progress");

  ExperimentArgs exp_args;
  CLI::App* exp_cmd = app.add_subcommand(
      "experiment", "Run the error-correction study from a JSON config");
  exp_cmd->add_option("--config", exp_args.config_path, "Experiment config JSON")
      ->required();
  exp_cmd->add_option("--out", exp_args.out_dir, "Output directory")->required();
  exp_cmd->add_option("--workers", exp_args.workers,
                      "Parallel scenario workers")
      ->capture_default_str();
  exp_cmd->add_option("--set", exp_args.overrides,
                      "Config override key=value (repeatable; dotted paths "
                      "like train.epochs=10); flags win over the file");
  std::uint64_t exp_seed = 0;
  CLI::Option* exp_seed_opt =
      exp_cmd->add_option("--seed", exp_seed, "Override base_seed");
  exp_cmd->add_flag("-v,--verbose", exp_args.verbose, "Verbose progress");

  SynthArgs synth_args;
  CLI::App* synth_cmd = app.add_subcommand(
      "synth", "Generate the synthetic benchmark dataset as a CSV");
  synth_cmd->add_option("--n", synth_args.n, "Rows")->capture_default_str();
  synth_cmd->add_option("--d", synth_args.d, "Feature columns")
      ->capture_default_str();
  synth_cmd->add_option("--classes", synth_args.classes, "Class count")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth_args.seed, "Generator seed")
      ->capture_default_str();
  synth_cmd->add_option("--out", synth_args.out, "Dataset CSV output path")
      ->required();
  synth_cmd->add_option("--schema-out", synth_args.schema_out,
                        "Also write a matching schema config here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_args);
    if (imp_cmd->parsed()) return cmd_importances(imp_args);
    if (unlearn_cmd->parsed()) {
      unlearn_args.alpha_set = alpha_opt->count() > 0;
      return cmd_unlearn(unlearn_args);
    }
    if (mia_cmd->parsed()) return cmd_mia(mia_args);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_args);
    if (exp_cmd->parsed()) {
      if (exp_seed_opt->count() > 0) exp_args.seed_override = exp_seed;
      return cmd_experiment(exp_args);
    }
    if (synth_cmd->parsed()) return cmd_synth(synth_args);
    std::cout << app.help();
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
