#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <fstream>
#include <sstream>

#include "dampen/csv.hpp"
#include "dampen/harness.hpp"
#include "dampen/textio.hpp"
#include "helpers.hpp"

using namespace dampen;
using testutil::TempDir;

namespace {

// Small, fast study setup shared by the harness tests.
TabularDataset tiny_data() { return generate_synthetic(1200, 6, 3, 17); }

ModelSpec tiny_spec() {
  ModelSpec spec;
  spec.input_dim = 6;
  spec.hidden_layers = {16};
  spec.num_classes = 3;
  spec.batch_norm = true;
  return spec;
}

TrainConfig tiny_cfg() {
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.learning_rate = 0.1;
  cfg.batch_size = 64;
  return cfg;
}

}  // namespace

TEST_CASE("model size tags") {
  ModelSpec spec = tiny_spec();
  spec.hidden_layers = {100, 100, 100};
  CHECK(model_size_tag(spec) == "3x100");
  spec.hidden_layers = {50, 50};
  CHECK(model_size_tag(spec) == "2x50");
  spec.hidden_layers = {100, 50};
  CHECK(model_size_tag(spec) == "100-50");
}

TEST_CASE("zero-rate scenario degenerates to the baseline") {
  const ScenarioResult r =
      run_scenario(tiny_data(), tiny_spec(), tiny_cfg(), 0.0, 42);
  CHECK(r.assd.retain_acc == r.baseline.retain_acc);
  CHECK(r.assd.test_acc == r.baseline.test_acc);
  CHECK(r.unlearn_report.dampened_count == 0);
  CHECK(r.unlearn_report.percentile_p == 100.0);
  CHECK(std::isnan(r.baseline.mia));  // no forget rows to attack
  CHECK(r.retrain_forget_rows_seen == 0);
}

TEST_CASE("scenarios are deterministic per seed") {
  const TabularDataset data = tiny_data();
  const ScenarioResult a = run_scenario(data, tiny_spec(), tiny_cfg(), 0.05, 7);
  const ScenarioResult b = run_scenario(data, tiny_spec(), tiny_cfg(), 0.05, 7);
  CHECK(a.baseline.retain_acc == b.baseline.retain_acc);
  CHECK(a.baseline.test_acc == b.baseline.test_acc);
  CHECK(a.retrain.test_acc == b.retrain.test_acc);
  CHECK(a.finetune.test_acc == b.finetune.test_acc);
  CHECK(a.assd.test_acc == b.assd.test_acc);
  CHECK(a.baseline.mia == b.baseline.mia);
  CHECK(a.unlearn_report.chosen_alpha == b.unlearn_report.chosen_alpha);
  CHECK(a.unlearn_report.dampened_count == b.unlearn_report.dampened_count);
}

TEST_CASE("scenario audits retrain isolation and fills the report") {
  const ScenarioResult r =
      run_scenario(tiny_data(), tiny_spec(), tiny_cfg(), 0.05, 3);
  CHECK(r.retrain_forget_rows_seen == 0);
  CHECK(r.unlearn_report.forget_size == 48);  // 5% of 960 training rows
  CHECK(r.unlearn_report.full_size == 960);
  CHECK(r.baseline.retain_acc >= 0.0);
  CHECK(r.baseline.retain_acc <= 1.0);
  CHECK(r.baseline.mia >= 0.0);
  CHECK(r.baseline.mia <= 100.0);
}

TEST_CASE("experiment aggregates cells and is worker independent") {
  const TabularDataset data = tiny_data();
  ExperimentConfig cfg;
  cfg.specs = {tiny_spec()};
  cfg.rates = {0.0, 0.05};
  cfg.n_scenarios = 2;
  cfg.base_seed = 100;
  cfg.train = tiny_cfg();
  cfg.workers = 1;
  const AggregateReport a = run_experiment(data, cfg);
  cfg.workers = 2;
  const AggregateReport b = run_experiment(data, cfg);

  REQUIRE(a.cells.size() == 2 * 2 * 4);  // rates x splits x methods
  REQUIRE(a.scenarios.size() == 4);
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    CHECK(a.cells[i].mean == b.cells[i].mean);
    CHECK(a.cells[i].stdev == b.cells[i].stdev);
    CHECK(a.cells[i].model_size == "1x16");
  }
  // n < 5 leaves the significance column undefined
  CHECK(std::isnan(a.cells[0].p_value));
}

TEST_CASE("single-scenario cells have zero std") {
  ExperimentConfig cfg;
  cfg.specs = {tiny_spec()};
  cfg.rates = {0.05};
  cfg.n_scenarios = 1;
  cfg.base_seed = 5;
  cfg.train = tiny_cfg();
  const AggregateReport report = run_experiment(tiny_data(), cfg);
  for (const AggregateCell& cell : report.cells) CHECK(cell.stdev == 0.0);
}

TEST_CASE("significance test conventions") {
  const std::vector<double> same{0.5, 0.5, 0.5, 0.5, 0.5};
  CHECK(significance_test(same, same) == 1.0);
  const std::vector<double> a(30, 0.0);
  const std::vector<double> b(30, 1.0);
  CHECK(significance_test(a, b) < 0.001);
  CHECK_THROWS_AS(significance_test({1, 2}, {1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(significance_test(a, same), std::invalid_argument);
}

TEST_CASE("export round-trips and sorts by baseline test accuracy") {
  TempDir dir("export");
  const TabularDataset data = tiny_data();
  ExperimentConfig cfg;
  cfg.specs = {tiny_spec()};
  cfg.rates = {0.05};
  cfg.n_scenarios = 6;
  cfg.base_seed = 31;
  cfg.train = tiny_cfg();
  cfg.workers = 2;
  const AggregateReport report = run_experiment(data, cfg);
  export_results(report, dir.path());

  const CsvTable scenarios = read_csv(dir.file("scenarios.csv"));
  REQUIRE(scenarios.rows.size() == 6);
  const std::size_t base_test = scenarios.column("baseline_test_acc");
  double prev = -1.0;
  for (const auto& row : scenarios.rows) {
    const double v = parse_double(row[base_test]);
    CHECK(v >= prev);
    prev = v;
  }

  // recompute aggregate means from the per-scenario file
  const CsvTable aggregate = read_csv(dir.file("aggregate.csv"));
  const std::size_t mean_col = aggregate.column("mean");
  const std::size_t split_col = aggregate.column("split");
  const std::size_t method_col = aggregate.column("method");
  for (const auto& row : aggregate.rows) {
    const std::string column_name =
        row[method_col] + "_" + row[split_col] + "_acc";
    const std::size_t col = scenarios.column(column_name);
    double sum = 0.0;
    for (const auto& srow : scenarios.rows) sum += parse_double(srow[col]);
    CHECK(parse_double(row[mean_col]) ==
          doctest::Approx(sum / scenarios.rows.size()).epsilon(1e-9));
  }
}

TEST_CASE("empty scenario list exports a header-only file") {
  TempDir dir("export-empty");
  export_scenarios({}, dir.file("s.csv"));
  const std::string text = read_file(dir.file("s.csv"));
  CHECK(text == scenarios_csv_header() + "\n");
}

TEST_CASE("export is byte-identical across reruns and worker counts") {
  TempDir dir("export-det");
  const TabularDataset data = tiny_data();
  ExperimentConfig cfg;
  cfg.specs = {tiny_spec()};
  cfg.rates = {0.05};
  cfg.n_scenarios = 3;
  cfg.base_seed = 77;
  cfg.train = tiny_cfg();
  export_results(run_experiment(data, cfg), dir.path() / "a");
  export_results(run_experiment(data, cfg), dir.path() / "b");
  cfg.workers = 2;
  export_results(run_experiment(data, cfg), dir.path() / "c");
  const std::string a = read_file(dir.path() / "a" / "scenarios.csv");
  CHECK(a == read_file(dir.path() / "b" / "scenarios.csv"));
  CHECK(a == read_file(dir.path() / "c" / "scenarios.csv"));
  CHECK(read_file(dir.path() / "a" / "aggregate.csv") ==
        read_file(dir.path() / "c" / "aggregate.csv"));
}

TEST_CASE("grid search picks the best validation accuracy") {
  const TabularDataset data = tiny_data();
  TrainConfig base = tiny_cfg();
  base.seed = 3;
  const GridSearchResult result =
      grid_search(data, tiny_spec(), base, {0.03, 0.1}, {0.0, 1e-4});
  REQUIRE(result.table.size() == 4);
  for (const GridPoint& point : result.table)
    CHECK(point.val_acc <= result.best.val_acc);
  CHECK_THROWS_AS(grid_search(data, tiny_spec(), base, {}, {0.0}),
                  std::invalid_argument);
}
