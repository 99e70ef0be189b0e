#include <benchmark/benchmark.h>

#include "dampen/data.hpp"
#include "dampen/fisher.hpp"
#include "dampen/nn.hpp"
#include "dampen/rng.hpp"
#include "dampen/stats.hpp"
#include "dampen/unlearn.hpp"

using namespace dampen;

namespace {

ModelSpec bench_spec() {
  ModelSpec spec;
  spec.input_dim = 20;
  spec.hidden_layers = {100, 100, 100};
  spec.num_classes = 3;
  return spec;
}

const TabularDataset& bench_data() {
  static const TabularDataset data = generate_synthetic(4096, 20, 3, 1);
  return data;
}

}  // namespace

static void BM_ForwardEval(benchmark::State& state) {
  const ModelState m = init_model(bench_spec(), 1);
  const TabularDataset& data = bench_data();
  Eigen::MatrixXd batch = data.features.topRows(state.range(0));
  for (auto _ : state) {
    Eigen::MatrixXd p = forward(m, batch, Mode::eval);
    benchmark::DoNotOptimize(p.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardEval)->Arg(64)->Arg(256)->Arg(1024);

static void BM_PerSampleGrad(benchmark::State& state) {
  const ModelState m = init_model(bench_spec(), 1);
  const TabularDataset& data = bench_data();
  Eigen::VectorXd grad(m.param_count());
  Eigen::VectorXd x = data.features.row(0).transpose();
  for (auto _ : state) {
    per_sample_grad_into(m, x, data.labels[0], grad);
    benchmark::DoNotOptimize(grad.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PerSampleGrad);

static void BM_TrainEpoch(benchmark::State& state) {
  const ModelState m = init_model(bench_spec(), 1);
  const TabularDataset& data = bench_data();
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 256;
  for (auto _ : state) {
    ModelState out = train(m, data, cfg);
    benchmark::DoNotOptimize(out.linear.back().bias.data());
  }
  state.SetItemsProcessed(state.iterations() * data.rows());
}
BENCHMARK(BM_TrainEpoch);

static void BM_ComputeImportances(benchmark::State& state) {
  const ModelState m = init_model(bench_spec(), 1);
  const TabularDataset& data = bench_data();
  for (auto _ : state) {
    ImportanceVector iv =
        compute_importances(m, data, static_cast<int>(state.range(0)));
    benchmark::DoNotOptimize(iv.values.data());
  }
  state.SetItemsProcessed(state.iterations() * data.rows());
}
BENCHMARK(BM_ComputeImportances)->Arg(1)->Arg(2);

static void BM_SsdDampen(benchmark::State& state) {
  const ModelState m = init_model(bench_spec(), 1);
  const TabularDataset& data = bench_data();
  const ImportanceVector full = compute_importances(m, data);
  const ImportanceVector forget =
      compute_importances(m, data.subset({0, 1, 2, 3, 4, 5, 6, 7}));
  SSDConfig cfg;
  cfg.alpha = 10.0;
  for (auto _ : state) {
    auto [out, report] = ssd_dampen(m, full, forget, cfg);
    benchmark::DoNotOptimize(report.dampened_count);
  }
}
BENCHMARK(BM_SsdDampen);

static void BM_Percentile(benchmark::State& state) {
  Rng rng(5);
  std::vector<double> values(state.range(0));
  for (double& v : values) v = rng.normal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(percentile(values, 98.75));
  }
}
BENCHMARK(BM_Percentile)->Arg(1000)->Arg(100000);

BENCHMARK_MAIN();
