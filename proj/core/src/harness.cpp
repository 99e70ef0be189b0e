#include "dampen/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dampen/fisher.hpp"
#include "dampen/mia.hpp"
#include "dampen/rng.hpp"
#include "dampen/stats.hpp"
#include "dampen/textio.hpp"

namespace dampen {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// Attack protocol: members = retained training rows, nonmembers = test rows,
// scored on the forget rows at their corrupted labels.
double scenario_mia(const ModelState& model, const TabularDataset& retain,
                    const TabularDataset& test, const TabularDataset& forget,
                    std::uint64_t seed) {
  if (forget.rows() == 0) return std::numeric_limits<double>::quiet_NaN();
  AttackModel attacker =
      fit_attacker(to_vector(per_sample_losses(model, retain)),
                   to_vector(per_sample_losses(model, test)), seed);
  return mia_score(attacker, to_vector(per_sample_losses(model, forget)));
}

void check_finite_metrics(const ScenarioResult& r) {
  const MethodMetrics* all[] = {&r.baseline, &r.retrain, &r.finetune, &r.assd};
  for (const MethodMetrics* m : all) {
    if (!std::isfinite(m->retain_acc) || !std::isfinite(m->test_acc)) {
      std::ostringstream oss;
      oss << "non-finite metric in scenario seed=" << r.seed
          << " rate=" << r.error_rate << " model=" << r.model_size;
      throw std::runtime_error(oss.str());
    }
  }
}

const MethodMetrics& method_of(const ScenarioResult& r, const std::string& name) {
  if (name == "baseline") return r.baseline;
  if (name == "retrain") return r.retrain;
  if (name == "finetune") return r.finetune;
  return r.assd;
}

std::string csv_num(double v) { return format_double(v); }

}  // namespace

std::string model_size_tag(const ModelSpec& spec) {
  const std::vector<int>& h = spec.hidden_layers;
  const bool uniform =
      std::all_of(h.begin(), h.end(), [&](int w) { return w == h.front(); });
  if (uniform)
    return std::to_string(h.size()) + "x" + std::to_string(h.front());
  std::string tag;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (i) tag += '-';
    tag += std::to_string(h[i]);
  }
  return tag;
}

ScenarioResult run_scenario(const TabularDataset& full_data,
                            const ModelSpec& spec, const TrainConfig& train_cfg,
                            double rate, std::uint64_t seed,
                            double test_fraction) {
  spec.validate();
  train_cfg.validate();

  auto [clean_train, test] = temporal_split(full_data, test_fraction);
  auto [train_set, scenario] =
      inject_label_errors(clean_train, rate, mix_seed(seed, "inject"));

  std::vector<int> retain_idx;
  retain_idx.reserve(train_set.rows() - scenario.flipped_indices.size());
  {
    std::size_t f = 0;
    for (int i = 0; i < train_set.rows(); ++i) {
      if (f < scenario.flipped_indices.size() &&
          scenario.flipped_indices[f] == i) {
        ++f;
        continue;
      }
      retain_idx.push_back(i);
    }
  }
  const TabularDataset retain = train_set.subset(retain_idx);
  const TabularDataset forget = train_set.subset(scenario.flipped_indices);

  ScenarioResult result;
  result.model_size = model_size_tag(spec);
  result.error_rate = rate;
  result.seed = seed;

  // Audit: the retrain input must share no provenance with the forget rows.
  {
    std::set<std::int64_t> forget_ids(forget.row_ids.begin(),
                                      forget.row_ids.end());
    for (std::int64_t id : retain.row_ids)
      if (forget_ids.count(id)) ++result.retrain_forget_rows_seen;
    if (result.retrain_forget_rows_seen != 0)
      throw std::runtime_error("retrain audit: forget rows leaked into D_r");
  }

  const std::uint64_t mia_seed = mix_seed(seed, "mia");
  auto measure = [&](const ModelState& model, MethodMetrics& out, double secs) {
    out.retain_acc = evaluate_accuracy(model, retain);
    out.test_acc = evaluate_accuracy(model, test);
    out.mia = scenario_mia(model, retain, test, forget, mia_seed);
    out.wall_seconds = secs;
  };

  TrainConfig cfg = train_cfg;

  auto t0 = std::chrono::steady_clock::now();
  cfg.seed = mix_seed(seed, "train-baseline");
  const ModelState baseline =
      train(init_model(spec, mix_seed(seed, "init-baseline")), train_set, cfg);
  measure(baseline, result.baseline, seconds_since(t0));

  t0 = std::chrono::steady_clock::now();
  cfg.seed = mix_seed(seed, "train-retrain");
  const ModelState retrained =
      train(init_model(spec, mix_seed(seed, "init-retrain")), retain, cfg);
  measure(retrained, result.retrain, seconds_since(t0));

  t0 = std::chrono::steady_clock::now();
  cfg.seed = mix_seed(seed, "finetune");
  const ModelState finetuned =
      fine_tune(baseline, retain, train_cfg.last_epoch_lr(), cfg);
  measure(finetuned, result.finetune, seconds_since(t0));

  t0 = std::chrono::steady_clock::now();
  ModelState unlearned = baseline;
  if (forget.rows() > 0) {
    const ImportanceVector imp_full = compute_importances(baseline, train_set);
    const ImportanceVector imp_forget = compute_importances(baseline, forget);
    auto [state, report] = assd_unlearn(baseline, imp_full, imp_forget,
                                        forget.rows(), train_set.rows());
    unlearned = std::move(state);
    result.unlearn_report = report;
  } else {
    ImportanceVector empty;
    auto [state, report] =
        assd_unlearn(baseline, empty, empty, 0, train_set.rows());
    unlearned = std::move(state);
    result.unlearn_report = report;
  }
  measure(unlearned, result.assd, seconds_since(t0));

  check_finite_metrics(result);
  return result;
}

AggregateReport run_experiment(
    const TabularDataset& full_data, const ExperimentConfig& cfg,
    const std::function<void(const ScenarioResult&)>& on_result) {
  if (cfg.specs.empty()) throw std::invalid_argument("no model specs");
  if (cfg.rates.empty()) throw std::invalid_argument("no error rates");
  if (cfg.n_scenarios < 1) throw std::invalid_argument("n_scenarios must be >= 1");
  if (cfg.workers < 1) throw std::invalid_argument("workers must be >= 1");

  struct Job {
    const ModelSpec* spec;
    double rate;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const ModelSpec& spec : cfg.specs)
    for (double rate : cfg.rates)
      for (int i = 0; i < cfg.n_scenarios; ++i)
        jobs.push_back({&spec, rate, cfg.base_seed + static_cast<std::uint64_t>(i)});

  std::vector<ScenarioResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex mu;
  std::string first_error;

  auto work = [&]() {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size() || failed.load()) break;
      try {
        ScenarioResult r = run_scenario(full_data, *jobs[j].spec, cfg.train,
                                        jobs[j].rate, jobs[j].seed,
                                        cfg.test_fraction);
        {
          std::lock_guard<std::mutex> lock(mu);
          if (on_result) on_result(r);
        }
        results[j] = std::move(r);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(mu);
        if (first_error.empty()) first_error = e.what();
        failed.store(true);
        break;
      }
    }
  };

  if (cfg.workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    const int k = std::min<std::size_t>(cfg.workers, jobs.size());
    for (int t = 0; t < k; ++t) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  if (failed.load())
    throw std::runtime_error("experiment failed: " + first_error);

  AggregateReport report;
  report.scenarios = std::move(results);

  std::size_t job = 0;
  for (const ModelSpec& spec : cfg.specs) {
    const std::string tag = model_size_tag(spec);
    for (double rate : cfg.rates) {
      const std::size_t first = job;
      job += cfg.n_scenarios;
      for (const char* split : {"train", "test"}) {
        const bool is_test = std::string(split) == "test";
        auto accs = [&](const std::string& method) {
          std::vector<double> v;
          v.reserve(cfg.n_scenarios);
          for (std::size_t k = first; k < first + cfg.n_scenarios; ++k) {
            const MethodMetrics& mm = method_of(report.scenarios[k], method);
            v.push_back(is_test ? mm.test_acc : mm.retain_acc);
          }
          return v;
        };
        const std::vector<double> baseline_accs = accs("baseline");
        const std::vector<double> assd_accs = accs("assd");
        const double p =
            cfg.n_scenarios >= 5
                ? significance_test(baseline_accs, assd_accs)
                : std::numeric_limits<double>::quiet_NaN();
        for (const char* method : {"baseline", "retrain", "finetune", "assd"}) {
          const std::vector<double> v = accs(method);
          AggregateCell cell;
          cell.model_size = tag;
          cell.error_rate = rate;
          cell.split = split;
          cell.method = method;
          cell.mean = mean(v);
          cell.stdev = sample_std(v);
          cell.n_scenarios = cfg.n_scenarios;
          cell.p_value = p;
          report.cells.push_back(std::move(cell));
        }
      }
    }
  }
  return report;
}

double significance_test(const std::vector<double>& baseline_accs,
                         const std::vector<double>& unlearn_accs) {
  if (baseline_accs.size() != unlearn_accs.size())
    throw std::invalid_argument("significance_test: length mismatch");
  if (baseline_accs.size() < 5)
    throw std::invalid_argument("significance_test needs >= 5 pairs");
  return wilcoxon_signed_rank_p(baseline_accs, unlearn_accs);
}

std::string scenarios_csv_header() {
  return "model_size,error_rate,seed,"
         "baseline_train_acc,baseline_test_acc,"
         "retrain_train_acc,retrain_test_acc,"
         "finetune_train_acc,finetune_test_acc,"
         "assd_train_acc,assd_test_acc,"
         "baseline_mia,retrain_mia,finetune_mia,assd_mia,"
         "percentile_p,chosen_alpha,dampened_count,dampened_fraction,"
         "forget_size,full_size";
}

void export_scenarios(const std::vector<ScenarioResult>& scenarios,
                      const std::filesystem::path& file) {
  std::vector<const ScenarioResult*> order;
  order.reserve(scenarios.size());
  for (const ScenarioResult& r : scenarios) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(),
                   [](const ScenarioResult* a, const ScenarioResult* b) {
                     if (a->baseline.test_acc != b->baseline.test_acc)
                       return a->baseline.test_acc < b->baseline.test_acc;
                     if (a->model_size != b->model_size)
                       return a->model_size < b->model_size;
                     if (a->error_rate != b->error_rate)
                       return a->error_rate < b->error_rate;
                     return a->seed < b->seed;
                   });

  std::ostringstream out;
  out << scenarios_csv_header() << '\n';
  for (const ScenarioResult* r : order) {
    out << r->model_size << ',' << csv_num(r->error_rate) << ',' << r->seed;
    for (const char* method : {"baseline", "retrain", "finetune", "assd"}) {
      const MethodMetrics& mm = method_of(*r, method);
      out << ',' << csv_num(mm.retain_acc) << ',' << csv_num(mm.test_acc);
    }
    for (const char* method : {"baseline", "retrain", "finetune", "assd"})
      out << ',' << csv_num(method_of(*r, method).mia);
    const UnlearnReport& u = r->unlearn_report;
    out << ',' << csv_num(u.percentile_p) << ',' << csv_num(u.chosen_alpha)
        << ',' << u.dampened_count << ',' << csv_num(u.dampened_fraction)
        << ',' << u.forget_size << ',' << u.full_size << '\n';
  }
  write_file(file, out.str());
}

void export_results(const AggregateReport& report,
                    const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  std::ostringstream out;
  out << "model_size,error_rate,split,method,mean,std,p_value,n_scenarios\n";
  for (const AggregateCell& c : report.cells) {
    out << c.model_size << ',' << csv_num(c.error_rate) << ',' << c.split << ','
        << c.method << ',' << csv_num(c.mean) << ',' << csv_num(c.stdev) << ','
        << csv_num(c.p_value) << ',' << c.n_scenarios << '\n';
  }
  write_file(dir / "aggregate.csv", out.str());
  export_scenarios(report.scenarios, dir / "scenarios.csv");
}

GridSearchResult grid_search(const TabularDataset& clean_train,
                             const ModelSpec& spec, const TrainConfig& base,
                             const std::vector<double>& lr_grid,
                             const std::vector<double>& wd_grid) {
  if (lr_grid.empty() || wd_grid.empty())
    throw std::invalid_argument("empty hyperparameter grid");
  auto [fit_set, val_set] = temporal_split(clean_train, 0.2);

  GridSearchResult result;
  for (double lr : lr_grid) {
    for (double wd : wd_grid) {
      TrainConfig cfg = base;
      cfg.learning_rate = lr;
      cfg.weight_decay = wd;
      cfg.seed = mix_seed(base.seed, "grid-search");
      const ModelState model =
          train(init_model(spec, mix_seed(base.seed, "grid-init")), fit_set, cfg);
      GridPoint point{lr, wd, evaluate_accuracy(model, val_set)};
      result.table.push_back(point);
      if (result.table.size() == 1 || point.val_acc > result.best.val_acc)
        result.best = point;
    }
  }
  return result;
}

}  // namespace dampen
