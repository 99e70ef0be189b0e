#include "dampen/unlearn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "dampen/mia.hpp"
#include "dampen/stats.hpp"
#include "dampen/textio.hpp"

namespace dampen {

namespace {

constexpr const char* kReportTag = "dampen-rpt-v1";

void check_vectors(const ModelState& model, const ImportanceVector& imp_full,
                   const ImportanceVector& imp_forget) {
  const int m = model.param_count();
  if (imp_full.values.size() != m || imp_forget.values.size() != m)
    throw std::invalid_argument(
        "importance vector length does not match the model parameter count");
  if (!imp_full.values.allFinite() || !imp_forget.values.allFinite())
    throw std::invalid_argument("importances contain non-finite values");
}

}  // namespace

void SSDConfig::validate() const {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
}

double compute_percentile_p(std::int64_t forget_size, std::int64_t full_size,
                            double log_base) {
  if (full_size <= 0) throw std::invalid_argument("full_size must be positive");
  if (forget_size < 0 || forget_size > full_size)
    throw std::invalid_argument("forget_size must be in [0, full_size]");
  if (!(log_base > 0.0) || log_base == 1.0)
    throw std::invalid_argument("log base must be positive and != 1");
  const double ratio =
      static_cast<double>(forget_size) / static_cast<double>(full_size);
  const double p = 100.0 - std::log(1.0 + 100.0 * ratio) / std::log(log_base);
  return std::min(100.0, std::max(0.0, p));
}

double select_alpha_adaptive(const ImportanceVector& imp_full,
                             const ImportanceVector& imp_forget, double p,
                             AlphaMode mode) {
  if (imp_full.values.size() != imp_forget.values.size())
    throw std::invalid_argument("importance vectors differ in length");
  if (!(p >= 0.0 && p <= 100.0))
    throw std::invalid_argument("percentile p must be in [0, 100]");

  std::vector<double> ratios;
  ratios.reserve(imp_full.values.size());
  for (Eigen::Index i = 0; i < imp_full.values.size(); ++i) {
    const double full = imp_full.values[i];
    const double forget = imp_forget.values[i];
    if (mode == AlphaMode::full_over_forget) {
      if (forget > 0.0) ratios.push_back(full / forget);
    } else {
      if (full > 0.0) ratios.push_back(forget / full);
    }
  }
  if (ratios.empty())
    throw std::runtime_error(
        "no usable importance ratios; nothing to unlearn");
  double alpha = percentile(std::move(ratios), p);
  if (!(alpha > 0.0)) alpha = std::numeric_limits<double>::min();
  return alpha;
}

std::pair<ModelState, UnlearnReport> ssd_dampen(const ModelState& model,
                                                const ImportanceVector& imp_full,
                                                const ImportanceVector& imp_forget,
                                                const SSDConfig& cfg) {
  cfg.validate();
  check_vectors(model, imp_full, imp_forget);

  Eigen::VectorXd theta = model.flatten();
  std::int64_t selected = 0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double full = imp_full.values[i];
    const double forget = imp_forget.values[i];
    if (forget > cfg.alpha * full) {
      ++selected;
      const double beta = std::min(cfg.lambda * full / forget, 1.0);
      theta[i] *= beta;
    }
  }

  ModelState result = model;  // keeps batch-norm running statistics
  result.unflatten(theta);

  UnlearnReport report;
  report.chosen_alpha = cfg.alpha;
  report.dampened_count = selected;
  report.dampened_fraction =
      static_cast<double>(selected) / static_cast<double>(theta.size());
  return {std::move(result), report};
}

std::pair<ModelState, UnlearnReport> assd_unlearn(
    const ModelState& model, const ImportanceVector& imp_full,
    const ImportanceVector& imp_forget, std::int64_t forget_size,
    std::int64_t full_size, const AssdOptions& opts) {
  if (forget_size == 0) {
    UnlearnReport report;
    report.percentile_p = 100.0;
    report.chosen_alpha = std::numeric_limits<double>::infinity();
    report.forget_size = 0;
    report.full_size = full_size;
    return {model, report};
  }
  check_vectors(model, imp_full, imp_forget);
  const double p = compute_percentile_p(forget_size, full_size, opts.log_base);
  const double alpha = select_alpha_adaptive(imp_full, imp_forget, p, opts.mode);
  SSDConfig cfg;
  cfg.alpha = alpha;
  cfg.lambda = 1.0;
  auto [state, report] = ssd_dampen(model, imp_full, imp_forget, cfg);
  report.percentile_p = p;
  report.forget_size = forget_size;
  report.full_size = full_size;
  return {std::move(state), report};
}

std::vector<SweepRow> alpha_sweep(const ModelState& model,
                                  const ImportanceVector& imp_full,
                                  const ImportanceVector& imp_forget,
                                  const std::vector<double>& alpha_grid,
                                  const TabularDataset& retain,
                                  const TabularDataset& forget,
                                  const TabularDataset& test,
                                  std::uint64_t seed) {
  if (alpha_grid.empty()) throw std::invalid_argument("empty alpha grid");
  if (!std::is_sorted(alpha_grid.begin(), alpha_grid.end()))
    throw std::invalid_argument("alpha grid must be ascending");

  std::vector<SweepRow> rows;
  rows.reserve(alpha_grid.size());
  for (double alpha : alpha_grid) {
    SSDConfig cfg;
    cfg.alpha = alpha;
    cfg.lambda = 1.0;
    auto [state, report] = ssd_dampen(model, imp_full, imp_forget, cfg);
    SweepRow row;
    row.alpha = alpha;
    row.retain_acc = evaluate_accuracy(state, retain);
    row.forget_acc = evaluate_accuracy(state, forget);
    AttackModel attacker =
        fit_attacker(to_vector(per_sample_losses(state, retain)),
                     to_vector(per_sample_losses(state, test)), seed);
    row.mia = mia_score(attacker, to_vector(per_sample_losses(state, forget)));
    row.dampened_count = report.dampened_count;
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "alpha,retain_acc,forget_acc,mia,dampened_count\n";
  for (const SweepRow& r : rows) {
    out << format_double(r.alpha) << ',' << format_double(r.retain_acc) << ','
        << format_double(r.forget_acc) << ',' << format_double(r.mia) << ','
        << r.dampened_count << '\n';
  }
  return out.str();
}

std::string serialize_report(const UnlearnReport& r) {
  std::ostringstream out;
  out << kReportTag << '\n';
  out << "percentile_p " << format_double(r.percentile_p) << '\n';
  out << "chosen_alpha " << format_double(r.chosen_alpha) << '\n';
  out << "dampened_count " << r.dampened_count << '\n';
  out << "dampened_fraction " << format_double(r.dampened_fraction) << '\n';
  out << "forget_size " << r.forget_size << '\n';
  out << "full_size " << r.full_size << '\n';
  out << "end\n";
  return out.str();
}

UnlearnReport parse_report(const std::string& text) {
  std::istringstream in(text);
  TokenReader reader(in, kReportTag);
  reader.expect(kReportTag);
  UnlearnReport r;
  reader.expect("percentile_p");
  r.percentile_p = reader.next_double();
  reader.expect("chosen_alpha");
  r.chosen_alpha = reader.next_double();
  reader.expect("dampened_count");
  r.dampened_count = reader.next_int();
  reader.expect("dampened_fraction");
  r.dampened_fraction = reader.next_double();
  reader.expect("forget_size");
  r.forget_size = reader.next_int();
  reader.expect("full_size");
  r.full_size = reader.next_int();
  reader.expect("end");
  return r;
}

}  // namespace dampen
