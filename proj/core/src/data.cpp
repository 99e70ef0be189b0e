#include "dampen/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dampen/csv.hpp"
#include "dampen/rng.hpp"
#include "dampen/textio.hpp"

namespace dampen {

namespace {

using nlohmann::json;

constexpr const char* kScenarioTag = "dampen-scn-v1";

bool parse_number(const std::string& token, double* out) {
  if (token.empty()) return false;
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end != token.c_str() + token.size()) return false;
  *out = v;
  return true;
}

// Howard Hinnant's civil-date algorithm; days since 1970-01-01.
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy =
      (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
      static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return static_cast<std::int64_t>(era) * 146097 +
         static_cast<std::int64_t>(doe) - 719468;
}

bool split_fields(const std::string& s, char sep, std::vector<std::string>* out) {
  out->clear();
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out->push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return !out->empty();
}

bool parse_int_field(const std::string& s, int* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size()) return false;
  *out = static_cast<int>(v);
  return true;
}

// Accepts raw numbers, ISO dates (YYYY-MM-DD), and US dates (M/D/YYYY), each
// with an optional H:MM[:SS] time. Returns seconds on an arbitrary but
// order-preserving axis.
bool parse_timestamp(const std::string& token, double* out) {
  if (parse_number(token, out)) return true;

  std::string date = token;
  std::string time;
  const std::size_t space = token.find(' ');
  if (space != std::string::npos) {
    date = token.substr(0, space);
    time = token.substr(space + 1);
  }

  std::vector<std::string> parts;
  int y = 0, m = 0, d = 0;
  if (date.find('-') != std::string::npos) {
    if (!split_fields(date, '-', &parts) || parts.size() != 3) return false;
    if (!parse_int_field(parts[0], &y) || !parse_int_field(parts[1], &m) ||
        !parse_int_field(parts[2], &d))
      return false;
  } else if (date.find('/') != std::string::npos) {
    if (!split_fields(date, '/', &parts) || parts.size() != 3) return false;
    if (!parse_int_field(parts[0], &m) || !parse_int_field(parts[1], &d) ||
        !parse_int_field(parts[2], &y))
      return false;
  } else {
    return false;
  }
  if (m < 1 || m > 12 || d < 1 || d > 31 || y < 1000 || y > 9999) return false;

  double seconds = 0.0;
  if (!time.empty()) {
    if (!split_fields(time, ':', &parts) || parts.size() < 2 || parts.size() > 3)
      return false;
    int hh = 0, mm = 0, ss = 0;
    if (!parse_int_field(parts[0], &hh) || !parse_int_field(parts[1], &mm))
      return false;
    if (parts.size() == 3 && !parse_int_field(parts[2], &ss)) return false;
    if (hh < 0 || hh > 23 || mm < 0 || mm > 59 || ss < 0 || ss > 60)
      return false;
    seconds = hh * 3600.0 + mm * 60.0 + ss;
  }
  *out = static_cast<double>(days_from_civil(y, m, d)) * 86400.0 + seconds;
  return true;
}

struct FeatureTransform {
  std::vector<double> mean;               // per numeric column
  std::vector<double> stddev;             // population std
  std::vector<std::vector<std::string>> vocab;  // per categorical column, sorted
  std::vector<std::string> names;
  int out_dim = 0;
};

FeatureTransform fit_transform(const SchemaConfig& schema,
                               const RawColumns& raw) {
  FeatureTransform t;
  for (std::size_t c = 0; c < schema.numeric_columns.size(); ++c) {
    const std::vector<double>& col = raw.numeric[c];
    const double n = static_cast<double>(col.size());
    const double mu = std::accumulate(col.begin(), col.end(), 0.0) / n;
    double var = 0.0;
    for (double v : col) var += (v - mu) * (v - mu);
    var /= n;
    t.mean.push_back(mu);
    t.stddev.push_back(std::sqrt(var));
    t.names.push_back(schema.numeric_columns[c]);
  }
  for (std::size_t c = 0; c < schema.categorical_columns.size(); ++c) {
    std::set<std::string> values(raw.categorical[c].begin(),
                                 raw.categorical[c].end());
    t.vocab.emplace_back(values.begin(), values.end());
    for (const std::string& v : t.vocab.back())
      t.names.push_back(schema.categorical_columns[c] + "=" + v);
  }
  t.out_dim = static_cast<int>(t.names.size());
  return t;
}

Eigen::MatrixXd apply_transform(const FeatureTransform& t,
                                const RawColumns& raw, int rows) {
  Eigen::MatrixXd features = Eigen::MatrixXd::Zero(rows, t.out_dim);
  int col = 0;
  for (std::size_t c = 0; c < t.mean.size(); ++c) {
    const double sd = t.stddev[c];
    for (int i = 0; i < rows; ++i) {
      features(i, col) =
          sd == 0.0 ? 0.0 : (raw.numeric[c][i] - t.mean[c]) / sd;
    }
    ++col;
  }
  for (std::size_t c = 0; c < t.vocab.size(); ++c) {
    const std::vector<std::string>& vocab = t.vocab[c];
    for (int i = 0; i < rows; ++i) {
      const auto it = std::lower_bound(vocab.begin(), vocab.end(),
                                       raw.categorical[c][i]);
      // Unseen categories stay all-zero.
      if (it != vocab.end() && *it == raw.categorical[c][i])
        features(i, col + (it - vocab.begin())) = 1.0;
    }
    col += static_cast<int>(vocab.size());
  }
  return features;
}

void refit_features(TabularDataset& train, TabularDataset& test) {
  const FeatureTransform t = fit_transform(train.schema, train.raw);
  train.features = apply_transform(t, train.raw, train.rows());
  train.feature_names = t.names;
  test.features = apply_transform(t, test.raw, test.rows());
  test.feature_names = t.names;
}

void require_keys(const json& obj, const std::set<std::string>& allowed,
                  const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key()))
      throw std::invalid_argument("unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace

int SchemaConfig::num_classes() const {
  return label_mode == LabelMode::delay ? 3 : static_cast<int>(classes.size());
}

void SchemaConfig::validate() const {
  if (numeric_columns.empty() && categorical_columns.empty())
    throw std::invalid_argument("schema needs at least one feature column");
  if (timestamp_column.empty())
    throw std::invalid_argument("schema needs a timestamp_column");

  std::set<std::string> seen;
  auto add_unique = [&](const std::string& name, const char* role) {
    if (!seen.insert(name).second)
      throw std::invalid_argument("column '" + name +
                                  "' appears in more than one role (" + role +
                                  ")");
  };
  for (const std::string& c : numeric_columns) add_unique(c, "numeric");
  for (const std::string& c : categorical_columns) add_unique(c, "categorical");
  add_unique(timestamp_column, "timestamp");

  if (label_mode == LabelMode::direct) {
    if (label_column.empty())
      throw std::invalid_argument("direct label mode needs label_column");
    add_unique(label_column, "label");
    if (classes.size() < 2)
      throw std::invalid_argument("direct label mode needs >= 2 classes");
    std::set<std::string> unique_classes(classes.begin(), classes.end());
    if (unique_classes.size() != classes.size())
      throw std::invalid_argument("duplicate class names");
  } else {
    if (real_days_column.empty() || scheduled_days_column.empty())
      throw std::invalid_argument(
          "delay label mode needs real_days_column and scheduled_days_column");
    // The realized delay determines the label, so it must not be a feature.
    // The scheduled duration is known before delivery and may be one.
    add_unique(real_days_column, "label");
  }
}

SchemaConfig schema_from_json(const std::string& json_text) {
  json root = json::parse(json_text);
  if (!root.is_object())
    throw std::invalid_argument("schema config must be a JSON object");
  require_keys(root,
               {"numeric_columns", "categorical_columns", "timestamp_column",
                "label"},
               "schema config");
  SchemaConfig schema;
  if (root.contains("numeric_columns"))
    schema.numeric_columns =
        root["numeric_columns"].get<std::vector<std::string>>();
  if (root.contains("categorical_columns"))
    schema.categorical_columns =
        root["categorical_columns"].get<std::vector<std::string>>();
  if (!root.contains("timestamp_column"))
    throw std::invalid_argument("schema config is missing 'timestamp_column'");
  schema.timestamp_column = root["timestamp_column"].get<std::string>();
  if (!root.contains("label"))
    throw std::invalid_argument("schema config is missing 'label'");

  const json& label = root["label"];
  const std::string mode = label.value("mode", "");
  if (mode == "direct") {
    require_keys(label, {"mode", "column", "classes"}, "label");
    schema.label_mode = SchemaConfig::LabelMode::direct;
    schema.label_column = label.at("column").get<std::string>();
    schema.classes = label.at("classes").get<std::vector<std::string>>();
  } else if (mode == "delay") {
    require_keys(label, {"mode", "real_days_column", "scheduled_days_column"},
                 "label");
    schema.label_mode = SchemaConfig::LabelMode::delay;
    schema.real_days_column = label.at("real_days_column").get<std::string>();
    schema.scheduled_days_column =
        label.at("scheduled_days_column").get<std::string>();
  } else {
    throw std::invalid_argument("label.mode must be 'direct' or 'delay'");
  }
  schema.validate();
  return schema;
}

SchemaConfig load_schema(const std::filesystem::path& path) {
  return schema_from_json(read_file(path));
}

TabularDataset TabularDataset::subset(const std::vector<int>& indices) const {
  TabularDataset out;
  out.num_classes = num_classes;
  out.feature_names = feature_names;
  out.schema = schema;
  const int k = static_cast<int>(indices.size());
  out.features.resize(k, features.cols());
  out.labels.resize(k);
  out.timestamps.resize(k);
  out.row_ids.resize(k);
  out.raw.numeric.resize(raw.numeric.size());
  for (auto& col : out.raw.numeric) col.resize(k);
  out.raw.categorical.resize(raw.categorical.size());
  for (auto& col : out.raw.categorical) col.resize(k);
  for (int i = 0; i < k; ++i) {
    const int src = indices[i];
    if (src < 0 || src >= rows())
      throw std::invalid_argument("subset index out of range");
    out.features.row(i) = features.row(src);
    out.labels[i] = labels[src];
    out.timestamps[i] = timestamps[src];
    out.row_ids[i] = row_ids[src];
    for (std::size_t c = 0; c < raw.numeric.size(); ++c)
      out.raw.numeric[c][i] = raw.numeric[c][src];
    for (std::size_t c = 0; c < raw.categorical.size(); ++c)
      out.raw.categorical[c][i] = raw.categorical[c][src];
  }
  return out;
}

TabularDataset make_dataset(const Eigen::MatrixXd& features,
                            const std::vector<int>& labels, int num_classes) {
  if (features.rows() != static_cast<Eigen::Index>(labels.size()))
    throw std::invalid_argument("features/labels row mismatch");
  if (features.rows() == 0) throw std::invalid_argument("empty dataset");
  TabularDataset ds;
  ds.features = features;
  ds.labels = labels;
  ds.num_classes = num_classes;
  const int n = ds.rows();
  const int d = static_cast<int>(features.cols());
  ds.timestamps.resize(n);
  ds.row_ids.resize(n);
  for (int i = 0; i < n; ++i) {
    ds.timestamps[i] = static_cast<double>(i);
    ds.row_ids[i] = i;
  }
  ds.schema.timestamp_column = "timestamp";
  ds.schema.label_mode = SchemaConfig::LabelMode::direct;
  ds.schema.label_column = "label";
  for (int k = 0; k < num_classes; ++k)
    ds.schema.classes.push_back(std::to_string(k));
  ds.raw.numeric.resize(d);
  for (int c = 0; c < d; ++c) {
    ds.schema.numeric_columns.push_back("f" + std::to_string(c));
    ds.feature_names.push_back("f" + std::to_string(c));
    ds.raw.numeric[c].resize(n);
    for (int i = 0; i < n; ++i) ds.raw.numeric[c][i] = features(i, c);
  }
  return ds;
}

TabularDataset load_csv(const std::filesystem::path& path,
                        const SchemaConfig& schema, LoadReport* report) {
  schema.validate();
  const CsvTable table = read_csv(path);

  std::vector<std::size_t> numeric_idx, categorical_idx;
  for (const std::string& c : schema.numeric_columns)
    numeric_idx.push_back(table.column(c));
  for (const std::string& c : schema.categorical_columns)
    categorical_idx.push_back(table.column(c));
  const std::size_t ts_idx = table.column(schema.timestamp_column);
  std::size_t label_idx = 0, real_idx = 0, sched_idx = 0;
  if (schema.label_mode == SchemaConfig::LabelMode::direct) {
    label_idx = table.column(schema.label_column);
  } else {
    real_idx = table.column(schema.real_days_column);
    sched_idx = table.column(schema.scheduled_days_column);
  }

  TabularDataset ds;
  ds.schema = schema;
  ds.num_classes = schema.num_classes();
  ds.raw.numeric.resize(numeric_idx.size());
  ds.raw.categorical.resize(categorical_idx.size());

  LoadReport local;
  std::vector<double> numeric_row(numeric_idx.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::vector<std::string>& row = table.rows[r];
    ++local.rows_read;

    bool ok = true;
    for (std::size_t c = 0; c < numeric_idx.size() && ok; ++c)
      ok = parse_number(row[numeric_idx[c]], &numeric_row[c]);

    double ts = 0.0;
    if (ok) ok = parse_timestamp(row[ts_idx], &ts);

    int label = -1;
    if (ok) {
      if (schema.label_mode == SchemaConfig::LabelMode::direct) {
        const auto it = std::find(schema.classes.begin(), schema.classes.end(),
                                  row[label_idx]);
        if (it == schema.classes.end()) {
          ok = false;
        } else {
          label = static_cast<int>(it - schema.classes.begin());
        }
      } else {
        double real = 0.0, sched = 0.0;
        ok = parse_number(row[real_idx], &real) &&
             parse_number(row[sched_idx], &sched) && std::isfinite(real) &&
             std::isfinite(sched);
        if (ok) label = derive_delay_label(real, sched);
      }
    }

    if (!ok) {
      ++local.rows_dropped;
      continue;
    }
    for (std::size_t c = 0; c < numeric_idx.size(); ++c)
      ds.raw.numeric[c].push_back(numeric_row[c]);
    for (std::size_t c = 0; c < categorical_idx.size(); ++c)
      ds.raw.categorical[c].push_back(row[categorical_idx[c]]);
    ds.labels.push_back(label);
    ds.timestamps.push_back(ts);
    ds.row_ids.push_back(static_cast<std::int64_t>(r));
  }
  if (report) *report = local;
  if (ds.labels.empty())
    throw std::runtime_error("no usable rows in " + path.string());

  const FeatureTransform t = fit_transform(schema, ds.raw);
  ds.features = apply_transform(t, ds.raw, ds.rows());
  ds.feature_names = t.names;
  return ds;
}

int derive_delay_label(double real_days, double scheduled_days) {
  if (!std::isfinite(real_days) || !std::isfinite(scheduled_days))
    throw std::invalid_argument("delay label inputs must be finite");
  if (real_days < scheduled_days) return 0;  // early
  if (real_days == scheduled_days) return 1;  // on-time
  return 2;                                   // delayed
}

std::pair<TabularDataset, TabularDataset> temporal_split(
    const TabularDataset& data, double test_fraction) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("test_fraction must be in (0, 1)");
  const int n = data.rows();
  if (n < 2) throw std::invalid_argument("temporal_split needs >= 2 rows");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return data.timestamps[a] < data.timestamps[b];
  });

  const int test_rows =
      static_cast<int>(std::ceil(test_fraction * static_cast<double>(n)));
  const int train_rows = n - test_rows;
  if (train_rows < 1)
    throw std::invalid_argument("test_fraction leaves no training rows");

  std::vector<int> train_idx(order.begin(), order.begin() + train_rows);
  std::vector<int> test_idx(order.begin() + train_rows, order.end());
  TabularDataset train = data.subset(train_idx);
  TabularDataset test = data.subset(test_idx);
  refit_features(train, test);
  return {std::move(train), std::move(test)};
}

std::pair<TabularDataset, ErrorScenario> inject_label_errors(
    const TabularDataset& train, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0))
    throw std::invalid_argument("error rate must be in [0, 1]");
  const int n = train.rows();
  const int k = static_cast<int>(std::llround(rate * static_cast<double>(n)));

  ErrorScenario scenario;
  scenario.seed = seed;
  scenario.error_rate = rate;
  scenario.train_rows = n;
  if (k == 0) return {train, scenario};
  if (train.num_classes < 2)
    throw std::invalid_argument("label flips need >= 2 classes");

  Rng rng(seed);
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  std::vector<int> flipped(pool.begin(), pool.begin() + k);
  std::sort(flipped.begin(), flipped.end());

  TabularDataset corrupted = train;
  for (int idx : flipped) {
    const int orig = corrupted.labels[idx];
    const int offset = 1 + static_cast<int>(rng.below(train.num_classes - 1));
    const int next = (orig + offset) % train.num_classes;
    corrupted.labels[idx] = next;
    scenario.flipped_indices.push_back(idx);
    scenario.original_labels.push_back(orig);
    scenario.new_labels.push_back(next);
  }
  return {std::move(corrupted), std::move(scenario)};
}

void save_scenario(const ErrorScenario& s, const std::filesystem::path& path) {
  std::ostringstream out;
  out << kScenarioTag << '\n';
  out << "seed " << s.seed << '\n';
  out << "rate " << format_double(s.error_rate) << '\n';
  out << "train_rows " << s.train_rows << '\n';
  out << "flips " << s.flipped_indices.size() << '\n';
  for (std::size_t i = 0; i < s.flipped_indices.size(); ++i) {
    out << s.flipped_indices[i] << ' ' << s.original_labels[i] << ' '
        << s.new_labels[i] << '\n';
  }
  out << "end\n";
  write_file(path, out.str());
}

ErrorScenario load_scenario(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  TokenReader reader(in, kScenarioTag);
  reader.expect(kScenarioTag);
  ErrorScenario s;
  reader.expect("seed");
  s.seed = reader.next_uint();
  reader.expect("rate");
  s.error_rate = reader.next_double();
  reader.expect("train_rows");
  s.train_rows = reader.next_int();
  reader.expect("flips");
  const auto k = reader.next_int();
  for (std::int64_t i = 0; i < k; ++i) {
    s.flipped_indices.push_back(static_cast<int>(reader.next_int()));
    s.original_labels.push_back(static_cast<int>(reader.next_int()));
    s.new_labels.push_back(static_cast<int>(reader.next_int()));
  }
  reader.expect("end");
  return s;
}

}  // namespace dampen
