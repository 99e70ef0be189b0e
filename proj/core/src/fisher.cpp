#include "dampen/fisher.hpp"

#include <atomic>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

#include "dampen/checkpoint.hpp"
#include "dampen/textio.hpp"

namespace dampen {

namespace {
constexpr const char* kTag = "dampen-fim-v1";
}

ImportanceVector compute_importances(const ModelState& model,
                                     const TabularDataset& data, int workers) {
  if (data.rows() == 0)
    throw std::invalid_argument("compute_importances: empty dataset");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");

  const int n = data.rows();
  const int m = model.param_count();
  const int n_chunks = (n + kImportanceChunk - 1) / kImportanceChunk;
  std::vector<Eigen::VectorXd> partials(n_chunks);

  std::atomic<int> next_chunk{0};
  auto work = [&]() {
    Eigen::VectorXd grad(m);
    Eigen::VectorXd x(model.spec.input_dim);
    for (;;) {
      const int c = next_chunk.fetch_add(1);
      if (c >= n_chunks) break;
      const int begin = c * kImportanceChunk;
      const int end = std::min(n, begin + kImportanceChunk);
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(m);
      for (int i = begin; i < end; ++i) {
        x = data.features.row(i).transpose();
        per_sample_grad_into(model, x, data.labels[i], grad);
        acc.array() += grad.array().square();
      }
      partials[c] = std::move(acc);
    }
  };

  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    const int k = std::min(workers, n_chunks);
    pool.reserve(k);
    for (int t = 0; t < k; ++t) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }

  ImportanceVector iv;
  iv.values = Eigen::VectorXd::Zero(m);
  for (const Eigen::VectorXd& p : partials) iv.values += p;
  iv.values /= static_cast<double>(n);
  iv.sample_count = n;
  iv.model_fingerprint = model_fingerprint(model);
  return iv;
}

void persist_importances(const ImportanceVector& iv,
                         const std::filesystem::path& path) {
  std::ostringstream out;
  out << kTag << '\n';
  out << "fingerprint " << iv.model_fingerprint << '\n';
  out << "samples " << iv.sample_count << '\n';
  out << "length " << iv.values.size() << '\n';
  out << "values\n";
  write_values(out, iv.values.data(), iv.values.size());
  out << "end\n";
  write_file(path, out.str());
}

ImportanceVector load_importances(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  TokenReader reader(in, kTag);
  reader.expect(kTag);
  ImportanceVector iv;
  reader.expect("fingerprint");
  iv.model_fingerprint = reader.next();
  reader.expect("samples");
  iv.sample_count = reader.next_int();
  reader.expect("length");
  const auto length = reader.next_int();
  if (length < 0) throw std::runtime_error(std::string(kTag) + ": bad length");
  reader.expect("values");
  iv.values.resize(length);
  read_values(reader, iv.values.data(), length);
  reader.expect("end");
  if (!reader.at_end())
    throw std::runtime_error(std::string(kTag) + ": trailing data after end");
  return iv;
}

bool fingerprint_matches(const ImportanceVector& iv, const ModelState& model) {
  return iv.model_fingerprint == model_fingerprint(model);
}

}  // namespace dampen
