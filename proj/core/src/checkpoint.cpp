#include "dampen/checkpoint.hpp"

#include <sstream>
#include <stdexcept>

#include "dampen/textio.hpp"

namespace dampen {

namespace {

constexpr const char* kTag = "dampen-ckpt-v1";

void write_tensor(std::ostream& out, const std::string& name,
                  const Eigen::MatrixXd& m) {
  out << "tensor " << name << " 2 " << m.rows() << ' ' << m.cols() << '\n';
  // Row-major like the flat parameter layout.
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    write_values(out, m.row(r).eval().data(), m.cols());
}

void write_tensor(std::ostream& out, const std::string& name,
                  const Eigen::VectorXd& v) {
  out << "tensor " << name << " 1 " << v.size() << '\n';
  write_values(out, v.data(), v.size());
}

void read_tensor(TokenReader& reader, const std::string& name,
                 Eigen::MatrixXd& m) {
  reader.expect("tensor");
  reader.expect(name);
  reader.expect("2");
  const auto rows = reader.next_int();
  const auto cols = reader.next_int();
  if (rows != m.rows() || cols != m.cols())
    throw std::runtime_error(std::string(kTag) + ": tensor '" + name +
                             "' has unexpected shape");
  Eigen::VectorXd row(cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    read_values(reader, row.data(), cols);
    m.row(r) = row.transpose();
  }
}

void read_tensor(TokenReader& reader, const std::string& name,
                 Eigen::VectorXd& v) {
  reader.expect("tensor");
  reader.expect(name);
  reader.expect("1");
  const auto size = reader.next_int();
  if (size != v.size())
    throw std::runtime_error(std::string(kTag) + ": tensor '" + name +
                             "' has unexpected length");
  read_values(reader, v.data(), v.size());
}

std::string layer_name(int l, const char* field) {
  return "layer" + std::to_string(l) + "." + field;
}

}  // namespace

std::string serialize_checkpoint(const ModelState& model) {
  model.spec.validate();
  std::ostringstream out;
  out << kTag << '\n';
  out << "input_dim " << model.spec.input_dim << '\n';
  out << "hidden " << model.spec.hidden_layers.size();
  for (int h : model.spec.hidden_layers) out << ' ' << h;
  out << '\n';
  out << "classes " << model.spec.num_classes << '\n';
  out << "batch_norm " << (model.spec.batch_norm ? 1 : 0) << '\n';
  out << "seed " << model.seed << '\n';

  const int hidden = static_cast<int>(model.spec.hidden_layers.size());
  for (int l = 0; l < hidden; ++l) {
    write_tensor(out, layer_name(l, "weight"), model.linear[l].weight);
    write_tensor(out, layer_name(l, "bias"), model.linear[l].bias);
    if (model.spec.batch_norm) {
      write_tensor(out, layer_name(l, "bn_scale"), model.bn[l].scale);
      write_tensor(out, layer_name(l, "bn_shift"), model.bn[l].shift);
      write_tensor(out, layer_name(l, "bn_mean"), model.bn[l].running_mean);
      write_tensor(out, layer_name(l, "bn_var"), model.bn[l].running_var);
    }
  }
  write_tensor(out, "output.weight", model.linear[hidden].weight);
  write_tensor(out, "output.bias", model.linear[hidden].bias);
  out << "end\n";
  return out.str();
}

ModelState parse_checkpoint(const std::string& text) {
  std::istringstream in(text);
  TokenReader reader(in, kTag);
  reader.expect(kTag);

  ModelSpec spec;
  reader.expect("input_dim");
  spec.input_dim = static_cast<int>(reader.next_int());
  reader.expect("hidden");
  const auto hidden_count = reader.next_int();
  if (hidden_count < 1 || hidden_count > 1'000'000)
    throw std::runtime_error(std::string(kTag) + ": bad hidden layer count");
  for (std::int64_t i = 0; i < hidden_count; ++i)
    spec.hidden_layers.push_back(static_cast<int>(reader.next_int()));
  reader.expect("classes");
  spec.num_classes = static_cast<int>(reader.next_int());
  reader.expect("batch_norm");
  spec.batch_norm = reader.next_int() != 0;
  spec.validate();

  // Start from an initialized skeleton so every array has its final shape.
  ModelState model = init_model(spec, 0);
  reader.expect("seed");
  model.seed = reader.next_uint();

  const int hidden = static_cast<int>(spec.hidden_layers.size());
  for (int l = 0; l < hidden; ++l) {
    read_tensor(reader, layer_name(l, "weight"), model.linear[l].weight);
    read_tensor(reader, layer_name(l, "bias"), model.linear[l].bias);
    if (spec.batch_norm) {
      read_tensor(reader, layer_name(l, "bn_scale"), model.bn[l].scale);
      read_tensor(reader, layer_name(l, "bn_shift"), model.bn[l].shift);
      read_tensor(reader, layer_name(l, "bn_mean"), model.bn[l].running_mean);
      read_tensor(reader, layer_name(l, "bn_var"), model.bn[l].running_var);
    }
  }
  read_tensor(reader, "output.weight", model.linear[hidden].weight);
  read_tensor(reader, "output.bias", model.linear[hidden].bias);
  reader.expect("end");
  if (!reader.at_end())
    throw std::runtime_error(std::string(kTag) + ": trailing data after end");
  return model;
}

void save_checkpoint(const ModelState& model, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(model));
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path));
}

std::string model_fingerprint(const ModelState& model) {
  return fnv1a_hex(serialize_checkpoint(model));
}

}  // namespace dampen
