#include "dampen/textio.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dampen {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& token) {
  if (token.empty()) throw std::runtime_error("empty numeric token");
  char* end = nullptr;
  double v = std::strtod(token.c_str(), &end);
  if (end != token.c_str() + token.size())
    throw std::runtime_error("bad numeric token: '" + token + "'");
  return v;
}

std::int64_t parse_int(const std::string& token) {
  if (token.empty()) throw std::runtime_error("empty integer token");
  char* end = nullptr;
  long long v = std::strtoll(token.c_str(), &end, 10);
  if (end != token.c_str() + token.size())
    throw std::runtime_error("bad integer token: '" + token + "'");
  return v;
}

std::uint64_t parse_uint(const std::string& token) {
  if (token.empty()) throw std::runtime_error("empty integer token");
  char* end = nullptr;
  unsigned long long v = std::strtoull(token.c_str(), &end, 10);
  if (end != token.c_str() + token.size() || token[0] == '-')
    throw std::runtime_error("bad unsigned token: '" + token + "'");
  return v;
}

TokenReader::TokenReader(std::istream& in, std::string container_tag)
    : in_(in), tag_(std::move(container_tag)) {}

std::string TokenReader::next() {
  std::string token;
  if (!(in_ >> token))
    throw std::runtime_error(tag_ + ": truncated or corrupt file");
  return token;
}

void TokenReader::expect(const std::string& literal) {
  std::string token = next();
  if (token != literal)
    throw std::runtime_error(tag_ + ": expected '" + literal + "', found '" +
                             token + "'");
}

double TokenReader::next_double() { return parse_double(next()); }
std::int64_t TokenReader::next_int() { return parse_int(next()); }
std::uint64_t TokenReader::next_uint() { return parse_uint(next()); }

bool TokenReader::at_end() {
  std::string token;
  if (in_ >> token) return false;
  return true;
}

void write_values(std::ostream& out, const double* data, Eigen::Index count,
                  int per_line) {
  for (Eigen::Index i = 0; i < count; ++i) {
    out << format_double(data[i]);
    out << (((i + 1) % per_line == 0 || i + 1 == count) ? '\n' : ' ');
  }
}

void read_values(TokenReader& reader, double* data, Eigen::Index count) {
  for (Eigen::Index i = 0; i < count; ++i) data[i] = reader.next_double();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::ostringstream oss;
  oss << in.rdbuf();
  return oss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dampen
