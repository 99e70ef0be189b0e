#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>

namespace dampen {

/// Formats a double with 17 significant digits; parsing the result with
/// parse_double gives back the identical bit pattern.
std::string format_double(double v);

/// Strict strtod wrapper: the whole token must parse. Throws
/// std::runtime_error otherwise.
double parse_double(const std::string& token);

std::int64_t parse_int(const std::string& token);
std::uint64_t parse_uint(const std::string& token);

/// Whitespace-separated tokenizer over a stream with line-agnostic reads and
/// error messages carrying the container tag.
class TokenReader {
 public:
  TokenReader(std::istream& in, std::string container_tag);

  std::string next();             // throws on EOF
  void expect(const std::string& literal);
  double next_double();
  std::int64_t next_int();
  std::uint64_t next_uint();
  bool at_end();

 private:
  std::istream& in_;
  std::string tag_;
};

void write_values(std::ostream& out, const double* data, Eigen::Index count,
                  int per_line = 8);
void read_values(TokenReader& reader, double* data, Eigen::Index count);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

/// FNV-1a 64-bit over a byte string, as a 16-char lowercase hex string.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace dampen
