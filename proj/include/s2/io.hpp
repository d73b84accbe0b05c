#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "s2/image.hpp"
#include "s2/sampling.hpp"

namespace s2 {

/// Raised on malformed files; carries the byte offset of the problem.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

namespace detail {

/// Byte-level little-endian writer/reader so files are identical across
/// platforms regardless of host endianness.
class LeWriter {
 public:
  explicit LeWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open for writing: " + path);
  }
  void bytes(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  void u8(std::uint8_t v) { bytes(reinterpret_cast<const char*>(&v), 1); }
  void u32(std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    bytes(b, 4);
  }
  void u64(std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    bytes(b, 8);
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  bool good() const { return static_cast<bool>(out_); }

 private:
  std::ofstream out_;
};

class LeReader {
 public:
  explicit LeReader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot open for reading: " + path);
  }
  void bytes(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw FormatError("truncated file", offset_ + static_cast<std::size_t>(in_.gcount()));
    offset_ += n;
  }
  std::uint8_t u8() {
    char b;
    bytes(&b, 1);
    return static_cast<std::uint8_t>(b);
  }
  std::uint32_t u32() {
    char b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    char b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t offset() const { return offset_; }
  bool at_eof() {
    in_.peek();
    return in_.eof();
  }

 private:
  std::ifstream in_;
  std::size_t offset_ = 0;
};

inline void expect_magic(LeReader& r, const char expected[5]) {
  const std::size_t at = r.offset();
  char found[5] = {0, 0, 0, 0, 0};
  r.bytes(found, 4);
  if (std::memcmp(found, expected, 4) != 0)
    throw FormatError(std::string("bad magic: expected \"") + expected + "\", found \"" +
                          std::string(found, 4) + "\"",
                      at);
}

}  // namespace detail

/// Complex array container, magic "S2CX": version u32, dim-count u8, dims
/// u64 each, then row-major interleaved (real, imaginary) f64 pairs. All
/// integers and doubles little-endian.
inline void write_complex_image(const std::string& path, const ComplexImage& img) {
  detail::LeWriter w(path);
  w.bytes("S2CX", 4);
  w.u32(1);
  w.u8(static_cast<std::uint8_t>(img.dims.size()));
  for (std::size_t d : img.dims) w.u64(d);
  for (const Complex& c : img.data) {
    w.f64(c.real());
    w.f64(c.imag());
  }
  if (!w.good()) throw std::runtime_error("write failed: " + path);
}

inline ComplexImage read_complex_image(const std::string& path) {
  detail::LeReader r(path);
  detail::expect_magic(r, "S2CX");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32();
  if (version != 1)
    throw FormatError("unsupported version " + std::to_string(version), version_at);
  const std::uint8_t dim_count = r.u8();
  if (dim_count == 0 || dim_count > 3)
    throw FormatError("dim-count must be 1..3", r.offset() - 1);
  std::vector<std::size_t> dims(dim_count);
  for (auto& d : dims) d = static_cast<std::size_t>(r.u64());
  ComplexImage img(dims);
  for (Complex& c : img.data) {
    const double re = r.f64();
    const double im = r.f64();
    c = Complex{re, im};
  }
  if (!r.at_eof()) throw FormatError("trailing bytes after payload", r.offset());
  return img;
}

/// Sampling-mask container, magic "S2MK": version u32, mode u8, dim-count
/// u8, dims u64 each, index-count u64, indices u64 each, then p f64, beta
/// f64, seed u64, target-count u64, actual-count u64. Uniform masks store
/// p = -1.
inline void write_mask(const std::string& path, const SamplingMask& mask) {
  detail::LeWriter w(path);
  w.bytes("S2MK", 4);
  w.u32(1);
  w.u8(static_cast<std::uint8_t>(mask.mode));
  w.u8(static_cast<std::uint8_t>(mask.dims.size()));
  for (std::size_t d : mask.dims) w.u64(d);
  w.u64(mask.indices.size());
  for (std::size_t i : mask.indices) w.u64(i);
  w.f64(mask.p);
  w.f64(mask.beta);
  w.u64(mask.seed);
  w.u64(mask.target_m);
  w.u64(mask.actual_m);
  if (!w.good()) throw std::runtime_error("write failed: " + path);
}

inline SamplingMask read_mask(const std::string& path) {
  detail::LeReader r(path);
  detail::expect_magic(r, "S2MK");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32();
  if (version != 1)
    throw FormatError("unsupported version " + std::to_string(version), version_at);
  SamplingMask mask;
  const std::uint8_t mode = r.u8();
  if (mode > 1) throw FormatError("unknown mask mode", r.offset() - 1);
  mask.mode = static_cast<SamplingMask::Mode>(mode);
  const std::uint8_t dim_count = r.u8();
  if (dim_count == 0 || dim_count > 3)
    throw FormatError("dim-count must be 1..3", r.offset() - 1);
  mask.dims.resize(dim_count);
  for (auto& d : mask.dims) d = static_cast<std::size_t>(r.u64());
  const std::uint64_t count = r.u64();
  const std::size_t grid = total_size(mask.dims);
  if (count > grid) throw FormatError("index count exceeds grid size", r.offset() - 8);
  mask.indices.resize(count);
  for (auto& i : mask.indices) {
    i = static_cast<std::size_t>(r.u64());
    if (i >= grid) throw FormatError("index out of range", r.offset() - 8);
  }
  mask.p = r.f64();
  mask.beta = r.f64();
  mask.seed = static_cast<std::uint64_t>(r.u64());
  mask.target_m = static_cast<std::size_t>(r.u64());
  mask.actual_m = static_cast<std::size_t>(r.u64());
  if (!r.at_eof()) throw FormatError("trailing bytes after payload", r.offset());
  return mask;
}

/// Plain-text key=value parser for experiment configs: one pair per line,
/// '#' starts a comment, blank lines skipped, whitespace trimmed.
inline std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config line " + std::to_string(line_no) + ": empty key");
    kv[key] = value;
  }
  return kv;
}

inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  return parse_key_values(in);
}

/// Ordered key=value manifest writer (config snapshot, seeds, version,
/// timings) so a run can be reproduced from its outputs.
inline void write_manifest(const std::string& path,
                           const std::vector<std::pair<std::string, std::string>>& entries) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& [key, value] : entries) out << key << "=" << value << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace s2
