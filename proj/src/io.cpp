#include "sokd/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sokd::io {

namespace {

template <typename T>
void write_le(const std::filesystem::path& path, const std::vector<T>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for write: " + path.string());
  for (T v : data) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), 8);
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

template <typename T>
std::vector<T> read_le(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for read: " + path.string());
  std::vector<T> data;
  unsigned char buf[8];
  while (in.read(reinterpret_cast<char*>(buf), 8)) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    T v;
    std::memcpy(&v, &bits, 8);
    data.push_back(v);
  }
  if (in.gcount() != 0) throw std::runtime_error("truncated 8-byte record in " + path.string());
  return data;
}

}  // namespace

void write_f64(const std::filesystem::path& path, const std::vector<double>& data) {
  write_le(path, data);
}
std::vector<double> read_f64(const std::filesystem::path& path) { return read_le<double>(path); }
void write_i64(const std::filesystem::path& path, const std::vector<std::int64_t>& data) {
  write_le(path, data);
}
std::vector<std::int64_t> read_i64(const std::filesystem::path& path) {
  return read_le<std::int64_t>(path);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for write: " + path.string());
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for read: " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace sokd::io
