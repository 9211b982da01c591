#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sokd::io {

// Raw little-endian array files used by dataset/checkpoint directories.
void write_f64(const std::filesystem::path& path, const std::vector<double>& data);
std::vector<double> read_f64(const std::filesystem::path& path);
void write_i64(const std::filesystem::path& path, const std::vector<std::int64_t>& data);
std::vector<std::int64_t> read_i64(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace sokd::io
