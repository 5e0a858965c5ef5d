#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "actionkit/tensor.hpp"

namespace actionkit::io {

// "ATNZ v1": magic bytes "ATNZ", u32 little-endian rank, rank x u64
// little-endian extents, then row-major little-endian 32-bit floats.
void write_atnz(const std::filesystem::path& path, const Tensor<float>& t);
Tensor<float> read_atnz(const std::filesystem::path& path);

// 8-bit binary PGM (P5); values clamped to [0,1] and scaled to 0..255.
void write_pgm(const std::filesystem::path& path, const Tensor<float>& image);

// Shortest round-trip decimal form; identical inputs give identical text.
std::string format_number(double v);

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

// Minimal TOML-style key = value files (strings may be quoted, '#' comments).
std::map<std::string, std::string> parse_kv_file(const std::filesystem::path& path);
std::string render_kv(const std::map<std::string, std::string>& kv);

}  // namespace actionkit::io
