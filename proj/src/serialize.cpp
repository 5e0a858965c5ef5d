#include "actionkit/serialize.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "actionkit/errors.hpp"

namespace actionkit::io {

namespace {

void put_u32_le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64_le(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32_le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t get_u64_le(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

void write_atnz(const std::filesystem::path& path, const Tensor<float>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write("ATNZ", 4);
  put_u32_le(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) put_u64_le(os, static_cast<std::uint64_t>(e));
  static_assert(sizeof(float) == 4);
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::uint32_t bits;
    const float v = t[i];
    std::memcpy(&bits, &v, 4);
    put_u32_le(os, bits);
  }
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

Tensor<float> read_atnz(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "ATNZ", 4) != 0) {
    throw IoError("'" + path.string() + "' is not an ATNZ v1 file");
  }
  const std::uint32_t rank = get_u32_le(is);
  if (!is || rank > 8) throw IoError("'" + path.string() + "' has an invalid rank");
  Shape shape(rank);
  std::size_t numel = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint64_t e = get_u64_le(is);
    if (!is || e == 0 || e > (1ull << 32)) {
      throw IoError("'" + path.string() + "' has an invalid extent");
    }
    shape[i] = static_cast<std::size_t>(e);
    numel *= shape[i];
  }
  std::vector<float> data(numel);
  for (std::size_t i = 0; i < numel; ++i) {
    const std::uint32_t bits = get_u32_le(is);
    if (!is) throw IoError("'" + path.string() + "' is truncated");
    std::memcpy(&data[i], &bits, 4);
  }
  return Tensor<float>(std::move(shape), std::move(data));
}

void write_pgm(const std::filesystem::path& path, const Tensor<float>& image) {
  if (image.rank() != 2) throw ShapeError("write_pgm: image must be rank 2");
  const std::size_t h = image.shape()[0];
  const std::size_t w = image.shape()[1];
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << "P5\n" << w << " " << h << "\n255\n";
  for (std::size_t i = 0; i < image.size(); ++i) {
    float v = image[i];
    v = std::min(1.0f, std::max(0.0f, v));
    const unsigned char byte = static_cast<unsigned char>(v * 255.0f + 0.5f);
    os.write(reinterpret_cast<const char*>(&byte), 1);
  }
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << content;
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> parse_kv_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config '" + path.string() + "' line " +
                        std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (key.empty()) {
      throw ConfigError("config '" + path.string() + "' line " +
                        std::to_string(lineno) + ": empty key");
    }
    kv[key] = value;
  }
  return kv;
}

std::string render_kv(const std::map<std::string, std::string>& kv) {
  std::ostringstream os;
  for (const auto& [k, v] : kv) {
    const bool quote = v.find_first_not_of("0123456789.+-eE") != std::string::npos ||
                       v.empty();
    os << k << " = ";
    if (quote) {
      os << '"' << v << '"';
    } else {
      os << v;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace actionkit::io
