#include "cps/forward/field_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace cps::forward {

namespace {

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

void put_u32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

// Reads the next PGM header token, skipping whitespace and '#' comments.
std::string next_token(const std::vector<unsigned char>& b, std::size_t& pos) {
  for (;;) {
    while (pos < b.size() && std::isspace(b[pos])) ++pos;
    if (pos < b.size() && b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::string tok;
  while (pos < b.size() && !std::isspace(b[pos])) tok.push_back(static_cast<char>(b[pos++]));
  return tok;
}

int parse_int(const std::string& tok, const std::filesystem::path& path) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::Io, "malformed PGM header in " + path.string());
  }
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const Vector& image) {
  const auto side = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(image.size()))));
  require(side > 0 && side * side == image.size(), ErrorCode::DimensionMismatch,
          "PGM output needs a square image");
  const std::string header = "P5\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    const double v = std::isnan(image[i]) ? 0.0 : std::clamp(image[i], 0.0, 1.0);
    bytes.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  dump(path, bytes);
}

Vector read_pgm(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  std::size_t pos = 0;
  if (next_token(bytes, pos) != "P5") fail(ErrorCode::Io, path.string() + " is not a P5 PGM");
  const int w = parse_int(next_token(bytes, pos), path);
  const int h = parse_int(next_token(bytes, pos), path);
  const int maxval = parse_int(next_token(bytes, pos), path);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    fail(ErrorCode::Io, "unsupported PGM geometry or depth in " + path.string());
  }
  ++pos;  // single whitespace after maxval
  const std::size_t count = static_cast<std::size_t>(w) * h;
  if (bytes.size() < pos + count) fail(ErrorCode::Io, "truncated PGM " + path.string());
  Vector out(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) out[i] = bytes[pos + i] / static_cast<double>(maxval);
  return out;
}

void write_field(const std::filesystem::path& path, const Vector& values, std::uint32_t side) {
  if (side != 0) {
    require_same_size(values.size(), static_cast<Eigen::Index>(side) * side, "field side");
  }
  std::vector<unsigned char> bytes = {'C', 'P', 'S', 'F'};
  put_u32(bytes, kFieldVersion);
  put_u32(bytes, side);
  put_u32(bytes, 0);
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int k = 0; k < 8; ++k) bytes.push_back(static_cast<unsigned char>(bits >> (8 * k)));
  }
  dump(path, bytes);
}

Vector read_field(const std::filesystem::path& path, std::uint32_t* side_out) {
  const auto bytes = slurp(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "CPSF", 4) != 0) {
    fail(ErrorCode::Io, path.string() + " is not a CPSF field");
  }
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kFieldVersion) {
    fail(ErrorCode::Io, "unsupported CPSF version " + std::to_string(version));
  }
  const std::uint32_t side = get_u32(bytes.data() + 8);
  const std::size_t payload = bytes.size() - 16;
  if (payload % 8 != 0) fail(ErrorCode::Io, "CPSF payload not a multiple of 8 bytes");
  const std::size_t count = payload / 8;
  if (side != 0 && count != static_cast<std::size_t>(side) * side) {
    fail(ErrorCode::Io, "CPSF payload does not match side " + std::to_string(side));
  }
  Vector out(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[16 + 8 * i + k]) << (8 * k);
    out[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(bits);
  }
  if (side_out != nullptr) *side_out = side;
  return out;
}

}  // namespace cps::forward
