#ifndef TASAR_IO_HPP
#define TASAR_IO_HPP

// On-disk formats.
//
// Checkpoint container: magic "TSR1", a little-endian uint64 header length,
// a JSON header of that many bytes, then a float32 little-endian payload.
// The header says what the payload is; the payload carries every learned
// parameter in one flat array.  Checksums are FNV-1a64 over the payload bytes
// exactly as stored, so round-trips are bit-stable.
//
// Dataset blobs are bare float32 little-endian arrays; a JSON manifest next to
// the blob gives per-sample offsets in float32 elements.

#include <Eigen/Dense>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace tasar {

using json = nlohmann::json;

inline constexpr char kCheckpointMagic[4] = {'T', 'S', 'R', '1'};

inline std::uint64_t fnv1a64(const unsigned char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace detail {

inline void put_u32_le(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

// Doubles -> float32 little-endian bytes (round to nearest on narrowing).
inline std::vector<unsigned char> f32_bytes(const Eigen::VectorXd& v) {
  std::vector<unsigned char> out;
  out.reserve(static_cast<std::size_t>(v.size()) * 4);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    float f = static_cast<float>(v[i]);
    detail::put_u32_le(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

inline Eigen::VectorXd f32_parse(const unsigned char* data, std::size_t count) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i)
    v[static_cast<Eigen::Index>(i)] =
        std::bit_cast<float>(detail::get_u32_le(data + 4 * i));
  return v;
}

// Checksum of the float32 image of v, as it would appear on disk.
inline std::uint64_t payload_checksum(const Eigen::VectorXd& v) {
  auto bytes = f32_bytes(v);
  return fnv1a64(bytes.data(), bytes.size());
}

inline void save_checkpoint(const std::filesystem::path& path,
                            const json& header,
                            const Eigen::VectorXd& payload) {
  std::string head = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for write: " + path.string());
  out.write(kCheckpointMagic, 4);
  std::uint64_t len = head.size();
  unsigned char lb[8];
  for (int i = 0; i < 8; ++i)
    lb[i] = static_cast<unsigned char>((len >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(lb), 8);
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  auto bytes = f32_bytes(payload);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

struct Checkpoint {
  json header;
  Eigen::VectorXd payload;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (raw.size() < 12 || std::memcmp(raw.data(), kCheckpointMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i)
    len |= static_cast<std::uint64_t>(raw[4 + i]) << (8 * i);
  if (12 + len > raw.size())
    throw std::runtime_error("truncated checkpoint header: " + path.string());
  Checkpoint ck;
  ck.header = json::parse(raw.begin() + 12, raw.begin() + 12 + static_cast<std::ptrdiff_t>(len));
  std::size_t body = raw.size() - 12 - len;
  if (body % 4 != 0)
    throw std::runtime_error("payload not float32-aligned: " + path.string());
  ck.payload = f32_parse(raw.data() + 12 + len, body / 4);
  return ck;
}

inline void save_blob(const std::filesystem::path& path,
                      const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for write: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::vector<unsigned char> load_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
}

inline json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  return json::parse(in);
}

inline void save_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for write: " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace tasar

#endif  // TASAR_IO_HPP
