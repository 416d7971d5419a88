#pragma once
// Little-endian binary encoding helpers and CRC32 (IEEE, zlib-compatible)
// used by the URMM / URMG file formats.

#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>

namespace mqr {

std::uint32_t crc32(std::span<const unsigned char> bytes);

inline std::uint32_t crc32_str(const std::string& s) {
  return crc32({reinterpret_cast<const unsigned char*>(s.data()), s.size()});
}

// Append-only byte buffer; payload built in memory, checksummed, then flushed.
struct ByteWriter {
  std::string buf;

  void put_bytes(const void* p, std::size_t n) {
    buf.append(static_cast<const char*>(p), n);
  }
  void put_u32(std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    put_bytes(b, 4);
  }
  void put_u64(std::uint64_t v) {
    put_u32(static_cast<std::uint32_t>(v));
    put_u32(static_cast<std::uint32_t>(v >> 32));
  }
  void put_f32(float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(u);
  }
};

struct ByteReader {
  std::span<const unsigned char> bytes;
  std::size_t pos = 0;

  explicit ByteReader(std::span<const unsigned char> b) : bytes(b) {}

  void need(std::size_t n) const {
    if (pos + n > bytes.size())
      throw std::runtime_error("unexpected EOF (truncated file)");
  }
  std::uint32_t get_u32() {
    need(4);
    std::uint32_t v = static_cast<std::uint32_t>(bytes[pos]) |
                      (static_cast<std::uint32_t>(bytes[pos + 1]) << 8) |
                      (static_cast<std::uint32_t>(bytes[pos + 2]) << 16) |
                      (static_cast<std::uint32_t>(bytes[pos + 3]) << 24);
    pos += 4;
    return v;
  }
  std::uint64_t get_u64() {
    const std::uint64_t lo = get_u32();
    const std::uint64_t hi = get_u32();
    return lo | (hi << 32);
  }
  float get_f32() {
    const std::uint32_t u = get_u32();
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }
  std::size_t remaining() const { return bytes.size() - pos; }
};

std::string read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::string& bytes);

}  // namespace mqr
