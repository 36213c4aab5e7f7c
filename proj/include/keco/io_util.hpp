#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

namespace keco::io {

/// Reads a whole file. Throws Error(IoFailure) when it cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file, then renames over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

/// 64-bit FNV-1a. Every single-byte change alters the digest.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr std::string_view kChecksumAlgo = "fnv1a64";

std::string hex64(std::uint64_t v);

// Little-endian encoders, independent of host byte order.
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}
inline std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}
inline float get_f32(const char* p) { return std::bit_cast<float>(get_u32(p)); }
inline double get_f64(const char* p) { return std::bit_cast<double>(get_u64(p)); }

bool ends_with(std::string_view s, std::string_view suffix);

}  // namespace keco::io
