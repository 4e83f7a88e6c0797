#pragma once

// Little-endian encode/decode helpers shared by the cache and index formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <string>
#include <string_view>

#include "cfr/error.hpp"

namespace cfr::detail {

template <typename T>
T to_little_endian(T v) noexcept {
  if constexpr (std::endian::native == std::endian::big) {
    T out;
    auto* src = reinterpret_cast<const unsigned char*>(&v);
    auto* dst = reinterpret_cast<unsigned char*>(&out);
    for (std::size_t i = 0; i < sizeof(T); ++i) dst[i] = src[sizeof(T) - 1 - i];
    return out;
  } else {
    return v;
  }
}

inline void put_u32(std::string& buf, std::uint32_t v) {
  v = to_little_endian(v);
  buf.append(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void put_u64(std::string& buf, std::uint64_t v) {
  v = to_little_endian(v);
  buf.append(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void put_f32(std::string& buf, float f) {
  put_u32(buf, std::bit_cast<std::uint32_t>(f));
}

inline std::uint32_t get_u32(const char* p) noexcept {
  std::uint32_t v;
  std::memcpy(&v, p, sizeof v);
  return to_little_endian(v);
}

inline std::uint64_t get_u64(const char* p) noexcept {
  std::uint64_t v;
  std::memcpy(&v, p, sizeof v);
  return to_little_endian(v);
}

inline float get_f32(const char* p) noexcept {
  return std::bit_cast<float>(get_u32(p));
}

// Reads exactly n bytes or throws TruncatedPayload.
inline void read_exact(std::istream& in, char* dst, std::size_t n,
                       std::string_view what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw Error(ErrorCode::kTruncatedPayload,
                "unexpected end of input while reading " + std::string(what));
  }
}

// Throws TrailingBytes if the stream still has data.
inline void expect_eof(std::istream& in) {
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::kTrailingBytes, "bytes after the last record");
  }
}

// Bytes left in a seekable stream, or -1 when the stream cannot seek.
inline std::int64_t remaining_bytes(std::istream& in) {
  const auto here = in.tellg();
  if (here == std::streampos(-1)) return -1;
  in.seekg(0, std::ios::end);
  const auto end = in.tellg();
  in.seekg(here);
  if (end == std::streampos(-1) || !in) {
    in.clear();
    in.seekg(here);
    return -1;
  }
  return static_cast<std::int64_t>(end - here);
}

}  // namespace cfr::detail
