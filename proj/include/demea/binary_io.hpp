#pragma once
// Little-endian scalar IO independent of host byte order.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "demea/error.hpp"

namespace demea::binary {

template <typename UInt>
void write_uint(std::ostream& out, UInt v) {
  char bytes[sizeof(UInt)];
  for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(UInt));
}

template <typename UInt>
UInt read_uint(std::istream& in) {
  unsigned char bytes[sizeof(UInt)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(UInt))) throw IoError("unexpected end of binary data");
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(bytes[i]) << (8 * i);
  return v;
}

inline void write_u32(std::ostream& out, std::uint32_t v) { write_uint(out, v); }
inline std::uint32_t read_u32(std::istream& in) { return read_uint<std::uint32_t>(in); }
inline void write_i64(std::ostream& out, std::int64_t v) { write_uint(out, static_cast<std::uint64_t>(v)); }
inline std::int64_t read_i64(std::istream& in) { return static_cast<std::int64_t>(read_uint<std::uint64_t>(in)); }
inline void write_f32(std::ostream& out, float v) { write_uint(out, std::bit_cast<std::uint32_t>(v)); }
inline float read_f32(std::istream& in) { return std::bit_cast<float>(read_uint<std::uint32_t>(in)); }
inline void write_f64(std::ostream& out, double v) { write_uint(out, std::bit_cast<std::uint64_t>(v)); }
inline double read_f64(std::istream& in) { return std::bit_cast<double>(read_uint<std::uint64_t>(in)); }

inline void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
  const std::uint32_t n = read_u32(in);
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) throw IoError("unexpected end of binary data");
  return s;
}

}  // namespace demea::binary
