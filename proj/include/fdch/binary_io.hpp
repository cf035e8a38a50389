#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

// Little-endian primitives for the FDCH binary containers. Encoding is byte
// by byte, so files are identical regardless of host endianness.

namespace fdch::io {

inline void write_uint(std::ostream& out, std::uint64_t v, int bytes) {
  char buf[8];
  for (int i = 0; i < bytes; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, bytes);
}

inline void write_u16(std::ostream& out, std::uint16_t v) { write_uint(out, v, 2); }
inline void write_u32(std::ostream& out, std::uint32_t v) { write_uint(out, v, 4); }
inline void write_u64(std::ostream& out, std::uint64_t v) { write_uint(out, v, 8); }

inline void write_f64(std::ostream& out, double v) {
  write_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline std::uint64_t read_uint(std::istream& in, int bytes) {
  char buf[8];
  in.read(buf, bytes);
  if (in.gcount() != bytes) throw std::runtime_error("unexpected end of file");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  return v;
}

inline std::uint16_t read_u16(std::istream& in) { return static_cast<std::uint16_t>(read_uint(in, 2)); }
inline std::uint32_t read_u32(std::istream& in) { return static_cast<std::uint32_t>(read_uint(in, 4)); }
inline std::uint64_t read_u64(std::istream& in) { return read_uint(in, 8); }

inline double read_f64(std::istream& in) {
  return std::bit_cast<double>(read_u64(in));
}

inline void write_magic(std::ostream& out, const std::string& magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

// Reads magic.size() bytes and compares; mismatch_error names the file kind.
inline void expect_magic(std::istream& in, const std::string& magic,
                         const std::string& mismatch_error) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (in.gcount() != static_cast<std::streamsize>(magic.size()))
    throw std::runtime_error("unexpected end of file");
  if (got != magic) throw std::runtime_error(mismatch_error);
}

}  // namespace fdch::io
