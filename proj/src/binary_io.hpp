#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "tsvan/error.hpp"

namespace tsvan::detail {

template <typename U>
void put_le(std::ostream& os, U v) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

inline void put_f32(std::ostream& os, float v) { put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(v)); }

template <typename U>
U get_le(std::istream& is, const std::string& what) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw IoError("unexpected end of file reading " + what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

inline float get_f32(std::istream& is, const std::string& what) {
  return std::bit_cast<float>(get_le<std::uint32_t>(is, what));
}

}  // namespace tsvan::detail
