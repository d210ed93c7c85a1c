#include "ampuq/checksum.hpp"

#include <array>

#include <fmt/format.h>

namespace ampuq {

namespace {

constexpr std::uint64_t kPoly = 0xC96C5795D7870F42ULL;

constexpr std::array<std::uint64_t, 256> make_table() {
  std::array<std::uint64_t, 256> table{};
  for (std::uint64_t i = 0; i < 256; ++i) {
    std::uint64_t c = i;
    for (int k = 0; k < 8; ++k)
      c = (c & 1) ? (c >> 1) ^ kPoly : c >> 1;
    table[i] = c;
  }
  return table;
}

constexpr auto kTable = make_table();

} // namespace

std::uint64_t crc64(std::span<const std::uint8_t> bytes, std::uint64_t crc) {
  crc = ~crc;
  for (std::uint8_t b : bytes)
    crc = kTable[(crc ^ b) & 0xFF] ^ (crc >> 8);
  return ~crc;
}

std::uint64_t crc64(const std::string &text) {
  return crc64({reinterpret_cast<const std::uint8_t *>(text.data()), text.size()});
}

std::string hex64(std::uint64_t value) { return fmt::format("{:016x}", value); }

} // namespace ampuq
