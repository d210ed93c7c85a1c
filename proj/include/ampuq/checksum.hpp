#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace ampuq {

/// CRC-64/XZ (ECMA-182 polynomial, reflected, init and xorout all ones).
/// Incremental: pass the previous result as `crc` to continue a stream.
std::uint64_t crc64(std::span<const std::uint8_t> bytes, std::uint64_t crc = 0);

std::uint64_t crc64(const std::string &text);

std::string hex64(std::uint64_t value);

} // namespace ampuq
