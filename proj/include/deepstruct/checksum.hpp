#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace deepstruct {

// Standard reflected CRC-32 (polynomial 0xEDB88320), same as zlib's crc32().
std::uint32_t crc32(const void* data, std::size_t len, std::uint32_t crc = 0);

// FNV-1a 64-bit hash; used to fingerprint canonical config text.
std::uint64_t fnv1a64(std::string_view s);

}  // namespace deepstruct
