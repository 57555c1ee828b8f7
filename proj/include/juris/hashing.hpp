#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace juris {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// 64-bit prefix of the SHA-256 digest; used where a stable numeric key is needed.
std::uint64_t sha256_u64(std::string_view data);

}  // namespace juris
