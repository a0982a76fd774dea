#pragma once

#include <span>
#include <string>
#include <string_view>

namespace verce {

/// Lower-case hex SHA-256 of a byte range.
std::string sha256Hex(std::span<const unsigned char> bytes);

inline std::string sha256Hex(std::string_view text) {
  return sha256Hex(std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

} // namespace verce
