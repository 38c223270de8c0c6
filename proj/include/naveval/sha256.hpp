#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace naveval {

/// SHA-256 of a byte buffer, returned as a lowercase hex string.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

/// SHA-256 of a file's contents. Throws std::runtime_error if unreadable.
std::string sha256_file_hex(const std::string& path);

}  // namespace naveval
