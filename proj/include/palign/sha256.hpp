#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace palign::numcore {

/// Hex digest of the SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// Hex digest of a whole file; IoError if it cannot be read.
std::string sha256_file(const std::filesystem::path& path);

} // namespace palign::numcore
