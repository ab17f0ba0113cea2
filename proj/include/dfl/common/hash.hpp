#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dfl {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
/// Writes only when the content differs from what is already on disk.
/// Returns true if the file was (re)written.
bool write_file_if_changed(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace dfl
