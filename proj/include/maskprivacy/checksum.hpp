#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

namespace maskprivacy {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> bytes);
std::string to_hex(const Digest& d);
std::string sha256_hex(const std::string& text);
/// Hex SHA-256 of a file's bytes; throws if the file cannot be read.
std::string sha256_file(const std::filesystem::path& path);
/// Digest over every regular file below `dir` (relative path + content), in
/// sorted path order.
std::string sha256_tree(const std::filesystem::path& dir);

/// Writes to `path.tmp` and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace maskprivacy
