#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace credlens {

std::string readTextFile(const std::filesystem::path& path);
std::vector<std::uint8_t> readBinaryFile(const std::filesystem::path& path);

/// Writes through a sibling temporary file and renames it over the target,
/// so readers never observe a partially written file.
void writeFileAtomic(const std::filesystem::path& path, std::string_view content);

/// Lower-case hex SHA-256.
std::string sha256Hex(std::span<const std::uint8_t> bytes);
std::string sha256Hex(std::string_view text);
std::string sha256File(const std::filesystem::path& path);

std::string base64Encode(std::span<const std::uint8_t> bytes);

/// Shortest decimal form that parses back to the identical double.
std::string formatDouble(double value);
/// Strict parse of a whole field; throws credlens::Error on trailing garbage.
double parseDouble(std::string_view text);
long long parseInteger(std::string_view text);

std::string trim(std::string_view text);
std::string toLower(std::string_view text);

}  // namespace credlens
