#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rubriclearn::text {

/// Number of Unicode code points in a UTF-8 string. Invalid bytes count as one
/// code point each.
std::size_t codepoint_length(std::string_view utf8);

/// Byte offset of code point `cp_index` (clamped to the string end).
std::size_t codepoint_to_byte(std::string_view utf8, std::size_t cp_index);

/// Code point index of byte offset `byte_offset`.
std::size_t byte_to_codepoint(std::string_view utf8, std::size_t byte_offset);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// 16 lowercase hex digits.
std::string hex64(std::uint64_t value);

/// printf-style fixed-point rendering, e.g. `fixed(4.925, 2)`.
std::string fixed(double value, int decimals);

std::string trim(std::string_view s);

bool starts_with(std::string_view s, std::string_view prefix);

std::vector<std::string> split_lines(std::string_view s);

std::string read_file(const std::filesystem::path& path);

/// Writes via a temporary sibling and rename so readers never see partial files.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

} // namespace rubriclearn::text
