#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pairedepi {

/// Locale-independent formatting at 17 significant digits (round-trip exact).
std::string fmt_double(double x);

/// Locale-independent parse of a full token; throws InvalidInputError with
/// `what` in the message on garbage or trailing characters.
double parse_double(std::string_view token, std::string_view what);
long parse_long(std::string_view token, std::string_view what);

/// Splits one CSV line on commas. No quoting; strips a trailing '\r'.
std::vector<std::string> split_csv_line(std::string_view line);

/// Splits text into lines, dropping a trailing empty line.
std::vector<std::string> split_lines(std::string_view text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// FNV-1a 64-bit content digest, as a 16-char lowercase hex string.
std::uint64_t fnv1a64(std::string_view bytes);
std::string fnv1a64_hex(std::string_view bytes);

}  // namespace pairedepi
