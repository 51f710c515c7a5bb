#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hitl::text {

// Collapses every run of ASCII whitespace to one space and trims both ends.
std::string normalize_whitespace(std::string_view s);

std::string ascii_lower(std::string_view s);
std::string_view trim(std::string_view s);

// Rough sentence count: '.', '?' and '!' runs followed by whitespace or end.
std::size_t count_sentences(std::string_view s);

std::string read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path, std::string_view contents);

// RFC 3339 UTC timestamp with millisecond precision.
std::string utc_timestamp();

// Fixed-point rendering used by every report ("%.Nf").
std::string fixed(double value, int decimals);

} // namespace hitl::text
