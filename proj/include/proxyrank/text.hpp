#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace proxyrank::text {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool starts_with_upper(std::string_view s);

std::vector<std::string> split(std::string_view s, std::string_view delimiter);
std::string join(const std::vector<std::string>& parts, std::string_view delimiter);

/// Collapses runs of whitespace to one space and trims.
std::string normalize_whitespace(std::string_view s);

/// Byte offsets of every UTF-8 code point start, plus a final entry equal to
/// s.size(). Invalid continuation bytes are treated as single-byte points.
std::vector<std::size_t> utf8_boundaries(std::string_view s);

/// Lowercased word tokens: maximal runs of ASCII alphanumerics or non-ASCII
/// bytes.
std::vector<std::string> word_tokens(std::string_view s);

std::string sha256_hex(std::string_view data);

}  // namespace proxyrank::text
