#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace juris::text {

/// Decodes UTF-8 into code points. Invalid bytes decode to U+FFFD, one per byte.
std::vector<char32_t> decode_utf8(std::string_view s);

void append_utf8(std::string& out, char32_t cp);
std::string encode_utf8(const std::vector<char32_t>& cps);

std::size_t codepoint_count(std::string_view s);

/// Byte offset of the code point with index `cp_index`; returns s.size() past the end.
std::size_t byte_offset(std::string_view s, std::size_t cp_index);

/// Substring addressed in code points: [cp_begin, cp_end).
std::string substr_cp(std::string_view s, std::size_t cp_begin, std::size_t cp_end);

bool is_space(char32_t cp) noexcept;

/// Punctuation and symbol code points that separate lexical runs (ASCII
/// punctuation, CJK punctuation, full-width forms, general punctuation).
bool is_separator(char32_t cp) noexcept;

std::string_view trim(std::string_view s) noexcept;
bool is_blank(std::string_view s);

/// Strips control characters, maps horizontal whitespace (including U+3000
/// and NBSP) to a single space, trims each line and collapses blank-line runs.
std::string normalize_whitespace(std::string_view s);

/// Collapses every whitespace run (including newlines) to one space and trims.
std::string collapse_whitespace(std::string_view s);

std::string to_lower_ascii(std::string_view s);

std::vector<std::string_view> split_lines(std::string_view s);

/// Two-decimal rendering, half away from zero on the decimal value the
/// double was meant to hold (binary noise below 1e-9 is discarded first).
std::string fixed2_half_up(double value);

/// Exact two-decimal percentage 100*num/den, half-up, via integer arithmetic.
std::string percent2_half_up(std::int64_t num, std::int64_t den);

}  // namespace juris::text
