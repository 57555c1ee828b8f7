#include "juris/text.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace juris::text {

namespace {

constexpr char32_t kReplacement = 0xFFFD;

std::size_t sequence_length(unsigned char lead) noexcept
{
    if (lead < 0x80) return 1;
    if ((lead & 0xE0) == 0xC0) return 2;
    if ((lead & 0xF0) == 0xE0) return 3;
    if ((lead & 0xF8) == 0xF0) return 4;
    return 0;
}

// Decodes one code point at `pos`; returns the number of bytes consumed (>= 1).
std::size_t decode_one(std::string_view s, std::size_t pos, char32_t& cp) noexcept
{
    auto lead = static_cast<unsigned char>(s[pos]);
    std::size_t len = sequence_length(lead);
    if (len == 0 || pos + len > s.size()) {
        cp = kReplacement;
        return 1;
    }
    if (len == 1) {
        cp = lead;
        return 1;
    }
    char32_t value = lead & (0xFF >> (len + 1));
    for (std::size_t i = 1; i < len; ++i) {
        auto c = static_cast<unsigned char>(s[pos + i]);
        if ((c & 0xC0) != 0x80) {
            cp = kReplacement;
            return 1;
        }
        value = (value << 6) | (c & 0x3F);
    }
    cp = value;
    return len;
}

bool is_control(char32_t cp) noexcept
{
    return (cp < 0x20 && cp != '\n' && cp != '\t') || cp == 0x7F || (cp >= 0x80 && cp < 0xA0) ||
           cp == 0x200B || cp == 0xFEFF;
}

}  // namespace

std::vector<char32_t> decode_utf8(std::string_view s)
{
    std::vector<char32_t> out;
    out.reserve(s.size());
    for (std::size_t pos = 0; pos < s.size();) {
        char32_t cp = 0;
        pos += decode_one(s, pos, cp);
        out.push_back(cp);
    }
    return out;
}

void append_utf8(std::string& out, char32_t cp)
{
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::string encode_utf8(const std::vector<char32_t>& cps)
{
    std::string out;
    out.reserve(cps.size() * 3);
    for (char32_t cp : cps) append_utf8(out, cp);
    return out;
}

std::size_t codepoint_count(std::string_view s)
{
    std::size_t n = 0;
    for (std::size_t pos = 0; pos < s.size(); ++n) {
        char32_t cp = 0;
        pos += decode_one(s, pos, cp);
    }
    return n;
}

std::size_t byte_offset(std::string_view s, std::size_t cp_index)
{
    std::size_t pos = 0;
    for (std::size_t i = 0; i < cp_index && pos < s.size(); ++i) {
        char32_t cp = 0;
        pos += decode_one(s, pos, cp);
    }
    return pos;
}

std::string substr_cp(std::string_view s, std::size_t cp_begin, std::size_t cp_end)
{
    std::size_t b = byte_offset(s, cp_begin);
    std::size_t e = byte_offset(s, cp_end);
    return std::string(s.substr(b, e - b));
}

bool is_space(char32_t cp) noexcept
{
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v' ||
           cp == 0xA0 || cp == 0x3000 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 ||
           cp == 0x2029 || cp == 0x202F || cp == 0x205F;
}

bool is_separator(char32_t cp) noexcept
{
    if (cp < 0x80) {
        return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
               (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
    }
    return (cp >= 0x2010 && cp <= 0x206F) || (cp >= 0x3000 && cp <= 0x303F) ||
           (cp >= 0xFF01 && cp <= 0xFF0F) || (cp >= 0xFF1A && cp <= 0xFF20) ||
           (cp >= 0xFF3B && cp <= 0xFF40) || (cp >= 0xFF5B && cp <= 0xFF65) || cp == 0x00B7 ||
           cp == 0xFE30 || (cp >= 0xFE10 && cp <= 0xFE19) || (cp >= 0xFE50 && cp <= 0xFE6B);
}

std::string_view trim(std::string_view s) noexcept
{
    // ASCII whitespace only; callers normalize wide spaces first.
    auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
    while (!s.empty() && is_ws(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_ws(s.back())) s.remove_suffix(1);
    return s;
}

bool is_blank(std::string_view s)
{
    for (std::size_t pos = 0; pos < s.size();) {
        char32_t cp = 0;
        pos += decode_one(s, pos, cp);
        if (!is_space(cp)) return false;
    }
    return true;
}

std::string normalize_whitespace(std::string_view s)
{
    // Pass 1: drop control characters, fold horizontal whitespace to ' '.
    std::string folded;
    folded.reserve(s.size());
    for (std::size_t pos = 0; pos < s.size();) {
        char32_t cp = 0;
        pos += decode_one(s, pos, cp);
        if (cp == '\r') {
            if (pos < s.size() && s[pos] == '\n') continue;
            folded.push_back('\n');
            continue;
        }
        if (cp == '\n' || cp == 0x2028 || cp == 0x2029) {
            folded.push_back('\n');
            continue;
        }
        if (is_space(cp)) {
            folded.push_back(' ');
            continue;
        }
        if (is_control(cp)) continue;
        append_utf8(folded, cp);
    }

    // Pass 2: per line, collapse spaces and trim; keep at most one blank line.
    std::string out;
    out.reserve(folded.size());
    int pending_newlines = 0;
    for (std::string_view line : split_lines(folded)) {
        std::string collapsed;
        bool in_space = false;
        for (char c : trim(line)) {
            if (c == ' ') {
                if (!in_space) collapsed.push_back(' ');
                in_space = true;
            } else {
                collapsed.push_back(c);
                in_space = false;
            }
        }
        if (collapsed.empty()) {
            if (!out.empty()) pending_newlines = 2;
            continue;
        }
        if (!out.empty()) out.append(pending_newlines >= 2 ? "\n\n" : "\n");
        out += collapsed;
        pending_newlines = 1;
    }
    return out;
}

std::string collapse_whitespace(std::string_view s)
{
    std::string out;
    out.reserve(s.size());
    bool in_space = false;
    for (std::size_t pos = 0; pos < s.size();) {
        char32_t cp = 0;
        pos += decode_one(s, pos, cp);
        if (is_space(cp)) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out.push_back(' ');
        in_space = false;
        append_utf8(out, cp);
    }
    return out;
}

std::string to_lower_ascii(std::string_view s)
{
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

std::vector<std::string_view> split_lines(std::string_view s)
{
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t nl = s.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.push_back(s.substr(start));
            break;
        }
        lines.push_back(s.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

std::string fixed2_half_up(double value)
{
    if (!std::isfinite(value)) return "nan";
    bool negative = value < 0;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9f", std::fabs(value));
    std::string digits(buf);
    std::size_t dot = digits.find('.');
    std::string int_part = digits.substr(0, dot);
    std::string frac = digits.substr(dot + 1);

    // Scaled integer = int_part * 100 + first two fractional digits.
    long long scaled = std::atoll(int_part.c_str()) * 100 + (frac[0] - '0') * 10 + (frac[1] - '0');
    if (frac[2] >= '5') ++scaled;

    char out[64];
    std::snprintf(out, sizeof out, "%s%lld.%02lld", (negative && scaled != 0) ? "-" : "", scaled / 100,
                  scaled % 100);
    return out;
}

std::string percent2_half_up(std::int64_t num, std::int64_t den)
{
    if (den <= 0) return "-";
    // round(10000*num/den) half-up == floor((20000*num + den) / (2*den))
    std::int64_t scaled = (20000 * num + den) / (2 * den);
    char out[64];
    std::snprintf(out, sizeof out, "%lld.%02lld", static_cast<long long>(scaled / 100),
                  static_cast<long long>(scaled % 100));
    return out;
}

}  // namespace juris::text
