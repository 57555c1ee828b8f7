#include "juris/chunking.hpp"

#include <cstdio>
#include <regex>

#include "juris/error.hpp"
#include "juris/text.hpp"

namespace juris::kb {

std::string make_chunk_id(std::string_view doc_id, int chunk_index)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%04d", chunk_index);
    return std::string(doc_id) + buf;
}

std::optional<int> parse_numeral(std::string_view numeral)
{
    if (numeral.empty()) return std::nullopt;
    bool all_ascii_digits = true;
    for (char c : numeral) all_ascii_digits = all_ascii_digits && c >= '0' && c <= '9';
    if (all_ascii_digits) {
        if (numeral.size() > 9) return std::nullopt;
        return std::stoi(std::string(numeral));
    }

    long long total = 0;
    long long section = 0;
    long long pending = -1;  // last digit not yet bound to a unit
    for (char32_t cp : text::decode_utf8(numeral)) {
        int digit = -1;
        long long unit = 0;
        switch (cp) {
        case U'零': case U'〇': digit = 0; break;
        case U'一': digit = 1; break;
        case U'二': case U'两': digit = 2; break;
        case U'三': digit = 3; break;
        case U'四': digit = 4; break;
        case U'五': digit = 5; break;
        case U'六': digit = 6; break;
        case U'七': digit = 7; break;
        case U'八': digit = 8; break;
        case U'九': digit = 9; break;
        case U'十': unit = 10; break;
        case U'百': unit = 100; break;
        case U'千': unit = 1000; break;
        case U'万': unit = 10000; break;
        default:
            if (cp >= '0' && cp <= '9') {
                digit = static_cast<int>(cp - '0');
                break;
            }
            return std::nullopt;
        }
        if (digit >= 0) {
            pending = digit;
        } else if (unit == 10000) {
            section += pending < 0 ? 0 : pending;
            total += (section == 0 ? 1 : section) * unit;
            section = 0;
            pending = -1;
        } else {
            section += (pending < 0 ? 1 : pending) * unit;
            pending = -1;
        }
    }
    long long value = total + section + (pending < 0 ? 0 : pending);
    if (value <= 0 || value > 1'000'000'000) return std::nullopt;
    return static_cast<int>(value);
}

namespace {

struct Marker {
    std::size_t cp_start;
    std::optional<int> article_no;
};

std::vector<Marker> find_markers(std::string_view body, const std::vector<char32_t>& cps, const std::regex& re)
{
    std::vector<Marker> markers;
    std::size_t byte = 0;
    std::size_t cp = 0;
    bool at_line_start = true;
    while (cp < cps.size()) {
        if (at_line_start) {
            // Skip indentation without crossing the newline.
            std::size_t scan_cp = cp;
            std::size_t scan_byte = byte;
            while (scan_cp < cps.size() && cps[scan_cp] != '\n' && text::is_space(cps[scan_cp])) {
                std::string tmp;
                text::append_utf8(tmp, cps[scan_cp]);
                scan_byte += tmp.size();
                ++scan_cp;
            }
            std::size_t line_end = body.find('\n', scan_byte);
            if (line_end == std::string_view::npos) line_end = body.size();
            std::cmatch m;
            if (scan_byte < line_end &&
                std::regex_search(body.data() + scan_byte, body.data() + line_end, m, re,
                                  std::regex_constants::match_continuous)) {
                std::optional<int> number;
                for (std::size_t g = 1; g < m.size() && !number; ++g) {
                    if (m[g].matched) number = parse_numeral(m[g].str());
                }
                markers.push_back({scan_cp, number});
            }
            at_line_start = false;
        }
        std::string tmp;
        text::append_utf8(tmp, cps[cp]);
        byte += tmp.size();
        if (cps[cp] == '\n') at_line_start = true;
        ++cp;
    }
    return markers;
}

// Narrows [start, end) so it excludes boundary whitespace; returns false if nothing is left.
bool trim_span(const std::vector<char32_t>& cps, std::size_t& start, std::size_t& end)
{
    while (start < end && text::is_space(cps[start])) ++start;
    while (end > start && text::is_space(cps[end - 1])) --end;
    return start < end;
}

}  // namespace

std::vector<DocChunk> chunk_document(const LegalDocument& doc, const ChunkPolicy& policy)
{
    if (policy.window_chars == 0) throw Error(ErrorCode::InvalidConfig, "window_chars must be positive");
    std::regex re;
    try {
        re = std::regex(policy.article_pattern, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("bad article pattern: ") + e.what());
    }

    const std::vector<char32_t> cps = text::decode_utf8(doc.body);
    std::vector<DocChunk> chunks;
    auto emit = [&](std::size_t start, std::size_t end, std::optional<int> article_no) {
        DocChunk c;
        c.doc_id = doc.doc_id;
        c.chunk_index = static_cast<int>(chunks.size());
        c.chunk_id = make_chunk_id(doc.doc_id, c.chunk_index);
        c.article_no = article_no;
        c.char_span = {start, end};
        c.text = text::encode_utf8(std::vector<char32_t>(cps.begin() + static_cast<std::ptrdiff_t>(start),
                                                         cps.begin() + static_cast<std::ptrdiff_t>(end)));
        chunks.push_back(std::move(c));
    };

    std::vector<Marker> markers = find_markers(doc.body, cps, re);
    if (!markers.empty()) {
        std::size_t pre_start = 0;
        std::size_t pre_end = markers.front().cp_start;
        if (trim_span(cps, pre_start, pre_end)) emit(pre_start, pre_end, std::nullopt);
        for (std::size_t i = 0; i < markers.size(); ++i) {
            std::size_t start = markers[i].cp_start;
            std::size_t end = i + 1 < markers.size() ? markers[i + 1].cp_start : cps.size();
            if (trim_span(cps, start, end)) emit(start, end, markers[i].article_no);
        }
        return chunks;
    }

    for (std::size_t start = 0; start < cps.size(); start += policy.window_chars) {
        std::size_t end = std::min(cps.size(), start + policy.window_chars);
        bool blank = true;
        for (std::size_t i = start; i < end && blank; ++i) blank = text::is_space(cps[i]);
        if (!blank) emit(start, end, std::nullopt);
    }
    return chunks;
}

}  // namespace juris::kb
