#include "juris/syllogism.hpp"

#include <array>

#include "juris/text.hpp"

namespace juris {

namespace {

struct LabelHit {
    std::size_t label_begin = std::string::npos;
    std::size_t body_begin = 0;
};

// Length of a colon (":" or "：") at `pos`, or 0.
std::size_t colon_at(std::string_view s, std::size_t pos)
{
    if (pos < s.size() && s[pos] == ':') return 1;
    if (s.substr(pos, 3) == "\xEF\xBC\x9A") return 3;
    return 0;
}

LabelHit find_label(std::string_view text, std::string_view folded, const std::vector<std::string>& labels)
{
    LabelHit best;
    for (const auto& raw : labels) {
        std::string label = text::to_lower_ascii(raw);
        for (std::size_t pos = folded.find(label); pos != std::string_view::npos; pos = folded.find(label, pos + 1)) {
            std::size_t p = pos + label.size();
            while (p < text.size() && (text[p] == '*' || text[p] == ' ' || text[p] == '\t')) ++p;
            std::size_t colon = colon_at(text, p);
            if (colon == 0) continue;
            if (pos < best.label_begin) best = {pos, p + colon};
            break;
        }
    }
    return best;
}

std::string clean(std::string_view s)
{
    auto t = text::trim(s);
    while (!t.empty() && (t.back() == '*' || t.back() == '#')) t = text::trim(t.substr(0, t.size() - 1));
    while (!t.empty() && t.front() == '*') t = text::trim(t.substr(1));
    return std::string(t);
}

}  // namespace

std::optional<SyllogismStructure> parse_syllogism(std::string_view text, const SyllogismLexicon& lexicon)
{
    std::string folded = text::to_lower_ascii(text);
    std::array<LabelHit, 3> hits = {find_label(text, folded, lexicon.major), find_label(text, folded, lexicon.minor),
                                    find_label(text, folded, lexicon.conclusion)};
    for (const auto& h : hits) {
        if (h.label_begin == std::string::npos) return std::nullopt;
    }
    if (!(hits[0].body_begin <= hits[1].label_begin && hits[1].body_begin <= hits[2].label_begin)) return std::nullopt;

    // Strip markdown emphasis that opened before a label ("**大前提**：").
    auto segment = [&](std::size_t begin, std::size_t end) { return clean(text.substr(begin, end - begin)); };
    SyllogismStructure s{segment(hits[0].body_begin, hits[1].label_begin),
                         segment(hits[1].body_begin, hits[2].label_begin), segment(hits[2].body_begin, text.size())};
    if (text::is_blank(s.major_premise) || text::is_blank(s.minor_premise) || text::is_blank(s.conclusion)) {
        return std::nullopt;
    }
    return s;
}

}  // namespace juris
