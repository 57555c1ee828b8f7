#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace juris {

struct SyllogismStructure {
    std::string major_premise;  // applicable law
    std::string minor_premise;  // pertinent facts
    std::string conclusion;     // judgment

    bool operator==(const SyllogismStructure&) const = default;
};

/// Segment labels. A label counts only when followed (after optional `*` or
/// spaces) by a colon, ASCII or full-width. English labels match case-insensitively.
struct SyllogismLexicon {
    std::vector<std::string> major = {"大前提", "Major premise"};
    std::vector<std::string> minor = {"小前提", "Minor premise"};
    std::vector<std::string> conclusion = {"结论", "Conclusion"};
};

/// Splits `text` at the first major, minor and conclusion labels. Returns
/// nullopt unless all three are present, in that order, with non-blank bodies.
std::optional<SyllogismStructure> parse_syllogism(std::string_view text, const SyllogismLexicon& lexicon = {});

inline bool is_syllogism(std::string_view text, const SyllogismLexicon& lexicon = {})
{
    return parse_syllogism(text, lexicon).has_value();
}

}  // namespace juris
