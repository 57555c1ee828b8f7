#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "juris/kb_types.hpp"

namespace juris::kb {

/// Matches "第一千零六十四条" / "第1064条" / "Article 12". Capture group 1
/// (Chinese form) or group 2 (Latin form) holds the numeral.
inline constexpr std::string_view kDefaultArticlePattern =
    R"(第((?:[0-9]|零|〇|一|二|两|三|四|五|六|七|八|九|十|百|千|万)+)条|Article\s+([0-9]+))";

struct ChunkPolicy {
    /// ECMAScript regex tried at the start of every line (after indentation).
    std::string article_pattern{kDefaultArticlePattern};
    /// Window size, in code points, when no article markers are found.
    std::size_t window_chars = 512;
};

/// One chunk per article when markers are present (text before the first
/// marker becomes an unnumbered preamble chunk); otherwise consecutive,
/// non-overlapping windows. Boundary whitespace of article chunks is excluded
/// from their spans.
std::vector<DocChunk> chunk_document(const LegalDocument& doc, const ChunkPolicy& policy = {});

/// "一千零六十四" -> 1064, "1064" -> 1064, "两百" -> 200; nullopt if not a numeral.
std::optional<int> parse_numeral(std::string_view numeral);

std::string make_chunk_id(std::string_view doc_id, int chunk_index);

}  // namespace juris::kb
