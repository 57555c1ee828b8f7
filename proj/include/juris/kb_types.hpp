#pragma once

#include <optional>
#include <string>
#include <utility>

namespace juris::kb {

struct LegalDocument {
    std::string doc_id;
    /// Law category, e.g. "Criminal Law". (category, title) identifies a lineage.
    std::string category;
    std::string title;
    std::string body;
    int version = 1;
    /// ISO date, YYYY-MM-DD.
    std::optional<std::string> effective_date;

    bool operator==(const LegalDocument&) const = default;
};

struct DocumentMetadata {
    std::string category;
    std::string title;
    std::optional<std::string> effective_date;
};

/// Code-point offsets [start, end) into the document body.
struct CharSpan {
    std::size_t start = 0;
    std::size_t end = 0;

    bool operator==(const CharSpan&) const = default;
};

struct DocChunk {
    std::string chunk_id;
    std::string doc_id;
    /// Position of the chunk within its document, from 0.
    int chunk_index = 0;
    std::optional<int> article_no;
    std::string text;
    CharSpan char_span;

    bool operator==(const DocChunk&) const = default;
};

enum class Backend { lexical, vector };

struct RetrievalConfig {
    int k = 3;
    Backend backend = Backend::lexical;
    double k1 = 1.5;
    double b = 0.75;

    /// Throws Error(InvalidConfig).
    void validate() const;
};

struct RetrievalHit {
    std::string chunk_id;
    double score = 0.0;
    int rank = 0;
    // Tie-break keys, carried so callers can re-check ordering.
    std::string doc_id;
    int chunk_index = 0;

    bool operator==(const RetrievalHit&) const = default;
};

/// A chunk together with the document fields needed to cite it.
struct ResolvedChunk {
    DocChunk chunk;
    std::string category;
    std::string title;
    int version = 1;
};

}  // namespace juris::kb
