#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "juris/kb_types.hpp"

namespace juris::kb {

/// Character-bigram tokens. Text is split into runs of non-space,
/// non-punctuation code points (ASCII and full-width letters folded to
/// lowercase half-width); each run yields its overlapping bigrams, and a
/// single-character run yields itself.
std::vector<std::string> tokenize(std::string_view text);

/// Okapi BM25 with the non-negative (Lucene-style) idf:
///   idf(t)   = ln(1 + (N - df + 0.5) / (df + 0.5))
///   score    = sum over distinct query terms t, in byte order, of
///              qtf(t) * idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))
/// where dl is the chunk length in tokens and avgdl the mean over the index.
double bm25_term_score(double tf, double df, double num_chunks, double dl, double avgdl, double k1, double b);

struct Posting {
    std::uint32_t slot = 0;
    std::uint32_t tf = 0;

    bool operator==(const Posting&) const = default;
};

/// Immutable inverted index over a fixed chunk set. Slots are ordered by
/// (doc_id, chunk_index), which is also the tie-break order.
class Bm25Snapshot {
  public:
    Bm25Snapshot() = default;
    explicit Bm25Snapshot(std::vector<DocChunk> chunks);

    /// Top-k chunks with positive score; ties broken by (doc_id, chunk_index).
    [[nodiscard]] std::vector<RetrievalHit> search(std::string_view query, int k, double k1, double b) const;

    [[nodiscard]] std::size_t size() const { return chunks_.size(); }
    [[nodiscard]] const std::vector<DocChunk>& chunks() const { return chunks_; }
    [[nodiscard]] const std::vector<std::uint32_t>& lengths() const { return lengths_; }
    [[nodiscard]] const std::unordered_map<std::string, std::vector<Posting>>& postings() const { return postings_; }

    /// Text layout: a JSON document {"format":"juris-bm25/1","chunks":[...],
    /// "lengths":[...],"postings":{term:[[slot,tf],...]}} with sorted terms.
    [[nodiscard]] std::string serialize() const;
    /// Throws Error(CorruptIndex).
    static Bm25Snapshot deserialize(std::string_view contents);

    bool operator==(const Bm25Snapshot& other) const;

  private:
    std::vector<DocChunk> chunks_;
    std::vector<std::uint32_t> lengths_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    double avg_length_ = 0.0;
};

/// Orders hits by score descending, then (doc_id, chunk_index) ascending.
bool hit_before(const RetrievalHit& a, const RetrievalHit& b) noexcept;

}  // namespace juris::kb
