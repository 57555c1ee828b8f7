#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "juris/bm25.hpp"
#include "juris/chunking.hpp"
#include "juris/kb_types.hpp"

namespace juris::gateway {
class Gateway;
struct ProviderProfile;
}  // namespace juris::gateway

namespace juris::kb {

class Embedder {
  public:
    virtual ~Embedder() = default;
    virtual std::vector<float> embed(const std::string& text) = 0;
};

/// Embeddings from an external service, through the gateway (so they record and replay).
class GatewayEmbedder final : public Embedder {
  public:
    GatewayEmbedder(gateway::Gateway& gw, const gateway::ProviderProfile& profile);
    std::vector<float> embed(const std::string& text) override;

  private:
    gateway::Gateway& gateway_;
    std::shared_ptr<const gateway::ProviderProfile> profile_;
};

double cosine_similarity(std::span<const float> a, std::span<const float> b) noexcept;

/// Versioned statute store with a Top-K index over the active version of each
/// lineage. Readers never block each other; each write builds a new index
/// snapshot and swaps it in atomically.
class KnowledgeBase {
  public:
    explicit KnowledgeBase(ChunkPolicy policy = {});

    /// Stores a new version (1 for a new lineage). Does not touch the index.
    LegalDocument ingest_document(std::string_view raw_text, const DocumentMetadata& metadata);

    /// Re-chunks `doc_id`'s lineage and makes its highest version the only
    /// searchable one. Throws Error(UnknownDocument).
    void update_document(const std::string& doc_id);

    /// Replaces each referenced lineage's indexed chunks with `chunks`.
    /// Chunks from a version that is not the lineage's highest are skipped.
    /// Returns the number of chunks applied. Throws Error(UnknownDocument).
    std::size_t index_upsert(std::span<const DocChunk> chunks);

    /// ingest_document followed by update_document.
    LegalDocument upsert(std::string_view raw_text, const DocumentMetadata& metadata);

    /// Throws Error(EmptyQuery), Error(IndexEmpty), Error(InvalidConfig).
    [[nodiscard]] std::vector<RetrievalHit> search(std::string_view query, const RetrievalConfig& config) const;

    [[nodiscard]] std::optional<ResolvedChunk> resolve(std::string_view chunk_id) const;
    [[nodiscard]] std::optional<LegalDocument> document(std::string_view doc_id) const;
    [[nodiscard]] std::vector<LegalDocument> documents() const;
    /// Active (highest) version of a lineage.
    [[nodiscard]] std::optional<LegalDocument> active_version(std::string_view category, std::string_view title) const;

    /// Indexed article of a law by title (a leading "中华人民共和国" is ignored on both sides).
    [[nodiscard]] std::optional<ResolvedChunk> find_article(std::string_view law_title, int article_no) const;

    [[nodiscard]] std::size_t index_size() const;
    [[nodiscard]] std::shared_ptr<const Bm25Snapshot> snapshot() const;

    /// Enables the vector backend; embeddings for indexed chunks are computed on demand and cached.
    void set_embedder(std::shared_ptr<Embedder> embedder);

    /// Rebuilds the index from the store (active versions only).
    void rebuild_index();

    /// On-disk layout: <dir>/documents.jsonl (every version, one document per
    /// line) and <dir>/index.json (see Bm25Snapshot::serialize).
    void save(const std::filesystem::path& dir) const;
    /// Loads the store and the index; rebuilds the index when it is missing
    /// or disagrees with the store.
    static std::unique_ptr<KnowledgeBase> open(const std::filesystem::path& dir, ChunkPolicy policy = {});

    /// Reads a document ingest file: one {category, title, body, effective_date?} per line.
    static std::vector<std::pair<std::string, DocumentMetadata>> read_ingest_file(const std::filesystem::path& path);

  private:
    struct Lineage {
        std::vector<std::string> versions;  // doc ids, index = version - 1
    };
    using LineageKey = std::pair<std::string, std::string>;

    void apply_lineage_chunks(const std::map<LineageKey, std::vector<DocChunk>>& replacements);
    std::vector<RetrievalHit> vector_search(std::string_view query, int k) const;
    bool is_active(const LegalDocument& doc) const;

    ChunkPolicy policy_;
    mutable std::shared_mutex store_mutex_;
    std::map<std::string, LegalDocument, std::less<>> documents_;
    std::map<LineageKey, Lineage> lineages_;
    std::map<LineageKey, std::vector<DocChunk>> indexed_;  // guarded by write_mutex_

    std::mutex write_mutex_;
    mutable std::mutex snapshot_mutex_;
    std::shared_ptr<const Bm25Snapshot> snapshot_;

    std::shared_ptr<Embedder> embedder_;
    mutable std::mutex embed_mutex_;
    mutable std::map<std::string, std::vector<float>> embeddings_;  // chunk_id -> vector
};

}  // namespace juris::kb
