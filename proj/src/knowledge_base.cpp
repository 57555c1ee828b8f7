#include "juris/knowledge_base.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <regex>
#include <set>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "juris/error.hpp"
#include "juris/gateway.hpp"
#include "juris/jsonl.hpp"
#include "juris/text.hpp"

namespace juris::kb {

void RetrievalConfig::validate() const
{
    if (k < 1) throw Error(ErrorCode::InvalidConfig, "k must be >= 1");
    if (!(k1 > 0)) throw Error(ErrorCode::InvalidConfig, "k1 must be > 0");
    if (b < 0 || b > 1) throw Error(ErrorCode::InvalidConfig, "b must lie in [0, 1]");
}

GatewayEmbedder::GatewayEmbedder(gateway::Gateway& gw, const gateway::ProviderProfile& profile)
    : gateway_(gw), profile_(std::make_shared<const gateway::ProviderProfile>(profile))
{}

std::vector<float> GatewayEmbedder::embed(const std::string& text)
{
    return gateway_.embed(text, *profile_);
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) noexcept
{
    if (a.size() != b.size() || a.empty()) return 0.0;
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0 || nb == 0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

std::string strip_country_prefix(std::string_view title)
{
    constexpr std::string_view kPrefix = "中华人民共和国";
    if (title.substr(0, kPrefix.size()) == kPrefix) title.remove_prefix(kPrefix.size());
    return std::string(title);
}

std::string normalize_newlines(std::string_view s)
{
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\r') {
            out.push_back('\n');
            if (i + 1 < s.size() && s[i + 1] == '\n') ++i;
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

}  // namespace

KnowledgeBase::KnowledgeBase(ChunkPolicy policy)
    : policy_(std::move(policy)), snapshot_(std::make_shared<const Bm25Snapshot>())
{}

LegalDocument KnowledgeBase::ingest_document(std::string_view raw_text, const DocumentMetadata& metadata)
{
    if (text::is_blank(metadata.category) || text::is_blank(metadata.title)) {
        throw Error(ErrorCode::MetadataMissing, "category and title are required");
    }
    if (metadata.effective_date) {
        static const std::regex kDate(R"(\d{4}-\d{2}-\d{2})");
        if (!std::regex_match(*metadata.effective_date, kDate)) {
            throw Error(ErrorCode::MetadataMissing, "effective_date must be YYYY-MM-DD");
        }
    }
    if (text::is_blank(raw_text)) throw Error(ErrorCode::EmptyBody, metadata.category + " / " + metadata.title);

    std::unique_lock lock(store_mutex_);
    LegalDocument doc;
    char id[32];
    std::snprintf(id, sizeof id, "doc-%06zu", documents_.size() + 1);
    doc.doc_id = id;
    doc.category = std::string(text::trim(metadata.category));
    doc.title = std::string(text::trim(metadata.title));
    doc.body = normalize_newlines(raw_text);
    doc.effective_date = metadata.effective_date;
    auto& lineage = lineages_[{doc.category, doc.title}];
    doc.version = static_cast<int>(lineage.versions.size()) + 1;
    lineage.versions.push_back(doc.doc_id);
    documents_.emplace(doc.doc_id, doc);
    return doc;
}

bool KnowledgeBase::is_active(const LegalDocument& doc) const
{
    auto it = lineages_.find({doc.category, doc.title});
    return it != lineages_.end() && it->second.versions.back() == doc.doc_id;
}

void KnowledgeBase::update_document(const std::string& doc_id)
{
    std::map<LineageKey, std::vector<DocChunk>> replacements;
    {
        std::shared_lock lock(store_mutex_);
        auto it = documents_.find(doc_id);
        if (it == documents_.end()) throw Error(ErrorCode::UnknownDocument, doc_id);
        LineageKey key{it->second.category, it->second.title};
        const LegalDocument& active = documents_.at(lineages_.at(key).versions.back());
        replacements.emplace(key, chunk_document(active, policy_));
    }
    apply_lineage_chunks(replacements);
}

std::size_t KnowledgeBase::index_upsert(std::span<const DocChunk> chunks)
{
    std::map<LineageKey, std::vector<DocChunk>> replacements;
    std::size_t applied = 0;
    {
        std::shared_lock lock(store_mutex_);
        for (const DocChunk& c : chunks) {
            if (!documents_.contains(c.doc_id)) throw Error(ErrorCode::UnknownDocument, c.doc_id);
        }
        for (const DocChunk& c : chunks) {
            const LegalDocument& doc = documents_.find(c.doc_id)->second;
            if (!is_active(doc)) continue;
            replacements[{doc.category, doc.title}].push_back(c);
            ++applied;
        }
    }
    if (!replacements.empty()) apply_lineage_chunks(replacements);
    return applied;
}

LegalDocument KnowledgeBase::upsert(std::string_view raw_text, const DocumentMetadata& metadata)
{
    LegalDocument doc = ingest_document(raw_text, metadata);
    update_document(doc.doc_id);
    return doc;
}

void KnowledgeBase::apply_lineage_chunks(const std::map<LineageKey, std::vector<DocChunk>>& replacements)
{
    std::lock_guard write(write_mutex_);
    for (const auto& [key, chunks] : replacements) indexed_[key] = chunks;
    std::vector<DocChunk> all;
    for (const auto& [key, chunks] : indexed_) all.insert(all.end(), chunks.begin(), chunks.end());
    auto next = std::make_shared<const Bm25Snapshot>(std::move(all));
    std::lock_guard lock(snapshot_mutex_);
    snapshot_ = std::move(next);
}

void KnowledgeBase::rebuild_index()
{
    std::map<LineageKey, std::vector<DocChunk>> replacements;
    {
        std::shared_lock lock(store_mutex_);
        for (const auto& [key, lineage] : lineages_) {
            replacements.emplace(key, chunk_document(documents_.at(lineage.versions.back()), policy_));
        }
    }
    std::lock_guard write(write_mutex_);
    indexed_.clear();
    std::vector<DocChunk> all;
    for (auto& [key, chunks] : replacements) {
        all.insert(all.end(), chunks.begin(), chunks.end());
        indexed_.emplace(key, std::move(chunks));
    }
    auto next = std::make_shared<const Bm25Snapshot>(std::move(all));
    std::lock_guard lock(snapshot_mutex_);
    snapshot_ = std::move(next);
}

std::shared_ptr<const Bm25Snapshot> KnowledgeBase::snapshot() const
{
    std::lock_guard lock(snapshot_mutex_);
    return snapshot_;
}

std::size_t KnowledgeBase::index_size() const
{
    return snapshot()->size();
}

std::vector<RetrievalHit> KnowledgeBase::search(std::string_view query, const RetrievalConfig& config) const
{
    config.validate();
    if (text::is_blank(query)) throw Error(ErrorCode::EmptyQuery, "query is empty");
    auto snap = snapshot();
    if (snap->size() == 0) throw Error(ErrorCode::IndexEmpty, "no documents are indexed");
    if (config.backend == Backend::vector) return vector_search(query, config.k);
    return snap->search(query, config.k, config.k1, config.b);
}

void KnowledgeBase::set_embedder(std::shared_ptr<Embedder> embedder)
{
    std::lock_guard lock(embed_mutex_);
    embedder_ = std::move(embedder);
    embeddings_.clear();
}

std::vector<RetrievalHit> KnowledgeBase::vector_search(std::string_view query, int k) const
{
    std::shared_ptr<Embedder> embedder;
    {
        std::lock_guard lock(embed_mutex_);
        embedder = embedder_;
    }
    if (!embedder) throw Error(ErrorCode::InvalidConfig, "vector backend requested but no embedding service is set");

    auto snap = snapshot();
    std::vector<float> q = embedder->embed(std::string(query));
    std::vector<RetrievalHit> hits;
    hits.reserve(snap->size());
    for (const DocChunk& c : snap->chunks()) {
        std::vector<float> v;
        {
            std::lock_guard lock(embed_mutex_);
            auto it = embeddings_.find(c.chunk_id + "\x1f" + c.text);
            if (it != embeddings_.end()) v = it->second;
        }
        if (v.empty()) {
            v = embedder->embed(c.text);
            std::lock_guard lock(embed_mutex_);
            embeddings_[c.chunk_id + "\x1f" + c.text] = v;
        }
        hits.push_back({c.chunk_id, cosine_similarity(q, v), 0, c.doc_id, c.chunk_index});
    }
    std::size_t keep = std::min(hits.size(), static_cast<std::size_t>(k));
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), hit_before);
    hits.resize(keep);
    for (std::size_t i = 0; i < hits.size(); ++i) hits[i].rank = static_cast<int>(i + 1);
    return hits;
}

std::optional<ResolvedChunk> KnowledgeBase::resolve(std::string_view chunk_id) const
{
    auto snap = snapshot();
    const auto& chunks = snap->chunks();
    auto it = std::find_if(chunks.begin(), chunks.end(), [&](const DocChunk& c) { return c.chunk_id == chunk_id; });
    if (it == chunks.end()) return std::nullopt;
    std::shared_lock lock(store_mutex_);
    auto doc = documents_.find(it->doc_id);
    if (doc == documents_.end()) return std::nullopt;
    return ResolvedChunk{*it, doc->second.category, doc->second.title, doc->second.version};
}

std::optional<LegalDocument> KnowledgeBase::document(std::string_view doc_id) const
{
    std::shared_lock lock(store_mutex_);
    auto it = documents_.find(doc_id);
    if (it == documents_.end()) return std::nullopt;
    return it->second;
}

std::vector<LegalDocument> KnowledgeBase::documents() const
{
    std::shared_lock lock(store_mutex_);
    std::vector<LegalDocument> out;
    out.reserve(documents_.size());
    for (const auto& [id, doc] : documents_) out.push_back(doc);
    return out;
}

std::optional<LegalDocument> KnowledgeBase::active_version(std::string_view category, std::string_view title) const
{
    std::shared_lock lock(store_mutex_);
    auto it = lineages_.find({std::string(category), std::string(title)});
    if (it == lineages_.end()) return std::nullopt;
    return documents_.at(it->second.versions.back());
}

std::optional<ResolvedChunk> KnowledgeBase::find_article(std::string_view law_title, int article_no) const
{
    const std::string wanted = strip_country_prefix(law_title);
    auto snap = snapshot();
    std::shared_lock lock(store_mutex_);
    for (const DocChunk& c : snap->chunks()) {
        if (!c.article_no || *c.article_no != article_no) continue;
        const LegalDocument& doc = documents_.at(c.doc_id);
        if (strip_country_prefix(doc.title) == wanted) return ResolvedChunk{c, doc.category, doc.title, doc.version};
    }
    return std::nullopt;
}

void KnowledgeBase::save(const std::filesystem::path& dir) const
{
    std::vector<nlohmann::ordered_json> rows;
    for (const auto& doc : documents()) {
        nlohmann::ordered_json row;
        row["doc_id"] = doc.doc_id;
        row["category"] = doc.category;
        row["title"] = doc.title;
        row["version"] = doc.version;
        if (doc.effective_date) row["effective_date"] = *doc.effective_date;
        row["body"] = doc.body;
        rows.push_back(std::move(row));
    }
    jsonl::write(dir / "documents.jsonl", rows);
    jsonl::write_file(dir / "index.json", snapshot()->serialize());
}

std::unique_ptr<KnowledgeBase> KnowledgeBase::open(const std::filesystem::path& dir, ChunkPolicy policy)
{
    auto kb = std::make_unique<KnowledgeBase>(std::move(policy));
    auto docs_path = dir / "documents.jsonl";
    if (!std::filesystem::exists(docs_path)) return kb;

    std::vector<LegalDocument> docs;
    for (const auto& line : jsonl::read(docs_path)) {
        try {
            LegalDocument doc;
            doc.doc_id = line.value.at("doc_id").get<std::string>();
            doc.category = line.value.at("category").get<std::string>();
            doc.title = line.value.at("title").get<std::string>();
            doc.version = line.value.at("version").get<int>();
            doc.body = line.value.at("body").get<std::string>();
            if (line.value.contains("effective_date")) doc.effective_date = line.value["effective_date"].get<std::string>();
            docs.push_back(std::move(doc));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::ParseError, docs_path.string() + ":" + std::to_string(line.number) + ": " + e.what());
        }
    }
    std::sort(docs.begin(), docs.end(), [](const LegalDocument& a, const LegalDocument& b) {
        return std::tie(a.category, a.title, a.version) < std::tie(b.category, b.title, b.version);
    });
    {
        std::unique_lock lock(kb->store_mutex_);
        for (auto& doc : docs) {
            auto& lineage = kb->lineages_[{doc.category, doc.title}];
            if (doc.version != static_cast<int>(lineage.versions.size()) + 1) {
                throw Error(ErrorCode::ParseError, "version gap in lineage " + doc.category + " / " + doc.title);
            }
            lineage.versions.push_back(doc.doc_id);
            kb->documents_.emplace(doc.doc_id, std::move(doc));
        }
    }

    auto index_path = dir / "index.json";
    bool loaded = false;
    if (std::filesystem::exists(index_path)) {
        try {
            auto snap = Bm25Snapshot::deserialize(jsonl::read_file(index_path));
            std::set<std::string> indexed_docs;
            for (const auto& c : snap.chunks()) indexed_docs.insert(c.doc_id);
            std::set<std::string> active_docs;
            for (const auto& [key, lineage] : kb->lineages_) active_docs.insert(lineage.versions.back());
            if (indexed_docs == active_docs) {
                std::lock_guard write(kb->write_mutex_);
                for (const auto& c : snap.chunks()) {
                    const auto& doc = kb->documents_.at(c.doc_id);
                    kb->indexed_[{doc.category, doc.title}].push_back(c);
                }
                std::lock_guard lock(kb->snapshot_mutex_);
                kb->snapshot_ = std::make_shared<const Bm25Snapshot>(std::move(snap));
                loaded = true;
            } else {
                spdlog::warn("index at {} does not match the store; rebuilding", index_path.string());
            }
        } catch (const Error& e) {
            spdlog::warn("unreadable index at {} ({}); rebuilding", index_path.string(), e.what());
        }
    }
    if (!loaded) kb->rebuild_index();
    return kb;
}

std::vector<std::pair<std::string, DocumentMetadata>> KnowledgeBase::read_ingest_file(const std::filesystem::path& path)
{
    std::vector<std::pair<std::string, DocumentMetadata>> out;
    for (const auto& line : jsonl::read(path)) {
        const auto& v = line.value;
        auto field = [&](const char* name) -> std::string {
            if (!v.contains(name) || !v[name].is_string()) return {};
            return v[name].get<std::string>();
        };
        DocumentMetadata meta{field("category"), field("title"), std::nullopt};
        if (v.contains("effective_date") && v["effective_date"].is_string()) {
            meta.effective_date = v["effective_date"].get<std::string>();
        }
        out.emplace_back(field("body"), std::move(meta));
    }
    return out;
}

}  // namespace juris::kb
