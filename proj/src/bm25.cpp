#include "juris/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "juris/error.hpp"
#include "juris/text.hpp"

namespace juris::kb {

namespace {

char32_t fold(char32_t cp) noexcept
{
    if (cp >= 0xFF01 && cp <= 0xFF5E) cp -= 0xFEE0;  // full-width ASCII
    if (cp >= 'A' && cp <= 'Z') cp += 'a' - 'A';
    return cp;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view input)
{
    std::vector<std::string> tokens;
    std::vector<char32_t> run;
    auto flush = [&] {
        if (run.size() == 1) {
            std::string t;
            text::append_utf8(t, run[0]);
            tokens.push_back(std::move(t));
        } else {
            for (std::size_t i = 0; i + 1 < run.size(); ++i) {
                std::string t;
                text::append_utf8(t, run[i]);
                text::append_utf8(t, run[i + 1]);
                tokens.push_back(std::move(t));
            }
        }
        run.clear();
    };
    for (char32_t cp : text::decode_utf8(input)) {
        cp = fold(cp);
        if (text::is_space(cp) || text::is_separator(cp) || cp < 0x20) {
            if (!run.empty()) flush();
        } else {
            run.push_back(cp);
        }
    }
    if (!run.empty()) flush();
    return tokens;
}

double bm25_term_score(double tf, double df, double num_chunks, double dl, double avgdl, double k1, double b)
{
    double idf = std::log(1.0 + (num_chunks - df + 0.5) / (df + 0.5));
    double norm = avgdl > 0 ? dl / avgdl : 0.0;
    return idf * ((tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * norm)));
}

bool hit_before(const RetrievalHit& a, const RetrievalHit& b) noexcept
{
    if (a.score != b.score) return a.score > b.score;
    if (a.doc_id != b.doc_id) return a.doc_id < b.doc_id;
    return a.chunk_index < b.chunk_index;
}

Bm25Snapshot::Bm25Snapshot(std::vector<DocChunk> chunks) : chunks_(std::move(chunks))
{
    std::sort(chunks_.begin(), chunks_.end(), [](const DocChunk& a, const DocChunk& b) {
        return a.doc_id != b.doc_id ? a.doc_id < b.doc_id : a.chunk_index < b.chunk_index;
    });
    lengths_.reserve(chunks_.size());
    double total = 0;
    for (std::uint32_t slot = 0; slot < chunks_.size(); ++slot) {
        std::map<std::string, std::uint32_t> counts;
        auto tokens = tokenize(chunks_[slot].text);
        for (auto& t : tokens) ++counts[t];
        for (auto& [term, tf] : counts) postings_[term].push_back({slot, tf});
        lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
        total += static_cast<double>(tokens.size());
    }
    avg_length_ = chunks_.empty() ? 0.0 : total / static_cast<double>(chunks_.size());
}

std::vector<RetrievalHit> Bm25Snapshot::search(std::string_view query, int k, double k1, double b) const
{
    std::map<std::string, int> query_terms;
    for (auto& t : tokenize(query)) ++query_terms[t];

    const auto n = static_cast<double>(chunks_.size());
    std::vector<double> scores(chunks_.size(), 0.0);
    std::vector<std::uint32_t> touched;
    for (const auto& [term, qtf] : query_terms) {
        auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        const auto df = static_cast<double>(it->second.size());
        for (const Posting& p : it->second) {
            if (scores[p.slot] == 0.0) touched.push_back(p.slot);
            scores[p.slot] += qtf * bm25_term_score(p.tf, df, n, lengths_[p.slot], avg_length_, k1, b);
        }
    }

    std::vector<RetrievalHit> hits;
    hits.reserve(touched.size());
    for (std::uint32_t slot : touched) {
        if (scores[slot] <= 0.0) continue;
        const DocChunk& c = chunks_[slot];
        hits.push_back({c.chunk_id, scores[slot], 0, c.doc_id, c.chunk_index});
    }
    std::size_t keep = std::min(hits.size(), static_cast<std::size_t>(std::max(k, 0)));
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), hit_before);
    hits.resize(keep);
    for (std::size_t i = 0; i < hits.size(); ++i) hits[i].rank = static_cast<int>(i + 1);
    return hits;
}

std::string Bm25Snapshot::serialize() const
{
    nlohmann::ordered_json j;
    j["format"] = "juris-bm25/1";
    auto& chunks = j["chunks"] = nlohmann::ordered_json::array();
    for (const auto& c : chunks_) {
        nlohmann::ordered_json row;
        row["chunk_id"] = c.chunk_id;
        row["doc_id"] = c.doc_id;
        row["chunk_index"] = c.chunk_index;
        row["article_no"] = c.article_no ? nlohmann::ordered_json(*c.article_no) : nlohmann::ordered_json();
        row["start"] = c.char_span.start;
        row["end"] = c.char_span.end;
        row["text"] = c.text;
        chunks.push_back(std::move(row));
    }
    j["lengths"] = lengths_;
    std::map<std::string, const std::vector<Posting>*> sorted;
    for (const auto& [term, list] : postings_) sorted.emplace(term, &list);
    auto& postings = j["postings"] = nlohmann::ordered_json::object();
    for (const auto& [term, list] : sorted) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& p : *list) arr.push_back({p.slot, p.tf});
        postings[term] = std::move(arr);
    }
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
}

Bm25Snapshot Bm25Snapshot::deserialize(std::string_view contents)
{
    Bm25Snapshot snap;
    try {
        auto j = nlohmann::json::parse(contents);
        if (j.at("format") != "juris-bm25/1") throw Error(ErrorCode::CorruptIndex, "unknown index format");
        for (const auto& row : j.at("chunks")) {
            DocChunk c;
            c.chunk_id = row.at("chunk_id").get<std::string>();
            c.doc_id = row.at("doc_id").get<std::string>();
            c.chunk_index = row.at("chunk_index").get<int>();
            if (!row.at("article_no").is_null()) c.article_no = row.at("article_no").get<int>();
            c.char_span = {row.at("start").get<std::size_t>(), row.at("end").get<std::size_t>()};
            c.text = row.at("text").get<std::string>();
            snap.chunks_.push_back(std::move(c));
        }
        snap.lengths_ = j.at("lengths").get<std::vector<std::uint32_t>>();
        if (snap.lengths_.size() != snap.chunks_.size()) throw Error(ErrorCode::CorruptIndex, "length table size");
        double total = 0;
        for (auto l : snap.lengths_) total += l;
        snap.avg_length_ = snap.chunks_.empty() ? 0.0 : total / static_cast<double>(snap.chunks_.size());
        for (const auto& [term, list] : j.at("postings").items()) {
            auto& out = snap.postings_[term];
            for (const auto& p : list) {
                Posting posting{p.at(0).get<std::uint32_t>(), p.at(1).get<std::uint32_t>()};
                if (posting.slot >= snap.chunks_.size()) throw Error(ErrorCode::CorruptIndex, "posting slot");
                out.push_back(posting);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::CorruptIndex, e.what());
    }
    return snap;
}

bool Bm25Snapshot::operator==(const Bm25Snapshot& other) const
{
    return chunks_ == other.chunks_ && lengths_ == other.lengths_ && postings_ == other.postings_;
}

}  // namespace juris::kb
