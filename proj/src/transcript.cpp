#include "juris/transcript.hpp"

#include <fstream>
#include <mutex>

#include <nlohmann/json.hpp>

#include "juris/error.hpp"
#include "juris/jsonl.hpp"
#include "juris/text.hpp"

namespace juris::gateway {

std::string_view to_string(FinishReason reason) noexcept
{
    switch (reason) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
    }
    return "error";
}

FinishReason finish_reason_from_string(std::string_view s)
{
    if (s == "stop") return FinishReason::stop;
    if (s == "length") return FinishReason::length;
    if (s == "error") return FinishReason::error;
    throw Error(ErrorCode::CorruptTranscript, "unknown finish_reason '" + std::string(s) + "'");
}

namespace {

std::string render_line(const TranscriptEntry& e)
{
    nlohmann::ordered_json j;
    j["tag"] = e.tag;
    j["response_text"] = e.response_text;
    j["finish_reason"] = std::string(to_string(e.finish_reason));
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
}

}  // namespace

TranscriptStore::TranscriptStore(const TranscriptStore& other)
{
    std::shared_lock lock(other.mutex_);
    entries_ = other.entries_;
    index_ = other.index_;
}

TranscriptStore& TranscriptStore::operator=(const TranscriptStore& other)
{
    if (this == &other) return *this;
    std::vector<TranscriptEntry> entries;
    std::map<std::string, std::size_t, std::less<>> index;
    {
        std::shared_lock lock(other.mutex_);
        entries = other.entries_;
        index = other.index_;
    }
    std::unique_lock lock(mutex_);
    entries_ = std::move(entries);
    index_ = std::move(index);
    bound_path_.clear();
    return *this;
}

std::optional<TranscriptEntry> TranscriptStore::find(std::string_view tag) const
{
    std::shared_lock lock(mutex_);
    auto it = index_.find(tag);
    if (it == index_.end()) return std::nullopt;
    return entries_[it->second];
}

void TranscriptStore::append_locked(TranscriptEntry entry)
{
    auto it = index_.find(entry.tag);
    if (it != index_.end()) {
        entries_[it->second] = std::move(entry);
        return;
    }
    index_.emplace(entry.tag, entries_.size());
    entries_.push_back(std::move(entry));
}

void TranscriptStore::append(TranscriptEntry entry)
{
    std::unique_lock lock(mutex_);
    if (!bound_path_.empty()) {
        std::ofstream out(bound_path_, std::ios::binary | std::ios::app);
        if (!out) throw Error(ErrorCode::IoError, "cannot append to " + bound_path_.string());
        out << render_line(entry);
    }
    append_locked(std::move(entry));
}

std::size_t TranscriptStore::size() const
{
    std::shared_lock lock(mutex_);
    return entries_.size();
}

std::vector<TranscriptEntry> TranscriptStore::entries() const
{
    std::shared_lock lock(mutex_);
    return entries_;
}

std::string TranscriptStore::serialize() const
{
    std::shared_lock lock(mutex_);
    std::string out;
    for (const auto& e : entries_) out += render_line(e);
    return out;
}

TranscriptStore TranscriptStore::parse(std::string_view contents)
{
    TranscriptStore store;
    if (!contents.empty() && contents.back() != '\n') {
        throw Error(ErrorCode::CorruptTranscript, "file does not end with a newline (truncated?)");
    }
    std::size_t number = 0;
    for (std::string_view line : text::split_lines(contents)) {
        ++number;
        if (text::trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::CorruptTranscript, "line " + std::to_string(number) + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("tag") || !j["tag"].is_string() || !j.contains("response_text") ||
            !j["response_text"].is_string() || !j.contains("finish_reason") || !j["finish_reason"].is_string()) {
            throw Error(ErrorCode::CorruptTranscript, "line " + std::to_string(number) + ": missing fields");
        }
        store.append_locked({j["tag"].get<std::string>(), j["response_text"].get<std::string>(),
                             finish_reason_from_string(j["finish_reason"].get<std::string>())});
    }
    return store;
}

void TranscriptStore::export_file(const std::filesystem::path& path) const
{
    jsonl::write_file(path, serialize());
}

TranscriptStore TranscriptStore::import_file(const std::filesystem::path& path)
{
    return parse(jsonl::read_file(path));
}

void TranscriptStore::bind_file(const std::filesystem::path& path)
{
    std::unique_lock lock(mutex_);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    bound_path_ = path;
}

bool TranscriptStore::operator==(const TranscriptStore& other) const
{
    if (this == &other) return true;
    return entries() == other.entries();
}

}  // namespace juris::gateway
