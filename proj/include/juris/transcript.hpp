#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

namespace juris::gateway {

enum class FinishReason { stop, length, error };

std::string_view to_string(FinishReason reason) noexcept;
FinishReason finish_reason_from_string(std::string_view s);

struct TranscriptEntry {
    std::string tag;
    std::string response_text;
    FinishReason finish_reason = FinishReason::stop;

    bool operator==(const TranscriptEntry&) const = default;
};

/// Recorded responses keyed by request tag, in insertion order.
///
/// File layout: UTF-8, one JSON object per line with the keys
/// {"tag", "response_text", "finish_reason"} in that order. A later line with
/// an already-seen tag replaces the earlier response in place.
///
/// Concurrent readers, serialized appends. When bound to a file every append
/// is also written through to it.
class TranscriptStore {
  public:
    TranscriptStore() = default;
    TranscriptStore(const TranscriptStore& other);
    TranscriptStore& operator=(const TranscriptStore& other);

    [[nodiscard]] std::optional<TranscriptEntry> find(std::string_view tag) const;
    void append(TranscriptEntry entry);
    [[nodiscard]] std::size_t size() const;
    [[nodiscard]] std::vector<TranscriptEntry> entries() const;

    /// Canonical file contents.
    [[nodiscard]] std::string serialize() const;
    /// Throws Error(CorruptTranscript) on any malformed line.
    static TranscriptStore parse(std::string_view contents);

    void export_file(const std::filesystem::path& path) const;
    static TranscriptStore import_file(const std::filesystem::path& path);

    /// Appends from now on are also written to `path`.
    void bind_file(const std::filesystem::path& path);

    bool operator==(const TranscriptStore& other) const;

  private:
    void append_locked(TranscriptEntry entry);

    mutable std::shared_mutex mutex_;
    std::vector<TranscriptEntry> entries_;
    std::map<std::string, std::size_t, std::less<>> index_;
    std::filesystem::path bound_path_;
};

}  // namespace juris::gateway
