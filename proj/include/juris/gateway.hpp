#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "juris/transcript.hpp"

namespace juris::gateway {

enum class Role { system, user, assistant };

std::string_view to_string(Role role) noexcept;
Role role_from_string(std::string_view s);

struct ChatMessage {
    Role role = Role::user;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::string provider_id;
    std::string model_id;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 1024;
    /// Replay key; always equal to compute_request_tag(*this) for requests built by make_request.
    std::string request_tag;
};

/// Field-ordered rendering of (provider_id, model_id, messages, temperature)
/// with whitespace runs collapsed. max_tokens and request_tag are excluded.
std::string canonical_serialization(const ChatRequest& req);
std::string compute_request_tag(const ChatRequest& req);

/// Throws Error(InvalidRequest) when the message invariants do not hold.
void validate(const ChatRequest& req);

ChatRequest make_request(std::string provider_id, std::string model_id, std::vector<ChatMessage> messages,
                         double temperature = 0.0, int max_tokens = 1024);

struct ChatResponse {
    std::string text;
    FinishReason finish_reason = FinishReason::stop;
    int attempts = 1;
    std::int64_t latency_ms = 0;

    bool operator==(const ChatResponse&) const = default;
};

enum class Mode { live, record, replay };

std::string_view to_string(Mode mode) noexcept;
Mode mode_from_string(std::string_view s);

struct ProviderProfile {
    std::string provider_id;
    std::string endpoint;
    /// Name of the environment variable holding the API key.
    std::string auth_ref;
    int max_concurrent = 4;
    int retry_budget = 3;
    Mode mode = Mode::replay;
    std::filesystem::path transcript_path;
    std::string default_model;
    std::string embedding_model;

    /// Throws Error(InvalidConfig) on an unusable profile.
    void validate() const;
};

/// One attempt's outcome as seen by the gateway.
struct TransportReply {
    /// HTTP-style status; 0 means the request never got a response.
    int status = 200;
    std::string text;
    FinishReason finish_reason = FinishReason::stop;
    std::string error;
};

class Transport {
  public:
    virtual ~Transport() = default;
    virtual TransportReply send(const ChatRequest& req, const ProviderProfile& profile, const std::string& api_key) = 0;
    /// Returns the embedding serialized as a JSON array of numbers.
    virtual TransportReply embed(const std::string& text, const std::string& model, const ProviderProfile& profile,
                                 const std::string& api_key) = 0;
};

/// OpenAI-compatible chat-completions / embeddings client over HTTP(S).
class HttpTransport final : public Transport {
  public:
    explicit HttpTransport(std::chrono::seconds timeout = std::chrono::seconds(120)) : timeout_(timeout) {}
    TransportReply send(const ChatRequest& req, const ProviderProfile& profile, const std::string& api_key) override;
    TransportReply embed(const std::string& text, const std::string& model, const ProviderProfile& profile,
                         const std::string& api_key) override;

  private:
    std::chrono::seconds timeout_;
};

bool is_retryable(int status) noexcept;

/// Exponential backoff with full jitter.
class Backoff {
  public:
    Backoff(std::chrono::milliseconds base = std::chrono::milliseconds(250),
            std::chrono::milliseconds cap = std::chrono::milliseconds(8000), std::uint64_t seed = std::random_device{}())
        : base_(base), cap_(cap), rng_(seed)
    {}

    /// Upper bound of the jitter window before retry number `retry` (1-based).
    [[nodiscard]] std::chrono::milliseconds ceiling(int retry) const;
    std::chrono::milliseconds next_delay(int retry);

  private:
    std::chrono::milliseconds base_;
    std::chrono::milliseconds cap_;
    std::mutex mutex_;
    std::mt19937_64 rng_;
};

/// Counting gate bounding in-flight live requests.
class ConcurrencyLimiter {
  public:
    explicit ConcurrencyLimiter(int limit) : limit_(limit < 1 ? 1 : limit) {}

    void acquire();
    void release();
    [[nodiscard]] int in_flight() const;

    class Permit {
      public:
        explicit Permit(ConcurrencyLimiter& l) : limiter_(&l) { limiter_->acquire(); }
        Permit(const Permit&) = delete;
        Permit& operator=(const Permit&) = delete;
        ~Permit() { limiter_->release(); }

      private:
        ConcurrencyLimiter* limiter_;
    };

  private:
    int limit_;
    int in_flight_ = 0;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
};

struct GatewayOptions {
    std::function<void(std::chrono::milliseconds)> sleep;
    std::function<std::optional<std::string>(const std::string&)> getenv;
    std::uint64_t backoff_seed = std::random_device{}();
};

/// Uniform client for chat-completion providers. Thread-safe.
class Gateway {
  public:
    explicit Gateway(std::shared_ptr<Transport> transport, GatewayOptions options = {});

    ChatResponse complete(const ChatRequest& req, const ProviderProfile& profile);

    /// Embedding vector for `text`; recorded and replayed like chat responses.
    std::vector<float> embed(const std::string& text, const ProviderProfile& profile);

    /// Transcript store for a profile: keyed by transcript_path, or provider_id
    /// when the path is empty (in-memory). Loaded from disk on first use.
    std::shared_ptr<TranscriptStore> transcripts(const ProviderProfile& profile);

  private:
    TransportReply send_with_retries(const ProviderProfile& profile, int& attempts,
                                     const std::function<TransportReply(const std::string&)>& call);
    std::string api_key(const ProviderProfile& profile) const;
    ConcurrencyLimiter& limiter(const ProviderProfile& profile);

    std::shared_ptr<Transport> transport_;
    GatewayOptions options_;
    Backoff backoff_;
    std::mutex mutex_;
    std::map<std::string, std::shared_ptr<TranscriptStore>> stores_;
    std::map<std::string, std::unique_ptr<ConcurrencyLimiter>> limiters_;
};

}  // namespace juris::gateway
