#include "juris/gateway.hpp"

#include <cstdio>
#include <cstdlib>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "juris/error.hpp"
#include "juris/hashing.hpp"
#include "juris/text.hpp"

namespace juris::gateway {

std::string_view to_string(Role role) noexcept
{
    switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    }
    return "user";
}

Role role_from_string(std::string_view s)
{
    if (s == "system") return Role::system;
    if (s == "user") return Role::user;
    if (s == "assistant") return Role::assistant;
    throw Error(ErrorCode::InvalidRequest, "unknown role '" + std::string(s) + "'");
}

std::string_view to_string(Mode mode) noexcept
{
    switch (mode) {
    case Mode::live: return "live";
    case Mode::record: return "record";
    case Mode::replay: return "replay";
    }
    return "replay";
}

Mode mode_from_string(std::string_view s)
{
    if (s == "live") return Mode::live;
    if (s == "record") return Mode::record;
    if (s == "replay") return Mode::replay;
    throw Error(ErrorCode::InvalidConfig, "unknown provider mode '" + std::string(s) + "'");
}

std::string canonical_serialization(const ChatRequest& req)
{
    char temp[32];
    std::snprintf(temp, sizeof temp, "%.4f", req.temperature);
    nlohmann::ordered_json messages = nlohmann::ordered_json::array();
    for (const auto& m : req.messages) {
        messages.push_back({std::string(to_string(m.role)), text::collapse_whitespace(m.content)});
    }
    nlohmann::ordered_json canon = nlohmann::ordered_json::array(
        {text::collapse_whitespace(req.provider_id), text::collapse_whitespace(req.model_id), std::string(temp),
         messages});
    return canon.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::string compute_request_tag(const ChatRequest& req)
{
    return sha256_hex(canonical_serialization(req));
}

void validate(const ChatRequest& req)
{
    if (req.messages.empty()) throw Error(ErrorCode::InvalidRequest, "message list is empty");
    if (req.messages.front().role == Role::assistant) {
        throw Error(ErrorCode::InvalidRequest, "first message must be system or user");
    }
    for (const auto& m : req.messages) {
        if (m.role != Role::system && text::is_blank(m.content)) {
            throw Error(ErrorCode::InvalidRequest, "empty " + std::string(to_string(m.role)) + " message");
        }
    }
    if (req.temperature < 0) throw Error(ErrorCode::InvalidRequest, "negative temperature");
    if (req.max_tokens < 1) throw Error(ErrorCode::InvalidRequest, "max_tokens must be positive");
}

ChatRequest make_request(std::string provider_id, std::string model_id, std::vector<ChatMessage> messages,
                         double temperature, int max_tokens)
{
    ChatRequest req{std::move(provider_id), std::move(model_id), std::move(messages), temperature, max_tokens, {}};
    validate(req);
    req.request_tag = compute_request_tag(req);
    return req;
}

void ProviderProfile::validate() const
{
    if (provider_id.empty()) throw Error(ErrorCode::InvalidConfig, "provider profile without id");
    if (max_concurrent < 1) throw Error(ErrorCode::InvalidConfig, provider_id + ": max_concurrent must be >= 1");
    if (retry_budget < 0) throw Error(ErrorCode::InvalidConfig, provider_id + ": retry_budget must be >= 0");
    if (mode != Mode::replay && endpoint.empty()) {
        throw Error(ErrorCode::InvalidConfig, provider_id + ": live/record mode needs an endpoint");
    }
}

bool is_retryable(int status) noexcept
{
    return status == 0 || status == 408 || status == 409 || status == 425 || status == 429 || status >= 500;
}

std::chrono::milliseconds Backoff::ceiling(int retry) const
{
    auto ceiling = base_;
    for (int i = 1; i < retry && ceiling < cap_; ++i) ceiling *= 2;
    return std::min(ceiling, cap_);
}

std::chrono::milliseconds Backoff::next_delay(int retry)
{
    auto hi = ceiling(retry).count();
    std::lock_guard lock(mutex_);
    std::uniform_int_distribution<long long> dist(0, hi);
    return std::chrono::milliseconds(dist(rng_));
}

void ConcurrencyLimiter::acquire()
{
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return in_flight_ < limit_; });
    ++in_flight_;
}

void ConcurrencyLimiter::release()
{
    {
        std::lock_guard lock(mutex_);
        --in_flight_;
    }
    cv_.notify_one();
}

int ConcurrencyLimiter::in_flight() const
{
    std::lock_guard lock(mutex_);
    return in_flight_;
}

Gateway::Gateway(std::shared_ptr<Transport> transport, GatewayOptions options)
    : transport_(std::move(transport)), options_(std::move(options)), backoff_(std::chrono::milliseconds(250),
                                                                               std::chrono::milliseconds(8000),
                                                                               options_.backoff_seed)
{
    if (!options_.sleep) {
        options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    }
    if (!options_.getenv) {
        options_.getenv = [](const std::string& name) -> std::optional<std::string> {
            const char* v = std::getenv(name.c_str());
            if (v == nullptr) return std::nullopt;
            return std::string(v);
        };
    }
}

std::shared_ptr<TranscriptStore> Gateway::transcripts(const ProviderProfile& profile)
{
    std::string key = profile.transcript_path.empty() ? "mem:" + profile.provider_id
                                                      : "file:" + profile.transcript_path.string();
    std::lock_guard lock(mutex_);
    auto it = stores_.find(key);
    if (it != stores_.end()) return it->second;

    auto store = std::make_shared<TranscriptStore>();
    if (!profile.transcript_path.empty()) {
        if (std::filesystem::exists(profile.transcript_path)) {
            *store = TranscriptStore::import_file(profile.transcript_path);
        }
        if (profile.mode == Mode::record) store->bind_file(profile.transcript_path);
    }
    stores_.emplace(key, store);
    return store;
}

ConcurrencyLimiter& Gateway::limiter(const ProviderProfile& profile)
{
    std::lock_guard lock(mutex_);
    auto& slot = limiters_[profile.provider_id];
    if (!slot) slot = std::make_unique<ConcurrencyLimiter>(profile.max_concurrent);
    return *slot;
}

std::string Gateway::api_key(const ProviderProfile& profile) const
{
    if (profile.auth_ref.empty()) return {};
    auto value = options_.getenv(profile.auth_ref);
    if (!value || value->empty()) {
        throw Error(ErrorCode::AuthMissing, "environment variable " + profile.auth_ref + " is not set");
    }
    return *value;
}

TransportReply Gateway::send_with_retries(const ProviderProfile& profile, int& attempts,
                                          const std::function<TransportReply(const std::string&)>& call)
{
    if (!transport_) throw Error(ErrorCode::TransportError, "no transport configured");
    std::string key = api_key(profile);
    ConcurrencyLimiter::Permit permit(limiter(profile));

    const int max_attempts = profile.retry_budget + 1;
    TransportReply reply;
    for (attempts = 1;; ++attempts) {
        try {
            reply = call(key);
        } catch (const std::exception& e) {
            reply = TransportReply{0, {}, FinishReason::error, e.what()};
        }
        if (reply.status >= 200 && reply.status < 300) return reply;
        if (!is_retryable(reply.status) || attempts >= max_attempts) break;
        auto delay = backoff_.next_delay(attempts);
        spdlog::debug("{}: attempt {} failed (status {}), retrying in {} ms", profile.provider_id, attempts,
                      reply.status, delay.count());
        options_.sleep(delay);
    }
    throw Error(ErrorCode::TransportError, profile.provider_id + ": status " + std::to_string(reply.status) +
                                               " after " + std::to_string(attempts) + " attempt(s): " + reply.error);
}

ChatResponse Gateway::complete(const ChatRequest& req, const ProviderProfile& profile)
{
    validate(req);
    profile.validate();
    std::string tag = compute_request_tag(req);
    if (!req.request_tag.empty() && req.request_tag != tag) {
        throw Error(ErrorCode::InvalidRequest, "request_tag does not match the request contents");
    }

    if (profile.mode == Mode::replay) {
        auto entry = transcripts(profile)->find(tag);
        if (!entry) throw Error(ErrorCode::ReplayMiss, "no transcript for tag " + tag);
        return ChatResponse{entry->response_text, entry->finish_reason, 1, 0};
    }

    auto started = std::chrono::steady_clock::now();
    int attempts = 0;
    TransportReply reply = send_with_retries(
        profile, attempts, [&](const std::string& key) { return transport_->send(req, profile, key); });
    auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);

    if (profile.mode == Mode::record) {
        transcripts(profile)->append({tag, reply.text, reply.finish_reason});
    }
    return ChatResponse{reply.text, reply.finish_reason, attempts, elapsed.count()};
}

std::vector<float> Gateway::embed(const std::string& input, const ProviderProfile& profile)
{
    profile.validate();
    const std::string& model = profile.embedding_model.empty() ? profile.default_model : profile.embedding_model;
    nlohmann::ordered_json canon =
        nlohmann::ordered_json::array({"embed", profile.provider_id, model, text::collapse_whitespace(input)});
    std::string tag = sha256_hex(canon.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace));

    std::string payload;
    if (profile.mode == Mode::replay) {
        auto entry = transcripts(profile)->find(tag);
        if (!entry) throw Error(ErrorCode::ReplayMiss, "no embedding transcript for tag " + tag);
        payload = entry->response_text;
    } else {
        int attempts = 0;
        TransportReply reply = send_with_retries(
            profile, attempts, [&](const std::string& key) { return transport_->embed(input, model, profile, key); });
        payload = reply.text;
        if (profile.mode == Mode::record) transcripts(profile)->append({tag, payload, FinishReason::stop});
    }

    try {
        auto j = nlohmann::json::parse(payload);
        return j.get<std::vector<float>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::TransportError, std::string("malformed embedding payload: ") + e.what());
    }
}

}  // namespace juris::gateway
