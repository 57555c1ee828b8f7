#include <httplib.h>

#include <nlohmann/json.hpp>

#include "juris/error.hpp"
#include "juris/gateway.hpp"

namespace juris::gateway {

namespace {

struct Endpoint {
    std::string origin;     // scheme://host[:port]
    std::string base_path;  // without trailing slash
};

Endpoint split_endpoint(const std::string& url)
{
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidConfig, "endpoint is not a URL: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    Endpoint ep;
    if (path_start == std::string::npos) {
        ep.origin = url;
    } else {
        ep.origin = url.substr(0, path_start);
        ep.base_path = url.substr(path_start);
    }
    while (!ep.base_path.empty() && ep.base_path.back() == '/') ep.base_path.pop_back();
    return ep;
}

TransportReply post_json(const std::string& endpoint, const std::string& suffix, const nlohmann::json& body,
                         const std::string& api_key, std::chrono::seconds timeout, nlohmann::json& parsed)
{
    Endpoint ep = split_endpoint(endpoint);
    httplib::Client client(ep.origin);
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

    auto res = client.Post(ep.base_path + suffix, headers, body.dump(), "application/json");
    if (!res) return TransportReply{0, {}, FinishReason::error, httplib::to_string(res.error())};
    if (res->status < 200 || res->status >= 300) {
        return TransportReply{res->status, {}, FinishReason::error, res->body.substr(0, 512)};
    }
    try {
        parsed = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        return TransportReply{502, {}, FinishReason::error, std::string("unparseable body: ") + e.what()};
    }
    return TransportReply{res->status, {}, FinishReason::stop, {}};
}

}  // namespace

TransportReply HttpTransport::send(const ChatRequest& req, const ProviderProfile& profile, const std::string& api_key)
{
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : req.messages) {
        messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
    }
    nlohmann::json body = {{"model", req.model_id},
                           {"messages", messages},
                           {"temperature", req.temperature},
                           {"max_tokens", req.max_tokens}};
    nlohmann::json parsed;
    TransportReply reply = post_json(profile.endpoint, "/chat/completions", body, api_key, timeout_, parsed);
    if (reply.status < 200 || reply.status >= 300) return reply;

    try {
        const auto& choice = parsed.at("choices").at(0);
        reply.text = choice.at("message").at("content").get<std::string>();
        std::string finish = choice.value("finish_reason", "stop");
        reply.finish_reason = finish == "length" ? FinishReason::length : FinishReason::stop;
    } catch (const nlohmann::json::exception& e) {
        return TransportReply{502, {}, FinishReason::error, std::string("unexpected response shape: ") + e.what()};
    }
    return reply;
}

TransportReply HttpTransport::embed(const std::string& text, const std::string& model, const ProviderProfile& profile,
                                    const std::string& api_key)
{
    nlohmann::json body = {{"model", model}, {"input", text}};
    nlohmann::json parsed;
    TransportReply reply = post_json(profile.endpoint, "/embeddings", body, api_key, timeout_, parsed);
    if (reply.status < 200 || reply.status >= 300) return reply;
    try {
        reply.text = parsed.at("data").at(0).at("embedding").dump();
    } catch (const nlohmann::json::exception& e) {
        return TransportReply{502, {}, FinishReason::error, std::string("unexpected response shape: ") + e.what()};
    }
    return reply;
}

}  // namespace juris::gateway
