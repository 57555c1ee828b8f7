#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <string_view>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "juris/error.hpp"
#include "juris/gateway.hpp"
#include "juris/knowledge_base.hpp"
#include "juris/rag_engine.hpp"
#include "juris/run_registry.hpp"

namespace httplib {
class Server;
}

namespace juris::service {

struct HttpRequest {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::string body;
};

struct HttpResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
    std::map<std::string, std::string> headers;
};

/// HTTP status for an error code.
int http_status(ErrorCode code) noexcept;

/// Executes one evaluation run and returns its report. `params` is the request body.
using EvalRunner = std::function<nlohmann::ordered_json(RunKind kind, const nlohmann::json& params)>;

struct ServiceOptions {
    int workers = 2;
    int retry_after_seconds = 5;
    /// Code points per streamed delta event.
    std::size_t delta_codepoints = 16;
    std::string consult_template = "rag.consult";
    int default_k = 3;
    /// Called after each successful document upsert (e.g. to persist the store).
    std::function<void()> after_upsert;
};

/// Splits `text` into pieces of at most `n` code points.
std::vector<std::string> split_deltas(std::string_view text, std::size_t n);

/// Parses a server-sent event body into the JSON payload of each event.
std::vector<nlohmann::json> parse_sse(std::string_view body);

/// Endpoints:
///   POST /v1/consult                       SSE (default) or JSON with {"stream": false}
///   GET  /v1/kb/search?q=&k=&backend=
///   POST /v1/kb/documents                  {category, title, body, effective_date?}
///   GET  /healthz
///   POST /v1/eval/{objective|subjective}/runs   {run_id?, ...runner params}
///   GET  /v1/eval/runs/{id}
/// Error bodies are {code, message, trace_id}.
class Service {
  public:
    Service(kb::KnowledgeBase& kb, const rag::RagEngine& rag, gateway::ProviderProfile consult_profile,
            RunRegistry& runs, EvalRunner runner, ServiceOptions options = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    HttpResponse handle(const HttpRequest& request);

    /// Routes every endpoint of `server` to handle().
    void bind(httplib::Server& server);

    /// Blocks until every submitted run has finished.
    void wait_idle();

  private:
    HttpResponse consult(const HttpRequest& req);
    HttpResponse search(const HttpRequest& req);
    HttpResponse upsert(const HttpRequest& req);
    HttpResponse health();
    HttpResponse submit_run(RunKind kind, const HttpRequest& req);
    HttpResponse get_run(const std::string& id);
    void worker_loop();

    kb::KnowledgeBase& kb_;
    const rag::RagEngine& rag_;
    gateway::ProviderProfile consult_profile_;
    RunRegistry& runs_;
    EvalRunner runner_;
    ServiceOptions options_;

    std::mutex queue_mutex_;
    std::condition_variable queue_cv_;
    std::condition_variable idle_cv_;
    std::deque<std::pair<std::string, std::pair<RunKind, nlohmann::json>>> queue_;
    std::size_t in_flight_ = 0;
    bool stopping_ = false;
    std::vector<std::thread> workers_;
};

}  // namespace juris::service
