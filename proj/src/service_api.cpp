#include "juris/service_api.hpp"

#include <charconv>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "juris/hashing.hpp"
#include "juris/text.hpp"

namespace juris::service {

namespace {

std::string request_trace_id(const HttpRequest& req)
{
    return "tr-" + sha256_hex(req.method + " " + req.path + "\n" + req.body).substr(0, 16);
}

HttpResponse json_response(int status, const nlohmann::ordered_json& body)
{
    HttpResponse r;
    r.status = status;
    r.body = body.dump();
    return r;
}

HttpResponse error_response(const Error& e, const std::string& trace_id, int retry_after)
{
    nlohmann::ordered_json body;
    body["code"] = to_string(e.code());
    body["message"] = e.what();
    body["trace_id"] = trace_id;
    auto r = json_response(http_status(e.code()), body);
    if (r.status == 503) r.headers["Retry-After"] = std::to_string(retry_after);
    return r;
}

nlohmann::json parse_body(const std::string& body)
{
    if (text::is_blank(body)) return nlohmann::json::object();
    try {
        auto j = nlohmann::json::parse(body);
        if (!j.is_object()) throw Error(ErrorCode::InvalidRequest, "request body must be a JSON object");
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidRequest, std::string("malformed JSON body: ") + e.what());
    }
}

int parse_k(const std::string& s)
{
    int k = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), k);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw Error(ErrorCode::InvalidConfig, "k must be an integer");
    if (k <= 0) throw Error(ErrorCode::InvalidConfig, "k must be positive");
    return k;
}

kb::Backend parse_backend(const std::string& s)
{
    if (s == "lexical") return kb::Backend::lexical;
    if (s == "vector") return kb::Backend::vector;
    throw Error(ErrorCode::InvalidConfig, "unknown backend '" + s + "'");
}

std::string sse_event(const nlohmann::ordered_json& payload)
{
    return "event: " + payload["type"].get<std::string>() + "\ndata: " + payload.dump() + "\n\n";
}

nlohmann::ordered_json hit_json(const kb::RetrievalHit& h)
{
    return {{"chunk_id", h.chunk_id}, {"rank", h.rank}, {"score", h.score}, {"doc_id", h.doc_id}, {"chunk_index", h.chunk_index}};
}

}  // namespace

int http_status(ErrorCode code) noexcept
{
    switch (code) {
        case ErrorCode::TransportError:
        case ErrorCode::AuthMissing:
        case ErrorCode::ReplayMiss: return 503;
        case ErrorCode::UnknownRun:
        case ErrorCode::UnknownDocument: return 404;
        case ErrorCode::DuplicateRun:
        case ErrorCode::IndexEmpty:
        case ErrorCode::IllegalTransition: return 409;
        case ErrorCode::IoError:
        case ErrorCode::CorruptIndex:
        case ErrorCode::CorruptTranscript: return 500;
        default: return is_validation_error(code) ? 400 : 500;
    }
}

std::vector<std::string> split_deltas(std::string_view s, std::size_t n)
{
    std::vector<std::string> out;
    if (n == 0) n = 1;
    std::string cur;
    std::size_t count = 0;
    for (char32_t cp : text::decode_utf8(s)) {
        text::append_utf8(cur, cp);
        if (++count == n) {
            out.push_back(std::move(cur));
            cur.clear();
            count = 0;
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::vector<nlohmann::json> parse_sse(std::string_view body)
{
    std::vector<nlohmann::json> events;
    std::string data;
    for (auto line : text::split_lines(body)) {
        if (line.empty()) {
            if (!data.empty()) events.push_back(nlohmann::json::parse(data));
            data.clear();
        } else if (line.substr(0, 5) == "data:") {
            auto payload = line.substr(5);
            if (!payload.empty() && payload.front() == ' ') payload.remove_prefix(1);
            data += payload;
        }
    }
    if (!data.empty()) events.push_back(nlohmann::json::parse(data));
    return events;
}

Service::Service(kb::KnowledgeBase& kb, const rag::RagEngine& rag, gateway::ProviderProfile consult_profile,
                 RunRegistry& runs, EvalRunner runner, ServiceOptions options)
    : kb_(kb),
      rag_(rag),
      consult_profile_(std::move(consult_profile)),
      runs_(runs),
      runner_(std::move(runner)),
      options_(std::move(options))
{
    for (int i = 0; i < std::max(1, options_.workers); ++i) workers_.emplace_back([this] { worker_loop(); });
}

Service::~Service()
{
    {
        std::lock_guard lock(queue_mutex_);
        stopping_ = true;
    }
    queue_cv_.notify_all();
    for (auto& t : workers_) t.join();
}

HttpResponse Service::handle(const HttpRequest& req)
{
    try {
        const std::string& p = req.path;
        if (req.method == "POST" && p == "/v1/consult") return consult(req);
        if (req.method == "GET" && p == "/v1/kb/search") return search(req);
        if (req.method == "POST" && p == "/v1/kb/documents") return upsert(req);
        if (req.method == "GET" && p == "/healthz") return health();
        if (req.method == "POST" && p == "/v1/eval/objective/runs") return submit_run(RunKind::objective, req);
        if (req.method == "POST" && p == "/v1/eval/subjective/runs") return submit_run(RunKind::subjective, req);
        const std::string runs_prefix = "/v1/eval/runs/";
        if (req.method == "GET" && p.rfind(runs_prefix, 0) == 0 && p.size() > runs_prefix.size()) {
            return get_run(p.substr(runs_prefix.size()));
        }
        nlohmann::ordered_json body{{"code", "NotFound"}, {"message", req.method + " " + p + " is not an endpoint"},
                                    {"trace_id", request_trace_id(req)}};
        return json_response(404, body);
    } catch (const Error& e) {
        return error_response(e, request_trace_id(req), options_.retry_after_seconds);
    } catch (const std::exception& e) {
        spdlog::error("unhandled error for {} {}: {}", req.method, req.path, e.what());
        nlohmann::ordered_json body{{"code", "Internal"}, {"message", e.what()}, {"trace_id", request_trace_id(req)}};
        return json_response(500, body);
    }
}

HttpResponse Service::consult(const HttpRequest& req)
{
    auto body = parse_body(req.body);
    if (!body.contains("query") || !body["query"].is_string()) throw Error(ErrorCode::EmptyQuery, "query is required");
    const std::string query = body["query"].get<std::string>();
    kb::RetrievalConfig cfg;
    cfg.k = options_.default_k;
    if (body.contains("k")) {
        if (!body["k"].is_number_integer() || body["k"].get<int>() <= 0) throw Error(ErrorCode::InvalidConfig, "k must be a positive integer");
        cfg.k = body["k"].get<int>();
    }
    const std::string tmpl = body.value("template", options_.consult_template);
    const bool stream = body.value("stream", true);

    rag::ConsultAnswer answer;
    try {
        // The answer is complete before any byte of the stream is sent, so every
        // failure is reported with a proper status code.
        answer = rag_.consult(query, cfg, tmpl, consult_profile_);
    } catch (const Error& e) {
        return error_response(e, rag::RagEngine::trace_id(query, cfg, tmpl, consult_profile_), options_.retry_after_seconds);
    }

    nlohmann::ordered_json citations = nlohmann::ordered_json::array();
    for (const auto& h : answer.citations) {
        auto c = hit_json(h);
        if (auto chunk = kb_.resolve(h.chunk_id)) {
            c["title"] = chunk->title;
            c["category"] = chunk->category;
            if (chunk->chunk.article_no) c["article_no"] = *chunk->chunk.article_no;
        }
        citations.push_back(std::move(c));
    }

    if (!stream) {
        nlohmann::ordered_json j;
        j["text"] = answer.text;
        j["citations"] = citations;
        j["template"] = answer.template_name;
        j["template_version"] = answer.template_version;
        j["trace_id"] = answer.trace_id;
        j["finish_reason"] = gateway::to_string(answer.finish_reason);
        return json_response(200, j);
    }
    HttpResponse r;
    r.content_type = "text/event-stream";
    r.headers["Cache-Control"] = "no-cache";
    for (const auto& piece : split_deltas(answer.text, options_.delta_codepoints)) {
        r.body += sse_event({{"type", "delta"}, {"text", piece}});
    }
    r.body += sse_event({{"type", "final"},
                         {"citations", citations},
                         {"trace_id", answer.trace_id},
                         {"template", answer.template_name},
                         {"template_version", answer.template_version},
                         {"finish_reason", gateway::to_string(answer.finish_reason)}});
    return r;
}

HttpResponse Service::search(const HttpRequest& req)
{
    auto q = req.query.find("q");
    if (q == req.query.end()) throw Error(ErrorCode::EmptyQuery, "q is required");
    kb::RetrievalConfig cfg;
    cfg.k = options_.default_k;
    if (auto k = req.query.find("k"); k != req.query.end()) cfg.k = parse_k(k->second);
    if (auto b = req.query.find("backend"); b != req.query.end()) cfg.backend = parse_backend(b->second);

    nlohmann::ordered_json hits = nlohmann::ordered_json::array();
    for (const auto& h : kb_.search(q->second, cfg)) {
        auto j = hit_json(h);
        if (auto chunk = kb_.resolve(h.chunk_id)) {
            j["title"] = chunk->title;
            j["category"] = chunk->category;
            j["version"] = chunk->version;
            if (chunk->chunk.article_no) j["article_no"] = *chunk->chunk.article_no;
            j["text"] = chunk->chunk.text;
        }
        hits.push_back(std::move(j));
    }
    return json_response(200, {{"hits", hits}});
}

HttpResponse Service::upsert(const HttpRequest& req)
{
    auto body = parse_body(req.body);
    kb::DocumentMetadata meta;
    meta.category = body.value("category", "");
    meta.title = body.value("title", "");
    if (body.contains("effective_date") && body["effective_date"].is_string()) meta.effective_date = body["effective_date"].get<std::string>();
    auto doc = kb_.upsert(body.value("body", ""), meta);
    if (options_.after_upsert) options_.after_upsert();
    return json_response(200, {{"doc_id", doc.doc_id}, {"version", doc.version}});
}

HttpResponse Service::health()
{
    auto size = kb_.index_size();
    return json_response(200, {{"status", size == 0 ? "degraded" : "ok"}, {"index_size", size}});
}

HttpResponse Service::submit_run(RunKind kind, const HttpRequest& req)
{
    auto body = parse_body(req.body);
    EvalRunDescriptor d;
    if (body.contains("run_id")) {
        if (!body["run_id"].is_string()) throw Error(ErrorCode::InvalidRequest, "run_id must be a string");
        d = runs_.create(body["run_id"].get<std::string>(), kind);
    } else {
        for (;;) {
            try {
                d = runs_.create(runs_.next_id(), kind);
                break;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::DuplicateRun) throw;
            }
        }
    }
    {
        std::lock_guard lock(queue_mutex_);
        queue_.push_back({d.run_id, {kind, std::move(body)}});
        ++in_flight_;
    }
    queue_cv_.notify_one();
    return json_response(202, descriptor_to_json(d));
}

HttpResponse Service::get_run(const std::string& id)
{
    auto d = runs_.get(id);
    auto j = descriptor_to_json(d);
    if (auto report = runs_.report(id)) j["report"] = *report;
    return json_response(200, j);
}

void Service::worker_loop()
{
    for (;;) {
        std::pair<std::string, std::pair<RunKind, nlohmann::json>> job;
        {
            std::unique_lock lock(queue_mutex_);
            queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
            if (queue_.empty()) return;
            job = std::move(queue_.front());
            queue_.pop_front();
        }
        const auto& id = job.first;
        try {
            runs_.mark_running(id);
            auto report = runner_(job.second.first, job.second.second);
            runs_.complete(id, report);
        } catch (const std::exception& e) {
            spdlog::warn("run {} failed: {}", id, e.what());
            try {
                runs_.fail(id, e.what());
            } catch (const Error& inner) {
                spdlog::error("run {} could not be marked failed: {}", id, inner.what());
            }
        }
        {
            std::lock_guard lock(queue_mutex_);
            --in_flight_;
        }
        idle_cv_.notify_all();
    }
}

void Service::wait_idle()
{
    std::unique_lock lock(queue_mutex_);
    idle_cv_.wait(lock, [&] { return in_flight_ == 0; });
}

void Service::bind(httplib::Server& server)
{
    auto adapt = [this](const httplib::Request& in, httplib::Response& out) {
        HttpRequest req{in.method, in.path, {}, in.body};
        for (const auto& [k, v] : in.params) req.query.emplace(k, v);
        auto res = handle(req);
        out.status = res.status;
        for (const auto& [k, v] : res.headers) out.set_header(k, v);
        if (res.content_type == "text/event-stream") {
            auto events = std::make_shared<std::vector<std::string>>();
            for (std::size_t pos = 0; pos < res.body.size();) {
                auto end = res.body.find("\n\n", pos);
                end = end == std::string::npos ? res.body.size() : end + 2;
                events->push_back(res.body.substr(pos, end - pos));
                pos = end;
            }
            out.set_chunked_content_provider(res.content_type, [events, i = std::size_t{0}](std::size_t, httplib::DataSink& sink) mutable {
                if (i < events->size()) {
                    const auto& e = (*events)[i++];
                    return sink.write(e.data(), e.size());
                }
                sink.done();
                return true;
            });
        } else {
            out.set_content(res.body, res.content_type);
        }
    };
    server.Post("/v1/consult", adapt);
    server.Get("/v1/kb/search", adapt);
    server.Post("/v1/kb/documents", adapt);
    server.Get("/healthz", adapt);
    server.Post(R"(/v1/eval/(objective|subjective)/runs)", adapt);
    server.Get(R"(/v1/eval/runs/([^/]+))", adapt);
}

}  // namespace juris::service
