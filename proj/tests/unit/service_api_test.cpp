#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <functional>
#include <set>

#include "juris/error.hpp"
#include "juris/eval_objective.hpp"
#include "juris/jsonl.hpp"
#include "juris/knowledge_base.hpp"
#include "juris/rag_engine.hpp"
#include "juris/run_registry.hpp"
#include "juris/service_api.hpp"
#include "juris/templates.hpp"
#include "juris/text.hpp"
#include "test_support.hpp"

using namespace juris;
using service::HttpRequest;

namespace {

ErrorCode code_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected juris::Error");
    return ErrorCode::IoError;
}

const TemplateSet& shipped_templates()
{
    static const TemplateSet set = TemplateSet::load(testing::template_dir() / "manifest.json");
    return set;
}

std::filesystem::path objective_fixture(const char* name) { return testing::fixture_dir() / "objective" / name; }

/// Service over the toy corpus with replayed consult answers and a pluggable runner.
struct ServiceRig {
    testing::TempDir dir;
    std::unique_ptr<kb::KnowledgeBase> kb = std::make_unique<kb::KnowledgeBase>();
    std::shared_ptr<testing::ScriptedTransport> transport = std::make_shared<testing::ScriptedTransport>(
        [](const gateway::ChatRequest&) { return gateway::TransportReply{500, {}, gateway::FinishReason::error, ""}; });
    gateway::Gateway gw{transport, testing::no_sleep_options()};
    gateway::ProviderProfile profile = testing::replay_profile("consult");
    rag::RagEngine engine{*kb, shipped_templates(), gw};
    RunRegistry runs{dir.path() / "runs"};
    std::unique_ptr<service::Service> svc;

    explicit ServiceRig(service::EvalRunner runner = {}, bool load_corpus = true)
    {
        if (load_corpus) {
            for (auto& [body, meta] : kb::KnowledgeBase::read_ingest_file(testing::fixture_dir() / "kb" / "toy_corpus.jsonl")) {
                kb->upsert(body, meta);
            }
        }
        if (!runner) runner = [](RunKind, const nlohmann::json&) { return nlohmann::ordered_json{{"ok", true}}; };
        svc = std::make_unique<service::Service>(*kb, engine, profile, runs, runner);
    }

    void script_consult(const std::string& query, int k, const std::string& answer)
    {
        auto prompt = engine.prepare(query, kb::RetrievalConfig{.k = k}, "rag.consult", profile);
        gw.transcripts(profile)->append({prompt.request.request_tag, answer, gateway::FinishReason::stop});
    }
};

nlohmann::json body_of(const service::HttpResponse& r) { return nlohmann::json::parse(r.body); }

}  // namespace

TEST_CASE("run lifecycle only moves forward")
{
    using S = RunStatus;
    const S all[] = {S::queued, S::running, S::done, S::failed};
    std::set<std::pair<S, S>> legal{{S::queued, S::running}, {S::queued, S::failed}, {S::running, S::done}, {S::running, S::failed}};
    for (auto from : all) {
        for (auto to : all) CHECK(is_legal_transition(from, to) == legal.count({from, to}) > 0);
    }

    testing::TempDir dir;
    RunRegistry reg(dir.path());
    reg.create("a", RunKind::objective);
    CHECK(code_of([&] { reg.create("a", RunKind::subjective); }) == ErrorCode::DuplicateRun);
    CHECK(code_of([&] { reg.create("../x", RunKind::objective); }) == ErrorCode::InvalidRequest);
    CHECK(code_of([&] { reg.complete("a", {}); }) == ErrorCode::IllegalTransition);
    CHECK(code_of([&] { (void)reg.get("zzz"); }) == ErrorCode::UnknownRun);
    reg.mark_running("a");
    auto done = reg.complete("a", {{"score", 1}});
    CHECK(done.status == S::done);
    REQUIRE(done.report_ref.has_value());
    CHECK(std::filesystem::exists(*done.report_ref));
    CHECK((*reg.report("a"))["score"] == 1);
    CHECK(code_of([&] { reg.fail("a", "late"); }) == ErrorCode::IllegalTransition);
    CHECK(reg.next_id() == "run-0002");
}

TEST_CASE("registry survives a restart")
{
    testing::TempDir dir;
    {
        RunRegistry reg(dir.path());
        reg.create("finished", RunKind::objective);
        reg.mark_running("finished");
        reg.complete("finished", {{"n", 3}});
        reg.create("queued", RunKind::subjective);
        reg.create("running", RunKind::objective);
        reg.mark_running("running");
    }
    RunRegistry reg(dir.path());
    CHECK(reg.list().size() == 3);
    CHECK(reg.get("finished").status == RunStatus::done);
    CHECK((*reg.report("finished"))["n"] == 3);
    for (const char* id : {"queued", "running"}) {
        auto d = reg.get(id);
        CHECK(d.status == RunStatus::failed);
        CHECK(d.error == std::optional<std::string>("interrupted by a service restart"));
    }
    CHECK(reg.get("queued").kind == RunKind::subjective);
}

TEST_CASE("status mapping")
{
    CHECK(service::http_status(ErrorCode::ReplayMiss) == 503);
    CHECK(service::http_status(ErrorCode::TransportError) == 503);
    CHECK(service::http_status(ErrorCode::AuthMissing) == 503);
    CHECK(service::http_status(ErrorCode::UnknownRun) == 404);
    CHECK(service::http_status(ErrorCode::DuplicateRun) == 409);
    CHECK(service::http_status(ErrorCode::IndexEmpty) == 409);
    CHECK(service::http_status(ErrorCode::EmptyQuery) == 400);
    CHECK(service::http_status(ErrorCode::InvalidConfig) == 400);
    CHECK(service::http_status(ErrorCode::CorruptIndex) == 500);
}

TEST_CASE("delta splitting reassembles")
{
    const std::string s = "根据[1]第三十七条，离婚后另一方应负担子女生活费。abc";
    for (std::size_t n : {1u, 3u, 16u, 100u}) {
        auto parts = service::split_deltas(s, n);
        std::string joined;
        for (const auto& p : parts) joined += p;
        CHECK(joined == s);
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) CHECK(text::decode_utf8(parts[i]).size() == n);
    }
    CHECK(service::split_deltas("", 16).empty());
}

TEST_CASE("consult streams deltas then a final event")
{
    ServiceRig rig;
    const std::string query = "离婚 离婚 子女";
    const std::string answer = "根据[1]第三十七条，离婚后另一方应负担子女生活费的一部分或全部，负担费用的多少和期限的长短由双方协议。";
    rig.script_consult(query, 2, answer);

    auto res = rig.svc->handle({"POST", "/v1/consult", {}, nlohmann::json{{"query", query}, {"k", 2}}.dump()});
    REQUIRE(res.status == 200);
    CHECK(res.content_type == "text/event-stream");
    auto events = service::parse_sse(res.body);
    REQUIRE(events.size() >= 3);
    std::string text;
    for (std::size_t i = 0; i + 1 < events.size(); ++i) {
        CHECK(events[i]["type"] == "delta");
        text += events[i]["text"].get<std::string>();
    }
    CHECK(text == answer);
    const auto& fin = events.back();
    CHECK(fin["type"] == "final");
    REQUIRE(fin["citations"].size() == 2);
    CHECK(fin["citations"][0]["article_no"] == 37);
    CHECK(fin["citations"][0]["title"] == "中华人民共和国婚姻法");
    CHECK(fin["template"] == "rag.consult");
    CHECK(fin["template_version"] == 1);
    CHECK(fin["finish_reason"] == "stop");
    CHECK(fin["trace_id"] == rag::RagEngine::trace_id(query, kb::RetrievalConfig{.k = 2}, "rag.consult", rig.profile));

    auto plain = rig.svc->handle({"POST", "/v1/consult", {}, nlohmann::json{{"query", query}, {"k", 2}, {"stream", false}}.dump()});
    REQUIRE(plain.status == 200);
    auto j = body_of(plain);
    CHECK(j["text"] == answer);
    CHECK(j["citations"] == fin["citations"]);
    CHECK(rig.transport->calls == 0);
}

TEST_CASE("consult errors carry status and trace id")
{
    ServiceRig rig;
    auto miss = rig.svc->handle({"POST", "/v1/consult", {}, R"({"query":"赡养费"})"});
    CHECK(miss.status == 503);
    CHECK(miss.headers["Retry-After"] == "5");
    auto j = body_of(miss);
    CHECK(j["code"] == "ReplayMiss");
    CHECK(j["trace_id"] == rag::RagEngine::trace_id("赡养费", kb::RetrievalConfig{.k = 3}, "rag.consult", rig.profile));

    CHECK(rig.svc->handle({"POST", "/v1/consult", {}, R"({"query":"  "})"}).status == 400);
    CHECK(rig.svc->handle({"POST", "/v1/consult", {}, R"({})"}).status == 400);
    CHECK(rig.svc->handle({"POST", "/v1/consult", {}, R"({"query":"x","k":0})"}).status == 400);
    CHECK(rig.svc->handle({"POST", "/v1/consult", {}, "{not json"}).status == 400);
    auto bad = body_of(rig.svc->handle({"POST", "/v1/consult", {}, "{not json"}));
    CHECK(bad["trace_id"].get<std::string>().rfind("tr-", 0) == 0);
    CHECK(rig.svc->handle({"GET", "/v1/nothing", {}, ""}).status == 404);
}

TEST_CASE("search, upsert and health")
{
    ServiceRig rig({}, false);
    auto h = body_of(rig.svc->handle({"GET", "/healthz", {}, ""}));
    CHECK(h["status"] == "degraded");
    CHECK(rig.svc->handle({"GET", "/v1/kb/search", {{"q", "离婚"}}, ""}).status == 409);

    auto up = rig.svc->handle({"POST", "/v1/kb/documents", {},
                               nlohmann::json{{"category", "民法"}, {"title", "测试法"}, {"body", "第一条 离婚时子女由双方抚养。\n第二条 其他事项。"}}.dump()});
    REQUIRE(up.status == 200);
    CHECK(body_of(up)["version"] == 1);
    CHECK(body_of(rig.svc->handle({"GET", "/healthz", {}, ""}))["status"] == "ok");

    auto res = rig.svc->handle({"GET", "/v1/kb/search", {{"q", "离婚 子女"}, {"k", "1"}}, ""});
    REQUIRE(res.status == 200);
    auto hits = body_of(res)["hits"];
    REQUIRE(hits.size() == 1);
    CHECK(hits[0]["rank"] == 1);
    CHECK(hits[0]["article_no"] == 1);
    CHECK(hits[0]["title"] == "测试法");
    CHECK(hits[0]["text"].get<std::string>().find("离婚") != std::string::npos);

    CHECK(rig.svc->handle({"GET", "/v1/kb/search", {{"q", "离婚"}, {"k", "0"}}, ""}).status == 400);
    CHECK(rig.svc->handle({"GET", "/v1/kb/search", {{"q", "离婚"}, {"k", "x"}}, ""}).status == 400);
    CHECK(rig.svc->handle({"GET", "/v1/kb/search", {{"q", "离婚"}, {"backend", "magic"}}, ""}).status == 400);
    CHECK(rig.svc->handle({"GET", "/v1/kb/search", {}, ""}).status == 400);
    CHECK(rig.svc->handle({"POST", "/v1/kb/documents", {}, R"({"category":"民法","title":"空"})"}).status == 400);
}

TEST_CASE("objective run through the service reaches done with the expected report")
{
    auto dataset = objective::load_dataset(objective_fixture("dataset24.jsonl"));
    auto pool = objective::load_dataset(objective_fixture("exemplar_pool.jsonl"));
    auto transport = std::make_shared<testing::ScriptedTransport>(
        [](const gateway::ChatRequest&) { return gateway::TransportReply{500, {}, gateway::FinishReason::error, ""}; });
    gateway::Gateway gw(transport, testing::no_sleep_options());
    auto profile = testing::replay_profile("objective");
    objective::EvaluateOptions options{.few_shot = {.seed = 7}, .model = "candidate", .concurrency = 4};
    std::set<std::string> scored;
    for (const auto& i : dataset) scored.insert(i.id);
    for (const auto& line : jsonl::read(objective_fixture("responses24.jsonl"))) {
        auto id = line.value["id"].get<std::string>();
        auto it = std::find_if(dataset.begin(), dataset.end(), [&](const objective::McqItem& m) { return m.id == id; });
        REQUIRE(it != dataset.end());
        auto req = objective::build_prompt(*it, options.few_shot, pool, scored, shipped_templates(), profile, "candidate");
        gw.transcripts(profile)->append({req.request_tag, line.value["response"].get<std::string>(), gateway::FinishReason::stop});
    }

    std::atomic<int> runs{0};
    ServiceRig rig([&](RunKind kind, const nlohmann::json& params) -> nlohmann::ordered_json {
        ++runs;
        if (kind != RunKind::objective) throw Error(ErrorCode::InvalidRequest, "objective only");
        if (params.value("dataset", "") != "dataset24") throw Error(ErrorCode::EmptyDataset, "unknown dataset");
        return objective::report_to_json(objective::evaluate(gw, profile, dataset, pool, shipped_templates(), options));
    });

    auto sub = rig.svc->handle({"POST", "/v1/eval/objective/runs", {}, R"({"run_id":"obj-1","dataset":"dataset24"})"});
    REQUIRE(sub.status == 202);
    CHECK(body_of(sub)["status"] == "queued");
    CHECK(rig.svc->handle({"POST", "/v1/eval/objective/runs", {}, R"({"run_id":"obj-1"})"}).status == 409);
    auto bad = rig.svc->handle({"POST", "/v1/eval/subjective/runs", {}, R"({})"});
    REQUIRE(bad.status == 202);
    const auto bad_id = body_of(bad)["run_id"].get<std::string>();
    CHECK(bad_id == "run-0002");
    rig.svc->wait_idle();

    auto got = body_of(rig.svc->handle({"GET", "/v1/eval/runs/obj-1", {}, ""}));
    CHECK(got["status"] == "done");
    auto expected = nlohmann::json::parse(jsonl::read_file(objective_fixture("expected24.json")));
    CHECK(got["report"]["micro_average"] == expected["micro_average"]);
    CHECK(std::filesystem::exists(got["report_ref"].get<std::string>()));

    auto failed = body_of(rig.svc->handle({"GET", "/v1/eval/runs/" + bad_id, {}, ""}));
    CHECK(failed["status"] == "failed");
    CHECK(failed["error"].get<std::string>().find("objective only") != std::string::npos);
    CHECK_FALSE(failed.contains("report"));
    CHECK(rig.svc->handle({"GET", "/v1/eval/runs/nope", {}, ""}).status == 404);
    CHECK(runs == 2);
    CHECK(transport->calls == 0);
}
