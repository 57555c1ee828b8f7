#include <doctest.h>

#include <fstream>
#include <functional>
#include <sstream>

#include "bm25_oracle.hpp"
#include "juris/cli.hpp"
#include "juris/error.hpp"
#include "juris/instruction_forge.hpp"
#include "juris/jsonl.hpp"
#include "juris/knowledge_base.hpp"
#include "test_support.hpp"

using namespace juris;
using namespace juris::cli;

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

/// Operations double recording each call with its arguments.
class TraceOps final : public Operations {
  public:
    std::vector<std::pair<std::string, nlohmann::json>> calls;
    std::function<void()> fail;

    void kb_ingest(const KbIngestArgs& a, std::ostream&) override { note("kb_ingest", a); }
    void kb_rebuild(const KbRebuildArgs& a, std::ostream&) override { note("kb_rebuild", a); }
    void kb_search(const KbSearchArgs& a, std::ostream&) override { note("kb_search", a); }
    void forge_clean(const ForgeCleanArgs& a, std::ostream&) override { note("forge_clean", a); }
    void forge_shape(const ForgeShapeArgs& a, std::ostream&) override { note("forge_shape", a); }
    void forge_expand(const ForgeExpandArgs& a, std::ostream&) override { note("forge_expand", a); }
    void forge_lcot(const ForgeLcotArgs& a, std::ostream&) override { note("forge_lcot", a); }
    void forge_triplet(const ForgeTripletArgs& a, std::ostream&) override { note("forge_triplet", a); }
    void forge_export(const ForgeExportArgs& a, std::ostream&) override { note("forge_export", a); }
    void forge_stats(const ForgeStatsArgs& a, std::ostream&) override { note("forge_stats", a); }
    void eval_obj(const EvalObjArgs& a, std::ostream&) override { note("eval_obj", a); }
    void eval_subj(const EvalSubjArgs& a, std::ostream&) override { note("eval_subj", a); }
    void gateway_record(const GatewayRecordArgs& a, std::ostream&) override { note("gateway_record", a); }
    void gateway_replay_verify(const GatewayReplayVerifyArgs& a, std::ostream&) override
    {
        note("gateway_replay_verify", a);
    }
    void serve(const ServeArgs& a, std::ostream&) override { note("serve", a); }

  private:
    template <class T>
    void note(const char* name, const T& args)
    {
        calls.emplace_back(name, nlohmann::json(args));
        if (fail) fail();
    }
};

struct Traced {
    int code = 0;
    std::vector<std::pair<std::string, nlohmann::json>> calls;
    std::string out;
    std::string err;
};

/// Runs with a trace double that outlives run().
Traced run_with(TraceOps& ops, const std::vector<std::string>& args)
{
    Traced t;
    std::ostringstream out, err;
    struct Forward final : Operations {
        TraceOps& o;
        explicit Forward(TraceOps& x) : o(x) {}
        void kb_ingest(const KbIngestArgs& a, std::ostream& s) override { o.kb_ingest(a, s); }
        void kb_rebuild(const KbRebuildArgs& a, std::ostream& s) override { o.kb_rebuild(a, s); }
        void kb_search(const KbSearchArgs& a, std::ostream& s) override { o.kb_search(a, s); }
        void forge_clean(const ForgeCleanArgs& a, std::ostream& s) override { o.forge_clean(a, s); }
        void forge_shape(const ForgeShapeArgs& a, std::ostream& s) override { o.forge_shape(a, s); }
        void forge_expand(const ForgeExpandArgs& a, std::ostream& s) override { o.forge_expand(a, s); }
        void forge_lcot(const ForgeLcotArgs& a, std::ostream& s) override { o.forge_lcot(a, s); }
        void forge_triplet(const ForgeTripletArgs& a, std::ostream& s) override { o.forge_triplet(a, s); }
        void forge_export(const ForgeExportArgs& a, std::ostream& s) override { o.forge_export(a, s); }
        void forge_stats(const ForgeStatsArgs& a, std::ostream& s) override { o.forge_stats(a, s); }
        void eval_obj(const EvalObjArgs& a, std::ostream& s) override { o.eval_obj(a, s); }
        void eval_subj(const EvalSubjArgs& a, std::ostream& s) override { o.eval_subj(a, s); }
        void gateway_record(const GatewayRecordArgs& a, std::ostream& s) override { o.gateway_record(a, s); }
        void gateway_replay_verify(const GatewayReplayVerifyArgs& a, std::ostream& s) override
        {
            o.gateway_replay_verify(a, s);
        }
        void serve(const ServeArgs& a, std::ostream& s) override { o.serve(a, s); }
    };
    t.code = run(args, [&](const WorkbenchConfig&) { return std::make_unique<Forward>(ops); }, out, err);
    t.out = out.str();
    t.err = err.str();
    t.calls = ops.calls;
    return t;
}

Traced run_traced(const std::vector<std::string>& args, std::function<void()> fail = {})
{
    TraceOps ops;
    ops.fail = std::move(fail);
    return run_with(ops, args);
}

std::string fixture(const std::string& rel) { return (testing::fixture_dir() / rel).string(); }
std::string fixture_config() { return fixture("juris.yaml"); }

void write(const std::filesystem::path& p, const std::string& s)
{
    std::filesystem::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << s;
}

std::string manifest_line() { return "templates: " + (testing::template_dir() / "manifest.json").string() + "\n"; }

int run_module(const std::vector<std::string>& args, std::string* out_text = nullptr, std::string* err_text = nullptr,
               std::shared_ptr<gateway::Transport> transport = nullptr)
{
    std::ostringstream out, err;
    int code = run(
        args, [&](const WorkbenchConfig& cfg) { return std::make_unique<ModuleOperations>(cfg, transport); }, out, err);
    if (out_text) *out_text = out.str();
    if (err_text) *err_text = err.str();
    return code;
}

}  // namespace

TEST_CASE("subcommands reach their operation with parsed arguments")
{
    TraceOps ops;
    auto t = run_with(ops, {"kb", "search", "--q", "抚养费", "--k", "3", "--kb", "/tmp/kb"});
    CHECK(t.code == 0);
    REQUIRE(t.calls.size() == 1);
    CHECK(t.calls[0].first == "kb_search");
    CHECK(t.calls[0].second == nlohmann::json{{"kb_dir", "/tmp/kb"}, {"query", "抚养费"}, {"k", 3}, {"backend", "lexical"},
                                              {"provider", ""}, {"out", ""}});

    const std::vector<std::pair<std::vector<std::string>, std::string>> cases = {
        {{"kb", "ingest", "--in", fixture("kb/toy_corpus.jsonl"), "--kb", "/tmp/kb"}, "kb_ingest"},
        {{"kb", "rebuild", "--kb", "/tmp/kb"}, "kb_rebuild"},
        {{"forge", "clean", "--records", fixture("forge/records.jsonl"), "--schemas", fixture("forge/plan.json"), "--out", "o"}, "forge_clean"},
        {{"forge", "shape", "--in", fixture("forge/records.jsonl"), "--out", "o"}, "forge_shape"},
        {{"forge", "expand", "--records", fixture("forge/records.jsonl"), "--out", "o"}, "forge_expand"},
        {{"forge", "lcot", "--in", fixture("forge/records.jsonl"), "--out", "o"}, "forge_lcot"},
        {{"forge", "triplet", "--in", fixture("forge/records.jsonl"), "--records", fixture("forge/records.jsonl"), "--out", "o"}, "forge_triplet"},
        {{"forge", "export", "--records", fixture("forge/records.jsonl"), "--plan", fixture("forge/plan.json"), "--out", "o"}, "forge_export"},
        {{"forge", "stats", "--in", fixture("forge/records.jsonl")}, "forge_stats"},
        {{"eval", "obj", "--dataset", fixture("objective/dataset24.jsonl")}, "eval_obj"},
        {{"eval", "subj", "--dataset", fixture("subjective/dataset.jsonl")}, "eval_subj"},
        {{"gateway", "record", "--requests", fixture("consult/answers.jsonl")}, "gateway_record"},
        {{"gateway", "replay-verify", "--requests", fixture("consult/answers.jsonl")}, "gateway_replay_verify"},
        {{"serve", "--port", "9090"}, "serve"},
    };
    for (const auto& [args, op] : cases) {
        CAPTURE(op);
        TraceOps o;
        auto r = run_with(o, args);
        CHECK(r.code == 0);
        REQUIRE(r.calls.size() == 1);
        CHECK(r.calls[0].first == op);
    }
}

TEST_CASE("identical invocations produce identical module calls")
{
    const std::vector<std::string> args = {"--config", fixture_config(), "eval", "obj", "--dataset",
                                           fixture("objective/dataset24.jsonl"), "--out", "r.json"};
    TraceOps a, b;
    auto ta = run_with(a, args);
    auto tb = run_with(b, args);
    CHECK(ta.code == 0);
    CHECK(ta.calls == tb.calls);
}

TEST_CASE("flags override config values")
{
    const auto cfg = fixture_config();
    const auto dataset = fixture("objective/dataset24.jsonl");
    {
        TraceOps ops;
        auto t = run_with(ops, {"--config", cfg, "eval", "obj", "--dataset", dataset});
        REQUIRE(t.calls.size() == 1);
        const auto& a = t.calls[0].second;
        CHECK(a["seed"] == 7);
        CHECK(a["shots_single"] == 4);
        CHECK(a["shots_multi"] == 5);
        CHECK(a["concurrency"] == 4);
        CHECK(a["pool"] == (testing::fixture_dir() / "objective/exemplar_pool.jsonl").string());
    }
    {
        TraceOps ops;
        auto t = run_with(ops, {"--config", cfg, "eval", "obj", "--dataset", dataset, "--seed", "9", "--shots-single", "2",
                                "--concurrency", "2"});
        REQUIRE(t.calls.size() == 1);
        CHECK(t.calls[0].second["seed"] == 9);
        CHECK(t.calls[0].second["shots_single"] == 2);
        CHECK(t.calls[0].second["concurrency"] == 2);
    }
    {
        TraceOps ops;
        auto t = run_with(ops, {"--config", cfg, "eval", "subj", "--dataset", fixture("subjective/dataset.jsonl")});
        REQUIRE(t.calls.size() == 1);
        CHECK(t.calls[0].second["judge_provider"] == "subjective-judge");
        CHECK(t.calls[0].second["repeats"] == 3);
    }
    {
        TraceOps ops;
        auto t = run_with(ops, {"--config", cfg, "kb", "search", "--q", "x"});
        REQUIRE(t.calls.size() == 1);
        CHECK(t.calls[0].second["k"] == 3);
        CHECK(t.calls[0].second["kb_dir"] == (testing::fixture_dir() / "kb/store").string());
    }
}

TEST_CASE("exit codes")
{
    CHECK(run_traced({"--help"}).code == 0);
    CHECK(run_traced({}).code == 1);
    CHECK(run_traced({"nonsense"}).code == 1);
    CHECK(run_traced({"kb"}).code == 1);
    CHECK(run_traced({"kb", "search"}).code == 1);
    CHECK(run_traced({"kb", "search", "--q", "x", "--k", "many"}).code == 1);
    CHECK(run_traced({"eval", "obj", "--dataset", "/no/such/file.jsonl"}).code == 1);
    CHECK(run_traced({"--config", "/no/such.yaml", "kb", "rebuild"}).code == 1);

    auto validation = run_traced({"kb", "search", "--q", "x"}, [] { throw Error(ErrorCode::EmptyQuery, "empty"); });
    CHECK(validation.code == 1);
    CHECK(validation.err.find("empty") != std::string::npos);
    CHECK(run_traced({"kb", "search", "--q", "x"}, [] { throw Error(ErrorCode::TransportError, "down"); }).code == 2);
    CHECK(run_traced({"kb", "search", "--q", "x"}, [] { throw Error(ErrorCode::IoError, "disk"); }).code == 2);
}

TEST_CASE("config validation")
{
    testing::TempDir dir;
    const auto base = dir.path();
    const std::string replay = "    mode: replay\n";

    SUBCASE("example config loads")
    {
        auto cfg = load_config(testing::template_dir().parent_path() / "config" / "juris.example.yaml");
        CHECK(cfg.default_provider == "openai");
        CHECK(cfg.provider("").auth_ref == "OPENAI_API_KEY");
        CHECK(cfg.provider("openai-record").mode == gateway::Mode::record);
        CHECK(cfg.eval.judge_provider == "openai");
    }
    SUBCASE("fixture config resolves paths against its directory")
    {
        auto cfg = load_config(fixture_config());
        CHECK(cfg.provider("forge").transcript_path == testing::fixture_dir() / "transcripts/forge.jsonl");
        CHECK(cfg.default_provider == "objective");
    }
    SUBCASE("credentials in the file are rejected")
    {
        for (const char* key : {"api_key", "token", "secret", "password"}) {
            CAPTURE(key);
            auto yaml = manifest_line() + "providers:\n  - id: a\n" + replay + "    " + key + ": sk-123\n";
            CHECK(code_of([&] { config_from_yaml(yaml, base); }) == ErrorCode::InvalidConfig);
        }
        CHECK(code_of([&] { config_from_yaml(manifest_line() + "api_key: sk-1\n", base); }) == ErrorCode::InvalidConfig);
    }
    SUBCASE("exactly one default provider")
    {
        auto two = manifest_line() + "providers:\n  - id: a\n" + replay + "    default: true\n  - id: b\n" + replay +
                   "    default: true\n";
        CHECK(code_of([&] { config_from_yaml(two, base); }) == ErrorCode::InvalidConfig);
        auto none = manifest_line() + "providers:\n  - id: a\n" + replay + "  - id: b\n" + replay;
        CHECK(code_of([&] { config_from_yaml(none, base); }) == ErrorCode::InvalidConfig);
        auto single = manifest_line() + "providers:\n  - id: a\n" + replay;
        CHECK(config_from_yaml(single, base).default_provider == "a");
    }
    SUBCASE("referenced paths exist")
    {
        CHECK(code_of([&] { config_from_yaml("templates: nope/manifest.json\n", base); }) == ErrorCode::InvalidConfig);
        auto missing_transcript = manifest_line() + "providers:\n  - id: a\n" + replay + "    transcript: none.jsonl\n";
        CHECK(code_of([&] { config_from_yaml(missing_transcript, base); }) == ErrorCode::InvalidConfig);
        CHECK(code_of([&] { config_from_yaml(manifest_line() + "eval:\n  pool: none.jsonl\n", base); }) ==
              ErrorCode::InvalidConfig);
    }
    SUBCASE("unknown keys and bad values")
    {
        CHECK(code_of([&] { config_from_yaml(manifest_line() + "colour: blue\n", base); }) == ErrorCode::InvalidConfig);
        CHECK(code_of([&] { config_from_yaml(manifest_line() + "concurrency: lots\n", base); }) == ErrorCode::InvalidConfig);
        CHECK(code_of([&] { config_from_yaml(manifest_line() + "eval:\n  judge_provider: ghost\n", base); }) ==
              ErrorCode::InvalidConfig);
        CHECK(code_of([&] { config_from_yaml("[1, 2", base); }) == ErrorCode::InvalidConfig);
    }
}

TEST_CASE("kb ingest then search lists the oracle's hits")
{
    testing::TempDir dir;
    const auto kb_dir = (dir.path() / "kb").string();
    std::string out;
    REQUIRE(run_module({"kb", "ingest", "--in", fixture("kb/toy_corpus.jsonl"), "--kb", kb_dir}, &out) == 0);
    CHECK(out.find("v1") != std::string::npos);

    const auto json_out = (dir.path() / "hits.json").string();
    REQUIRE(run_module({"kb", "search", "--q", "抚养费", "--k", "3", "--kb", kb_dir, "--out", json_out}, &out) == 0);

    auto kb = kb::KnowledgeBase::open(kb_dir);
    auto expected = oracle::exhaustive_bm25(kb->snapshot()->chunks(), "抚养费", 3);
    std::vector<std::string> lines;
    std::istringstream in(out);
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    REQUIRE(lines.size() == expected.size());
    CHECK(lines.size() == 3);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        CHECK(lines[i].rfind(std::to_string(i + 1) + "\t", 0) == 0);
        CHECK(lines[i].find("\t" + expected[i].chunk_id + "\t") != std::string::npos);
    }
    auto j = nlohmann::json::parse(jsonl::read_file(json_out));
    REQUIRE(j["hits"].size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(j["hits"][i]["score"].get<double>() == doctest::Approx(expected[i].score).epsilon(1e-12));
    }

    CHECK(run_module({"kb", "rebuild", "--kb", kb_dir}, &out) == 0);
    CHECK(run_module({"kb", "search", "--q", "抚养费", "--k", "0", "--kb", kb_dir}) == 1);
    CHECK(run_module({"kb", "search", "--q", "抚养费", "--kb", (dir.path() / "absent").string()}) == 1);
}

TEST_CASE("eval obj under replay writes byte-identical reports")
{
    testing::TempDir dir;
    const auto a = (dir.path() / "a.json").string();
    const auto b = (dir.path() / "b.json").string();
    const std::vector<std::string> base = {"--config", fixture_config(), "eval", "obj", "--dataset",
                                           fixture("objective/dataset24.jsonl"), "--seed", "7", "--out"};
    auto args_a = base, args_b = base;
    args_a.push_back(a);
    args_b.push_back(b);
    args_b.insert(args_b.begin(), {"--concurrency", "1"});
    std::string table_a, table_b;
    REQUIRE(run_module(args_a, &table_a) == 0);
    REQUIRE(run_module(args_b, &table_b) == 0);
    CHECK(jsonl::read_file(a) == jsonl::read_file(b));
    CHECK(table_a == table_b);
    auto expected = nlohmann::json::parse(jsonl::read_file(fixture("objective/expected24.json")));
    CHECK(nlohmann::json::parse(jsonl::read_file(a))["micro_average"] == expected["micro_average"]);

    // Without a pool (flag or config) the run is refused as a validation error.
    auto cfg = dir.path() / "nopool.yaml";
    write(cfg, manifest_line() + "providers:\n  - id: objective\n    mode: replay\n    transcript: " +
                   fixture("transcripts/objective.jsonl") + "\n");
    CHECK(run_module({"--config", cfg.string(), "eval", "obj", "--dataset", fixture("objective/dataset24.jsonl")}) == 1);
    // A seed the transcript was not recorded with misses every item; those score incorrect, not fatal.
    CHECK(run_module({"--config", fixture_config(), "eval", "obj", "--dataset", fixture("objective/dataset24.jsonl"),
                      "--seed", "8"}) == 0);
}

TEST_CASE("eval subj under replay")
{
    testing::TempDir dir;
    const auto out = (dir.path() / "s.json").string();
    std::string table;
    REQUIRE(run_module({"--config", fixture_config(), "eval", "subj", "--dataset", fixture("subjective/dataset.jsonl"),
                        "--provider", "subjective-model", "--out", out},
                       &table) == 0);
    auto expected = nlohmann::json::parse(jsonl::read_file(fixture("subjective/expected.json")));
    auto got = nlohmann::json::parse(jsonl::read_file(out));
    CHECK(got["display"] == expected["display"]);
    CHECK(got["n_invalid"] == expected["n_invalid"]);
    CHECK(table.find("ACC   CPL   CLR   Average") != std::string::npos);
    // Judge transcript missing for a different repeat count: gateway errors propagate as runtime errors.
    CHECK(run_module({"--config", fixture_config(), "eval", "subj", "--dataset", fixture("subjective/dataset.jsonl"),
                      "--provider", "subjective-model", "--repeats", "4"}) == 2);
}

TEST_CASE("forge export and stats from the command line")
{
    testing::TempDir dir;
    const auto data = (dir.path() / "dataset.jsonl").string();
    const auto stages = (dir.path() / "stages.json").string();
    std::string out;
    REQUIRE(run_module({"--config", fixture_config(), "forge", "export", "--records", fixture("forge/records.jsonl"), "--plan",
                        fixture("forge/plan.json"), "--provider", "forge", "--out", data, "--stages-out", stages},
                       &out) == 0);
    auto expected = nlohmann::json::parse(jsonl::read_file(fixture("forge/expected_stages.json")));
    auto got = nlohmann::json::parse(jsonl::read_file(stages));
    REQUIRE(got["stages"].size() == expected["stages"].size());
    for (std::size_t i = 0; i < expected["stages"].size(); ++i) {
        for (const char* k : {"stage", "kept", "dropped", "rejected"}) CHECK(got["stages"][i][k] == expected["stages"][i][k]);
    }

    std::string table;
    REQUIRE(run_module({"forge", "stats", "--in", data}, &table) == 0);
    CHECK(table == forge::render_stats(forge::dataset_stats(forge::load_dataset(data))));
    CHECK(table.find("Total") != std::string::npos);

    // Stage-by-stage commands on the same fixture.
    const auto pairs = (dir.path() / "pairs.jsonl").string();
    const auto drops = (dir.path() / "drops.jsonl").string();
    auto plan = nlohmann::json::parse(jsonl::read_file(fixture("forge/plan.json")));
    const auto schemas = (dir.path() / "schemas.json").string();
    write(schemas, plan["schemas"].dump());
    REQUIRE(run_module({"forge", "clean", "--records", fixture("forge/records.jsonl"), "--schemas", schemas, "--out", pairs,
                        "--drops-out", drops},
                       &out) == 0);
    CHECK(out.rfind("kept ", 0) == 0);
    auto cleaned = forge::load_dataset(pairs);
    CHECK_FALSE(cleaned.empty());
    const auto lcot = (dir.path() / "lcot.jsonl").string();
    REQUIRE(run_module({"--config", fixture_config(), "forge", "lcot", "--in", pairs, "--out", lcot}, &out) == 0);
    const auto wrapped = forge::load_dataset(lcot).size();
    CHECK(out == "wrapped " + std::to_string(wrapped) + ", rejected " + std::to_string(cleaned.size() - wrapped) + "\n");
    CHECK(wrapped > 0);
    const auto triplets = (dir.path() / "triplets.jsonl").string();
    REQUIRE(run_module({"forge", "triplet", "--in", pairs, "--records", fixture("forge/records.jsonl"), "--out", triplets},
                       &out) == 0);
    CHECK(forge::load_dataset(triplets).size() == cleaned.size());
    // Shaping through a provider with no transcript for these prompts fails at runtime.
    CHECK(run_module({"--config", fixture_config(), "forge", "shape", "--in", pairs, "--provider", "consult", "--out",
                      (dir.path() / "shaped.jsonl").string()}) == 2);
}

TEST_CASE("gateway record then replay-verify")
{
    testing::TempDir dir;
    auto transport = std::make_shared<testing::ScriptedTransport>([](const gateway::ChatRequest& req) {
        return gateway::TransportReply{200, "echo: " + req.messages.back().content, gateway::FinishReason::stop, ""};
    });
    const auto cfg = dir.path() / "juris.yaml";
    write(cfg, manifest_line() +
                   "providers:\n  - id: live\n    mode: live\n    endpoint: http://127.0.0.1:9\n    model: m\n"
                   "    default: true\n");
    const auto requests = dir.path() / "requests.jsonl";
    write(requests, R"({"messages":[{"role":"user","content":"甲"}]})" "\n" R"({"messages":[{"role":"user","content":"乙"}],"temperature":0.2})" "\n");
    const auto transcript = (dir.path() / "t.jsonl").string();

    std::string out;
    REQUIRE(run_module({"--config", cfg.string(), "gateway", "record", "--requests", requests.string(), "--transcript",
                        transcript},
                       &out, nullptr, transport) == 0);
    CHECK(transport->calls == 2);
    CHECK(gateway::TranscriptStore::import_file(transcript).size() == 2);

    const auto report = (dir.path() / "verify.json").string();
    REQUIRE(run_module({"--config", cfg.string(), "gateway", "replay-verify", "--requests", requests.string(), "--transcript",
                        transcript, "--out", report},
                       &out, nullptr, transport) == 0);
    CHECK(out == "hits 2 of 2\n");
    CHECK(transport->calls == 2);

    write(requests, R"({"messages":[{"role":"user","content":"丙"}]})" "\n");
    CHECK(run_module({"--config", cfg.string(), "gateway", "replay-verify", "--requests", requests.string(), "--transcript",
                      transcript, "--out", report},
                     &out, nullptr, transport) == 2);
    CHECK(out.rfind("miss\t1\t", 0) == 0);
    CHECK(nlohmann::json::parse(jsonl::read_file(report))["misses"].size() == 1);
}
