// Builds the replay transcripts for the committed fixtures from their
// id-keyed response files, so the juris binary can run them offline.
//
//   fixture_transcripts --fixtures tests/fixtures --templates templates/manifest.json [--check]
//
// With --check nothing is written; the exit code is 1 when a committed
// transcript differs from what the fixtures produce.

#include <algorithm>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "juris/error.hpp"
#include "juris/eval_objective.hpp"
#include "juris/eval_subjective.hpp"
#include "juris/instruction_forge.hpp"
#include "juris/jsonl.hpp"
#include "juris/knowledge_base.hpp"
#include "juris/rag_engine.hpp"
#include "juris/templates.hpp"

using namespace juris;
namespace fs = std::filesystem;

namespace {

class OfflineTransport final : public gateway::Transport {
  public:
    gateway::TransportReply send(const gateway::ChatRequest&, const gateway::ProviderProfile&, const std::string&) override
    {
        return {0, {}, gateway::FinishReason::error, "offline"};
    }
    gateway::TransportReply embed(const std::string&, const std::string&, const gateway::ProviderProfile&,
                                  const std::string&) override
    {
        return {0, {}, gateway::FinishReason::error, "offline"};
    }
};

gateway::ProviderProfile fixture_profile(std::string id)
{
    gateway::ProviderProfile p;
    p.provider_id = std::move(id);
    p.mode = gateway::Mode::replay;
    p.default_model = "candidate";
    return p;
}

gateway::TranscriptStore objective_store(const fs::path& dir, const TemplateSet& templates)
{
    auto dataset = objective::load_dataset(dir / "dataset24.jsonl");
    auto pool = objective::load_dataset(dir / "exemplar_pool.jsonl");
    const auto profile = fixture_profile("objective");
    objective::FewShotConfig few_shot{.seed = 7};
    std::set<std::string> scored;
    for (const auto& i : dataset) scored.insert(i.id);
    gateway::TranscriptStore store;
    for (const auto& line : jsonl::read(dir / "responses24.jsonl")) {
        auto id = line.value.at("id").get<std::string>();
        auto it = std::find_if(dataset.begin(), dataset.end(), [&](const objective::McqItem& m) { return m.id == id; });
        if (it == dataset.end()) throw juris::Error(juris::ErrorCode::ParseError, "responses24.jsonl: unknown id " + id);
        auto req = objective::build_prompt(*it, few_shot, pool, scored, templates, profile, "candidate");
        store.append({req.request_tag, line.value.at("response").get<std::string>(), gateway::FinishReason::stop});
    }
    return store;
}

std::pair<gateway::TranscriptStore, gateway::TranscriptStore> subjective_stores(const fs::path& dir,
                                                                                const TemplateSet& templates)
{
    auto dataset = subjective::load_dataset(dir / "dataset.jsonl");
    const auto model = fixture_profile("subjective-model");
    const auto judge = fixture_profile("subjective-judge");
    auto rubric = subjective::JudgeRubric::from_templates(templates);
    auto find = [&](const std::string& id) -> const subjective::SubjectiveItem& {
        auto it = std::find_if(dataset.begin(), dataset.end(), [&](const subjective::SubjectiveItem& i) { return i.id == id; });
        if (it == dataset.end()) throw juris::Error(juris::ErrorCode::ParseError, "subjective fixture: unknown id " + id);
        return *it;
    };
    std::map<std::string, std::string> candidates;
    gateway::TranscriptStore model_store;
    for (const auto& line : jsonl::read(dir / "candidates.jsonl")) {
        auto id = line.value.at("id").get<std::string>();
        candidates[id] = line.value.at("response").get<std::string>();
        model_store.append({subjective::build_candidate_prompt(find(id), model, "").request_tag, candidates[id]});
    }
    gateway::TranscriptStore judge_store;
    for (const auto& line : jsonl::read(dir / "judgments.jsonl")) {
        auto id = line.value.at("id").get<std::string>();
        auto req = subjective::build_judge_prompt(find(id), candidates.at(id), rubric, templates,
                                                  line.value.at("round").get<int>(), judge, "");
        auto reply = line.value.at("response").get<std::string>();
        judge_store.append({req.request_tag, reply});
        if (line.value.contains("reask")) {
            judge_store.append({subjective::build_reask(req, reply, templates).request_tag, line.value.at("reask").get<std::string>()});
        }
    }
    return {std::move(model_store), std::move(judge_store)};
}

gateway::TranscriptStore forge_store(const fs::path& dir, const TemplateSet& templates, gateway::Gateway& gw)
{
    const auto profile = fixture_profile("forge");
    forge::ForgeContext ctx{gw, profile, templates, "", {}};
    auto records = forge::load_records(dir / "records.jsonl");
    auto plan = forge::load_plan(dir / "plan.json");
    std::map<std::string, const forge::RawRecord*> by_id;
    for (const auto& r : records) by_id[r.source_id] = &r;
    gateway::TranscriptStore store;
    for (const auto& line : jsonl::read(dir / "responses.jsonl")) {
        const auto& v = line.value;
        auto req = forge::pipeline_request(*by_id.at(v.at("source_id").get<std::string>()), plan, ctx,
                                           v.at("stage").get<std::string>(), v.at("attempt").get<int>());
        if (!req) throw juris::Error(juris::ErrorCode::ParseError, "responses.jsonl:" + std::to_string(line.number) + ": no request");
        store.append({req->request_tag, v.at("response").get<std::string>()});
    }
    return store;
}

gateway::TranscriptStore consult_store(const fs::path& fixtures, const TemplateSet& templates, gateway::Gateway& gw)
{
    kb::KnowledgeBase kb;
    for (auto& [body, meta] : kb::KnowledgeBase::read_ingest_file(fixtures / "kb" / "toy_corpus.jsonl")) kb.upsert(body, meta);
    rag::RagEngine engine(kb, templates, gw);
    const auto profile = fixture_profile("consult");
    gateway::TranscriptStore store;
    for (const auto& line : jsonl::read(fixtures / "consult" / "answers.jsonl")) {
        kb::RetrievalConfig cfg;
        cfg.k = line.value.at("k").get<int>();
        auto prompt = engine.prepare(line.value.at("query").get<std::string>(), cfg, "rag.consult", profile);
        store.append({prompt.request.request_tag, line.value.at("answer").get<std::string>()});
    }
    return store;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Builds replay transcripts for the committed fixtures", "fixture_transcripts"};
    std::string fixtures;
    std::string manifest;
    bool check = false;
    app.add_option("--fixtures", fixtures, "Fixture root")->required()->check(CLI::ExistingDirectory);
    app.add_option("--templates", manifest, "Template manifest")->required()->check(CLI::ExistingFile);
    app.add_flag("--check", check, "Compare with the committed transcripts instead of writing");
    CLI11_PARSE(app, argc, argv);

    try {
        const fs::path root(fixtures);
        auto templates = TemplateSet::load(manifest);
        gateway::Gateway gw(std::make_shared<OfflineTransport>());
        auto [model, judge] = subjective_stores(root / "subjective", templates);
        const std::map<std::string, gateway::TranscriptStore> stores{
            {"objective", objective_store(root / "objective", templates)},
            {"subjective-model", std::move(model)},
            {"subjective-judge", std::move(judge)},
            {"forge", forge_store(root / "forge", templates, gw)},
            {"consult", consult_store(root, templates, gw)},
        };
        int stale = 0;
        for (const auto& [name, store] : stores) {
            const auto path = root / "transcripts" / (name + ".jsonl");
            const auto contents = store.serialize();
            if (check) {
                if (!fs::exists(path) || jsonl::read_file(path) != contents) {
                    std::cerr << "stale: " << path.string() << "\n";
                    ++stale;
                }
            } else {
                fs::create_directories(path.parent_path());
                jsonl::write_file(path, contents);
                std::cout << path.string() << ": " << store.size() << " entries\n";
            }
        }
        if (check && stale == 0) std::cout << "transcripts up to date\n";
        return stale == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
