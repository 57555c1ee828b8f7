#include <cstdio>
#include <mutex>
#include <ostream>

#include <httplib.h>

#include "juris/cli.hpp"
#include "juris/error.hpp"
#include "juris/eval_objective.hpp"
#include "juris/eval_subjective.hpp"
#include "juris/instruction_forge.hpp"
#include "juris/jsonl.hpp"
#include "juris/knowledge_base.hpp"
#include "juris/parallel.hpp"
#include "juris/rag_engine.hpp"
#include "juris/run_registry.hpp"
#include "juris/service_api.hpp"
#include "juris/templates.hpp"

namespace juris::cli {

namespace {

void write_json(const std::string& path, const nlohmann::ordered_json& j)
{
    if (!path.empty()) jsonl::write_file(path, j.dump(2) + "\n");
}

std::unique_ptr<kb::KnowledgeBase> open_kb(const std::string& dir)
{
    if (dir.empty() || !std::filesystem::exists(dir)) {
        throw Error(ErrorCode::InvalidConfig, "knowledge base directory '" + dir + "' does not exist");
    }
    return kb::KnowledgeBase::open(dir);
}

std::string hit_label(const kb::RetrievalHit& h, const kb::KnowledgeBase& kb)
{
    auto chunk = kb.resolve(h.chunk_id);
    if (!chunk) return h.chunk_id;
    std::string label = chunk->title;
    if (chunk->chunk.article_no) label += " 第" + std::to_string(*chunk->chunk.article_no) + "条";
    return label;
}

std::vector<forge::InstructionPair> pairs_of(const std::vector<forge::DatasetItem>& items)
{
    std::vector<forge::InstructionPair> out;
    for (const auto& item : items) out.push_back(forge::pair_of(item));
    return out;
}

gateway::ChatRequest request_from_json(const nlohmann::json& j, const gateway::ProviderProfile& profile)
{
    std::vector<gateway::ChatMessage> messages;
    for (const auto& m : j.at("messages")) {
        messages.push_back({gateway::role_from_string(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
    }
    return gateway::make_request(profile.provider_id, j.value("model", profile.default_model), std::move(messages),
                                 j.value("temperature", 0.0), j.value("max_tokens", 1024));
}

std::vector<gateway::ChatRequest> load_requests(const std::string& path, const gateway::ProviderProfile& profile)
{
    std::vector<gateway::ChatRequest> out;
    for (const auto& line : jsonl::read(path)) {
        try {
            out.push_back(request_from_json(line.value, profile));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::ParseError, path + ":" + std::to_string(line.number) + ": " + e.what());
        }
    }
    return out;
}

struct OperationsState {
    OperationsState(const WorkbenchConfig& c, gateway::Gateway& g) : config(c), gateway(g) {}

    const WorkbenchConfig& config;
    gateway::Gateway& gateway;
    std::once_flag templates_once;
    std::unique_ptr<TemplateSet> templates;

    const TemplateSet& get_templates()
    {
        std::call_once(templates_once, [&] { templates = std::make_unique<TemplateSet>(TemplateSet::load(config.templates)); });
        return *templates;
    }

    objective::AccuracyReport run_objective(const EvalObjArgs& a)
    {
        if (a.pool.empty()) throw Error(ErrorCode::InvalidConfig, "no exemplar pool (--pool or eval.pool)");
        const auto& profile = config.provider(a.provider);
        auto dataset = objective::load_dataset(a.dataset);
        auto pool = objective::load_dataset(a.pool);
        objective::EvaluateOptions options{
            .few_shot = {.n_single = a.shots_single, .n_multi = a.shots_multi, .seed = a.seed},
            .model = a.model,
            .concurrency = a.concurrency,
        };
        return objective::evaluate(gateway, profile, dataset, pool, get_templates(), options);
    }

    subjective::SubjectiveReport run_subjective(const EvalSubjArgs& a)
    {
        const auto& model = config.provider(a.provider);
        const auto& judge = config.provider(a.judge_provider);
        auto dataset = subjective::load_dataset(a.dataset);
        subjective::EvaluateOptions options{
            .repeats = a.repeats, .model = a.model, .judge_model = a.judge_model, .concurrency = a.concurrency};
        return subjective::evaluate(gateway, model, judge, dataset, get_templates(), options);
    }
};

std::shared_ptr<gateway::Gateway> make_gateway(std::shared_ptr<gateway::Transport> transport)
{
    if (!transport) transport = std::make_shared<gateway::HttpTransport>();
    return std::make_shared<gateway::Gateway>(std::move(transport));
}

}  // namespace

ModuleOperations::ModuleOperations(WorkbenchConfig config, std::shared_ptr<gateway::Transport> transport)
    : config_(std::move(config)), gateway_(make_gateway(std::move(transport)))
{}

// ----------------------------------------------------------------------- kb

void ModuleOperations::kb_ingest(const KbIngestArgs& a, std::ostream& out)
{
    auto kb = std::filesystem::exists(std::filesystem::path(a.kb_dir) / "documents.jsonl") ? kb::KnowledgeBase::open(a.kb_dir)
                                                                                           : std::make_unique<kb::KnowledgeBase>();
    nlohmann::ordered_json docs = nlohmann::ordered_json::array();
    for (const auto& [body, meta] : kb::KnowledgeBase::read_ingest_file(a.input)) {
        auto doc = kb->upsert(body, meta);
        out << doc.doc_id << "\tv" << doc.version << "\t" << doc.title << "\n";
        docs.push_back({{"doc_id", doc.doc_id}, {"title", doc.title}, {"version", doc.version}});
    }
    kb->save(a.kb_dir);
    out << "indexed chunks: " << kb->index_size() << "\n";
    write_json(a.out, {{"documents", docs}, {"index_size", kb->index_size()}});
}

void ModuleOperations::kb_rebuild(const KbRebuildArgs& a, std::ostream& out)
{
    auto kb = open_kb(a.kb_dir);
    kb->rebuild_index();
    kb->save(a.kb_dir);
    out << "documents: " << kb->documents().size() << "\nindexed chunks: " << kb->index_size() << "\n";
    write_json(a.out, {{"documents", kb->documents().size()}, {"index_size", kb->index_size()}});
}

void ModuleOperations::kb_search(const KbSearchArgs& a, std::ostream& out)
{
    auto kb = open_kb(a.kb_dir);
    kb::RetrievalConfig cfg;
    cfg.k = a.k;
    if (a.backend == "vector") {
        cfg.backend = kb::Backend::vector;
        kb->set_embedder(std::make_shared<kb::GatewayEmbedder>(*gateway_, config_.provider(a.provider)));
    }
    auto hits = kb->search(a.query, cfg);
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& h : hits) {
        char score[32];
        std::snprintf(score, sizeof score, "%.4f", h.score);
        out << h.rank << "\t" << score << "\t" << h.chunk_id << "\t" << hit_label(h, *kb) << "\n";
        nlohmann::ordered_json row{{"rank", h.rank}, {"score", h.score}, {"chunk_id", h.chunk_id}, {"doc_id", h.doc_id}};
        if (auto chunk = kb->resolve(h.chunk_id)) {
            row["title"] = chunk->title;
            if (chunk->chunk.article_no) row["article_no"] = *chunk->chunk.article_no;
            row["text"] = chunk->chunk.text;
        }
        rows.push_back(std::move(row));
    }
    write_json(a.out, {{"query", a.query}, {"k", a.k}, {"hits", rows}});
}

// -------------------------------------------------------------------- forge

void ModuleOperations::forge_clean(const ForgeCleanArgs& a, std::ostream& out)
{
    auto records = forge::load_records(a.records);
    std::map<std::string, std::vector<forge::RawRecord>> groups;
    std::vector<forge::Drop> dropped;
    auto schemas = forge::load_schemas(a.schemas);
    std::set<std::string> names;
    for (const auto& s : schemas) names.insert(s.name);
    for (const auto& r : records) {
        if (names.count(r.schema)) groups[r.schema].push_back(r);
        else dropped.push_back({r.source_id, forge::DropReason::unrouted});
    }
    std::vector<forge::DatasetItem> items;
    for (const auto& s : schemas) {
        auto result = forge::clean_and_pair(groups[s.name], s);
        for (auto& p : result.pairs) items.emplace_back(std::move(p));
        dropped.insert(dropped.end(), result.dropped.begin(), result.dropped.end());
    }
    const auto kept = items.size();
    forge::export_dataset(std::move(items), a.out);
    out << "kept " << kept << ", dropped " << dropped.size() << "\n";
    if (!a.drops_out.empty()) {
        std::sort(dropped.begin(), dropped.end(), [](const forge::Drop& x, const forge::Drop& y) { return x.source_id < y.source_id; });
        std::vector<nlohmann::ordered_json> rows;
        for (const auto& d : dropped) rows.push_back({{"source_id", d.source_id}, {"reason", forge::to_string(d.reason)}});
        jsonl::write(a.drops_out, rows);
    }
}

void ModuleOperations::forge_shape(const ForgeShapeArgs& a, std::ostream& out)
{
    OperationsState st(config_, *gateway_);
    const auto& profile = config_.provider(a.provider);
    forge::ForgeContext ctx{*gateway_, profile, st.get_templates(), a.model, {}};
    auto pairs = pairs_of(forge::load_dataset(a.input));
    std::vector<std::optional<forge::InstructionPair>> shaped(pairs.size());
    parallel_for(pairs.size(), a.concurrency, [&](std::size_t i) {
        try {
            shaped[i] = forge::behavior_shape(pairs[i], ctx);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::ShapingRejected) throw;
        }
    });
    std::vector<forge::DatasetItem> items;
    for (auto& p : shaped) {
        if (p) items.emplace_back(std::move(*p));
    }
    const auto kept = items.size();
    forge::export_dataset(std::move(items), a.out);
    out << "shaped " << kept << ", rejected " << pairs.size() - kept << "\n";
}

void ModuleOperations::forge_expand(const ForgeExpandArgs& a, std::ostream& out)
{
    OperationsState st(config_, *gateway_);
    const auto& profile = config_.provider(a.provider);
    forge::ForgeContext ctx{*gateway_, profile, st.get_templates(), a.model, {}};
    std::vector<objective::McqItem> mcqs;
    std::size_t dropped = 0;
    for (const auto& r : forge::load_records(a.records)) {
        auto m = forge::mcq_from_record(r);
        if (auto* item = std::get_if<objective::McqItem>(&m)) mcqs.push_back(std::move(*item));
        else ++dropped;
    }
    std::vector<std::optional<forge::InstructionPair>> expanded(mcqs.size());
    parallel_for(mcqs.size(), a.concurrency, [&](std::size_t i) {
        try {
            expanded[i] = forge::knowledge_expand(mcqs[i], ctx);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::ExpansionInconsistent) throw;
        }
    });
    std::vector<forge::DatasetItem> items;
    for (auto& p : expanded) {
        if (p) items.emplace_back(std::move(*p));
    }
    const auto kept = items.size();
    forge::export_dataset(std::move(items), a.out);
    out << "expanded " << kept << ", dropped " << dropped << ", rejected " << mcqs.size() - kept << "\n";
}

void ModuleOperations::forge_lcot(const ForgeLcotArgs& a, std::ostream& out)
{
    OperationsState st(config_, *gateway_);
    std::vector<forge::DatasetItem> items;
    std::size_t rejected = 0;
    for (const auto& p : pairs_of(forge::load_dataset(a.input))) {
        try {
            items.emplace_back(forge::develop_thinking(p, st.get_templates(), a.variant));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::AlreadyWrapped && e.code() != ErrorCode::EmptyInput) throw;
            ++rejected;
        }
    }
    const auto n = items.size();
    forge::export_dataset(std::move(items), a.out);
    out << "wrapped " << n << ", rejected " << rejected << "\n";
}

void ModuleOperations::forge_triplet(const ForgeTripletArgs& a, std::ostream& out)
{
    auto pairs = pairs_of(forge::load_dataset(a.input));
    auto records = forge::load_records(a.records);
    auto patterns = a.patterns.empty() ? forge::PatternSet::defaults() : forge::PatternSet::load(a.patterns);
    std::unique_ptr<kb::KnowledgeBase> kb;
    if (!a.kb_dir.empty()) kb = open_kb(a.kb_dir);
    auto items = forge::build_triplets(pairs, records, patterns, kb.get());
    std::size_t triplets = 0;
    for (const auto& item : items) triplets += std::holds_alternative<forge::InstructionTriplet>(item) ? 1 : 0;
    forge::export_dataset(std::move(items), a.out);
    out << "triplets " << triplets << ", pairs " << pairs.size() - triplets << "\n";
}

void ModuleOperations::forge_export(const ForgeExportArgs& a, std::ostream& out)
{
    OperationsState st(config_, *gateway_);
    const auto& profile = config_.provider(a.provider);
    forge::ForgeContext ctx{*gateway_, profile, st.get_templates(), a.model, {}};
    auto plan = forge::load_plan(a.plan);
    plan.concurrency = a.concurrency;
    std::unique_ptr<kb::KnowledgeBase> kb;
    if (!a.kb_dir.empty()) kb = open_kb(a.kb_dir);
    auto result = forge::run_pipeline(forge::load_records(a.records), plan, ctx, kb.get());
    out << "stage     kept  dropped  rejected\n";
    for (const auto& s : result.stages) {
        char line[96];
        std::snprintf(line, sizeof line, "%-8s %5zu  %7zu  %8zu\n", s.stage.c_str(), s.kept, s.dropped, s.rejected);
        out << line;
    }
    write_json(a.stages_out, forge::stages_to_json(result));
    forge::export_dataset(std::move(result.items), a.out);
}

void ModuleOperations::forge_stats(const ForgeStatsArgs& a, std::ostream& out)
{
    auto stats = forge::dataset_stats(forge::load_dataset(a.input));
    out << forge::render_stats(stats);
    write_json(a.out, forge::stats_to_json(stats));
}

// --------------------------------------------------------------------- eval

void ModuleOperations::eval_obj(const EvalObjArgs& a, std::ostream& out)
{
    OperationsState st(config_, *gateway_);
    auto report = st.run_objective(a);
    out << objective::render_report(report);
    write_json(a.out, objective::report_to_json(report));
}

void ModuleOperations::eval_subj(const EvalSubjArgs& a, std::ostream& out)
{
    OperationsState st(config_, *gateway_);
    auto report = st.run_subjective(a);
    out << subjective::render_report(report);
    write_json(a.out, subjective::report_to_json(report));
}

// ------------------------------------------------------------------ gateway

void ModuleOperations::gateway_record(const GatewayRecordArgs& a, std::ostream& out)
{
    auto profile = config_.provider(a.provider);
    profile.mode = gateway::Mode::record;
    if (!a.transcript.empty()) profile.transcript_path = a.transcript;
    if (profile.transcript_path.empty()) throw Error(ErrorCode::InvalidConfig, "no transcript file (--transcript)");
    auto requests = load_requests(a.requests, profile);
    std::vector<std::string> finish(requests.size());
    parallel_for(requests.size(), a.concurrency, [&](std::size_t i) {
        finish[i] = gateway::to_string(gateway_->complete(requests[i], profile).finish_reason);
    });
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < requests.size(); ++i) {
        out << requests[i].request_tag << "\t" << finish[i] << "\n";
        rows.push_back({{"tag", requests[i].request_tag}, {"finish_reason", finish[i]}});
    }
    write_json(a.out, {{"transcript", profile.transcript_path.string()}, {"recorded", rows}});
}

void ModuleOperations::gateway_replay_verify(const GatewayReplayVerifyArgs& a, std::ostream& out)
{
    auto profile = config_.provider(a.provider);
    profile.mode = gateway::Mode::replay;
    if (!a.transcript.empty()) profile.transcript_path = a.transcript;
    auto requests = load_requests(a.requests, profile);
    auto store = gateway_->transcripts(profile);
    nlohmann::ordered_json misses = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < requests.size(); ++i) {
        if (!store->find(requests[i].request_tag)) {
            out << "miss\t" << (i + 1) << "\t" << requests[i].request_tag << "\n";
            misses.push_back({{"line", i + 1}, {"tag", requests[i].request_tag}});
        }
    }
    out << "hits " << requests.size() - misses.size() << " of " << requests.size() << "\n";
    write_json(a.out, {{"total", requests.size()}, {"hits", requests.size() - misses.size()}, {"misses", misses}});
    if (!misses.empty()) {
        throw Error(ErrorCode::ReplayMiss, std::to_string(misses.size()) + " request(s) have no recorded response");
    }
}

// -------------------------------------------------------------------- serve

void ModuleOperations::serve(const ServeArgs& a, std::ostream& out)
{
    std::shared_ptr<OperationsState> st(new OperationsState(config_, *gateway_));
    auto kb = std::filesystem::exists(std::filesystem::path(a.kb_dir) / "documents.jsonl") ? kb::KnowledgeBase::open(a.kb_dir)
                                                                                          : std::make_unique<kb::KnowledgeBase>();
    rag::RagEngine engine(*kb, st->get_templates(), *gateway_);
    RunRegistry runs(a.runs_dir);
    const int pool = config_.concurrency;
    const auto defaults = config_.eval;
    service::EvalRunner runner = [st, pool, defaults](RunKind kind, const nlohmann::json& p) -> nlohmann::ordered_json {
        if (!p.contains("dataset")) throw Error(ErrorCode::InvalidRequest, "dataset is required");
        if (kind == RunKind::objective) {
            EvalObjArgs args;
            args.dataset = p.at("dataset").get<std::string>();
            args.pool = p.value("pool", defaults.pool.string());
            args.provider = p.value("provider", "");
            args.model = p.value("model", "");
            args.shots_single = p.value("shots_single", defaults.shots_single);
            args.shots_multi = p.value("shots_multi", defaults.shots_multi);
            args.seed = p.value("seed", defaults.seed);
            args.concurrency = pool;
            return objective::report_to_json(st->run_objective(args));
        }
        EvalSubjArgs args;
        args.dataset = p.at("dataset").get<std::string>();
        args.provider = p.value("provider", "");
        args.judge_provider = p.value("judge_provider", defaults.judge_provider);
        args.model = p.value("model", "");
        args.judge_model = p.value("judge_model", "");
        args.repeats = p.value("repeats", defaults.repeats);
        args.concurrency = pool;
        return subjective::report_to_json(st->run_subjective(args));
    };
    service::ServiceOptions options;
    options.workers = a.workers;
    options.default_k = config_.eval.k;
    options.after_upsert = [&kb, dir = a.kb_dir] { kb->save(dir); };
    service::Service svc(*kb, engine, config_.provider(a.provider), runs, runner, options);
    httplib::Server server;
    svc.bind(server);
    out << "listening on " << a.host << ":" << a.port << std::endl;
    if (!server.listen(a.host, a.port)) {
        throw Error(ErrorCode::IoError, "cannot listen on " + a.host + ":" + std::to_string(a.port));
    }
}

}  // namespace juris::cli
