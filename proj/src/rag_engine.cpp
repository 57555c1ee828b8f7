#include "juris/rag_engine.hpp"

#include <cstdio>

#include "juris/error.hpp"
#include "juris/hashing.hpp"
#include "juris/knowledge_base.hpp"
#include "juris/text.hpp"

namespace juris::rag {

namespace {

constexpr std::string_view kSep = " \xC2\xB7 ";  // " · "

std::string render_block(const std::vector<std::string>& refs)
{
    std::string out;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        if (i) out += "\n\n";
        out += refs[i];
    }
    return out;
}

nlohmann::ordered_json hits_json(const std::vector<kb::RetrievalHit>& hits)
{
    auto arr = nlohmann::ordered_json::array();
    for (const auto& h : hits) arr.push_back({{"chunk_id", h.chunk_id}, {"rank", h.rank}, {"score", h.score}});
    return arr;
}

}  // namespace

std::string format_reference(int number, const kb::ResolvedChunk& chunk)
{
    std::string out = "[" + std::to_string(number) + "] " + chunk.category;
    out += kSep;
    out += chunk.title;
    if (chunk.chunk.article_no) {
        out += kSep;
        out += "第" + std::to_string(*chunk.chunk.article_no) + "条";
    }
    out += "\n";
    out += chunk.chunk.text;
    return out;
}

AssembledPrompt assemble_rag_prompt(std::string_view query, const std::vector<kb::RetrievalHit>& hits,
                                    const PromptTemplate& tmpl, const PromptTemplate& noref_tmpl,
                                    const kb::KnowledgeBase& kb, const gateway::ProviderProfile& profile,
                                    const AssembleOptions& options)
{
    if (text::is_blank(query)) throw Error(ErrorCode::EmptyQuery, "query is empty");
    if (!tmpl.has_placeholder("input") || !tmpl.has_placeholder("references")) {
        throw Error(ErrorCode::TemplateInvalid, tmpl.name() + ": needs {input} and {references}");
    }
    if (!noref_tmpl.has_placeholder("input") || noref_tmpl.has_placeholder("references")) {
        throw Error(ErrorCode::TemplateInvalid, noref_tmpl.name() + ": needs {input} and no {references}");
    }

    std::vector<std::string> refs;
    for (std::size_t i = 0; i < hits.size(); ++i) {
        auto resolved = kb.resolve(hits[i].chunk_id);
        if (!resolved) throw Error(ErrorCode::UnresolvedChunk, "chunk " + hits[i].chunk_id + " is not in the store");
        refs.push_back(format_reference(static_cast<int>(i + 1), *resolved));
    }
    std::string block = render_block(refs);
    while (!refs.empty() && text::codepoint_count(block) > options.reference_budget) {
        refs.pop_back();
        block = render_block(refs);
    }

    AssembledPrompt out;
    out.included.assign(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(refs.size()));
    const PromptTemplate& used = refs.empty() ? noref_tmpl : tmpl;
    std::string content = refs.empty() ? used.render({{"input", std::string(query)}})
                                       : used.render({{"input", std::string(query)}, {"references", block}});
    out.template_name = used.name();
    out.template_version = used.version();
    out.request = gateway::make_request(profile.provider_id, profile.default_model,
                                        {{gateway::Role::user, std::move(content)}}, options.temperature,
                                        options.max_tokens);
    return out;
}

TraceLog::TraceLog(std::filesystem::path path) : path_(std::move(path))
{
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
}

void TraceLog::append(const nlohmann::ordered_json& record)
{
    std::lock_guard lock(mutex_);
    records_.push_back(record);
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    out << record.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "cannot append trace to " + path_.string());
}

std::vector<nlohmann::ordered_json> TraceLog::records() const
{
    std::lock_guard lock(mutex_);
    return records_;
}

RagEngine::RagEngine(const kb::KnowledgeBase& kb, const TemplateSet& templates, gateway::Gateway& gateway,
                     std::shared_ptr<TraceLog> trace, AssembleOptions options)
    : kb_(kb), templates_(templates), gateway_(gateway), trace_(std::move(trace)), options_(options)
{}

std::string RagEngine::trace_id(std::string_view query, const kb::RetrievalConfig& config,
                                std::string_view template_name, const gateway::ProviderProfile& profile)
{
    char params[64];
    std::snprintf(params, sizeof params, "%d|%s|%.4f|%.4f", config.k,
                  config.backend == kb::Backend::lexical ? "lexical" : "vector", config.k1, config.b);
    nlohmann::json key = {query, params, template_name, profile.provider_id, profile.default_model};
    return "tr-" + sha256_hex(key.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace)).substr(0, 16);
}

AssembledPrompt RagEngine::prepare(std::string_view query, const kb::RetrievalConfig& config,
                                   std::string_view template_name, const gateway::ProviderProfile& profile) const
{
    const auto& tmpl = templates_.get(template_name);
    const auto& noref = templates_.get(std::string(template_name) + ".noref");
    auto hits = kb_.search(query, config);
    return assemble_rag_prompt(query, hits, tmpl, noref, kb_, profile, options_);
}

ConsultAnswer RagEngine::consult(std::string_view query, const kb::RetrievalConfig& config,
                                 std::string_view template_name, const gateway::ProviderProfile& profile) const
{
    ConsultAnswer answer;
    answer.trace_id = trace_id(query, config, template_name, profile);

    nlohmann::ordered_json record;
    record["trace_id"] = answer.trace_id;
    record["query"] = query;
    record["k"] = config.k;
    record["backend"] = config.backend == kb::Backend::lexical ? "lexical" : "vector";
    record["provider"] = profile.provider_id;
    record["model"] = profile.default_model;
    try {
        auto prompt = prepare(query, config, template_name, profile);
        record["template"] = prompt.template_name;
        record["template_version"] = prompt.template_version;
        record["request_tag"] = prompt.request.request_tag;
        record["citations"] = hits_json(prompt.included);

        auto response = gateway_.complete(prompt.request, profile);
        answer.text = std::move(response.text);
        answer.finish_reason = response.finish_reason;
        answer.citations = std::move(prompt.included);
        answer.template_name = std::move(prompt.template_name);
        answer.template_version = prompt.template_version;
        record["status"] = "ok";
        record["finish_reason"] = gateway::to_string(answer.finish_reason);
        record["answer"] = answer.text;
    } catch (const Error& e) {
        record["status"] = "error";
        record["error"] = {{"code", to_string(e.code())}, {"message", e.what()}};
        if (trace_) trace_->append(record);
        throw;
    }
    if (trace_) trace_->append(record);
    return answer;
}

}  // namespace juris::rag
