#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "juris/gateway.hpp"
#include "juris/kb_types.hpp"
#include "juris/templates.hpp"

namespace juris::kb {
class KnowledgeBase;
}

namespace juris::rag {

struct ConsultAnswer {
    std::string text;
    /// Hits whose reference block went into the prompt, in rank order.
    std::vector<kb::RetrievalHit> citations;
    std::string template_name;
    int template_version = 1;
    std::string trace_id;
    gateway::FinishReason finish_reason = gateway::FinishReason::stop;
};

struct AssembleOptions {
    /// Code points allowed for the rendered reference block.
    std::size_t reference_budget = 3000;
    double temperature = 0.0;
    int max_tokens = 1024;
};

struct AssembledPrompt {
    gateway::ChatRequest request;
    std::vector<kb::RetrievalHit> included;
    /// Template actually rendered (the ".noref" variant when nothing was included).
    std::string template_name;
    int template_version = 1;
};

/// "[n] category · title · 第N条" followed by the chunk text on the next line.
std::string format_reference(int number, const kb::ResolvedChunk& chunk);

/// Renders `tmpl` ({input}, {references}) or its "<name>.noref" sibling when no
/// hit fits the budget. Hits are numbered [1]..[n] in the given order; the
/// lowest-ranked are dropped until the block fits. Throws Error(UnresolvedChunk),
/// Error(TemplateInvalid), Error(EmptyQuery).
AssembledPrompt assemble_rag_prompt(std::string_view query, const std::vector<kb::RetrievalHit>& hits,
                                    const PromptTemplate& tmpl, const PromptTemplate& noref_tmpl,
                                    const kb::KnowledgeBase& kb, const gateway::ProviderProfile& profile,
                                    const AssembleOptions& options = {});

/// Append-only JSON-lines trace sink; in-memory when constructed without a path.
class TraceLog {
  public:
    TraceLog() = default;
    explicit TraceLog(std::filesystem::path path);

    void append(const nlohmann::ordered_json& record);
    [[nodiscard]] std::vector<nlohmann::ordered_json> records() const;

  private:
    std::filesystem::path path_;
    mutable std::mutex mutex_;
    std::vector<nlohmann::ordered_json> records_;
};

/// Retrieval-augmented consultation. Safe for concurrent consults.
class RagEngine {
  public:
    RagEngine(const kb::KnowledgeBase& kb, const TemplateSet& templates, gateway::Gateway& gateway,
              std::shared_ptr<TraceLog> trace = nullptr, AssembleOptions options = {});

    /// search, then assemble_rag_prompt.
    [[nodiscard]] AssembledPrompt prepare(std::string_view query, const kb::RetrievalConfig& config,
                                          std::string_view template_name, const gateway::ProviderProfile& profile) const;

    /// prepare, then complete. A trace record is appended whether or not it succeeds.
    ConsultAnswer consult(std::string_view query, const kb::RetrievalConfig& config, std::string_view template_name,
                          const gateway::ProviderProfile& profile) const;

    static std::string trace_id(std::string_view query, const kb::RetrievalConfig& config,
                                std::string_view template_name, const gateway::ProviderProfile& profile);

  private:
    const kb::KnowledgeBase& kb_;
    const TemplateSet& templates_;
    gateway::Gateway& gateway_;
    std::shared_ptr<TraceLog> trace_;
    AssembleOptions options_;
};

}  // namespace juris::rag
