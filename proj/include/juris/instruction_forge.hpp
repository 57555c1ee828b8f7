#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "juris/eval_objective.hpp"
#include "juris/gateway.hpp"
#include "juris/knowledge_base.hpp"
#include "juris/syllogism.hpp"
#include "juris/templates.hpp"

namespace juris::forge {

enum class SourceKind { public_task_dataset, legal_raw_text, open_instruction };

enum class TaskTag {
    element_extraction,
    event_detection,
    case_classification,
    judgement_prediction,
    case_matching,
    doc_summarization,
    opinion_summarization,
    legal_qa,
    reading_comprehension,
    judicial_exam,
    general_instruction,
};

enum class ScenarioTag { professional_tools, consultation, examination_assistant, general };

enum class Strategy { cleaned, behavior_shaped, knowledge_expanded, lcot };

std::string_view to_string(SourceKind v) noexcept;
std::string_view to_string(TaskTag v) noexcept;
std::string_view to_string(ScenarioTag v) noexcept;
std::string_view to_string(Strategy v) noexcept;
std::optional<SourceKind> source_kind_from_string(std::string_view s);
std::optional<TaskTag> task_tag_from_string(std::string_view s);
std::optional<ScenarioTag> scenario_tag_from_string(std::string_view s);
std::optional<Strategy> strategy_from_string(std::string_view s);

/// Scenario a task belongs to.
ScenarioTag scenario_of(TaskTag task) noexcept;
/// Human-readable names used in the statistics table.
std::string_view display_name(TaskTag task) noexcept;
std::string_view display_name(ScenarioTag scenario) noexcept;

struct RawRecord {
    std::string source_id;
    SourceKind source_kind = SourceKind::public_task_dataset;
    /// Name of the task schema (or expansion route) that handles this record.
    std::string schema;
    std::map<std::string, std::string> payload;

    bool operator==(const RawRecord&) const = default;
};

/// {source_id, source_kind, schema, payload}. Throws Error(ParseError), Error(InvariantViolation).
RawRecord record_from_json(const nlohmann::json& j);
nlohmann::ordered_json record_to_json(const RawRecord& r);
std::vector<RawRecord> load_records(const std::filesystem::path& path);

struct InstructionPair {
    std::string input;
    std::string output;
    TaskTag task_tag = TaskTag::legal_qa;
    ScenarioTag scenario_tag = ScenarioTag::consultation;
    std::string source_id;
    Strategy strategy = Strategy::cleaned;

    bool operator==(const InstructionPair&) const = default;
};

struct InstructionTriplet {
    InstructionPair pair;
    std::vector<std::string> references;

    bool operator==(const InstructionTriplet&) const = default;
};

using DatasetItem = std::variant<InstructionPair, InstructionTriplet>;

const InstructionPair& pair_of(const DatasetItem& item);

/// Problems with an item; empty when it satisfies every invariant.
std::vector<std::string> check_invariants(const DatasetItem& item);

// ---------------------------------------------------------------- cleaning

struct TaskSchema {
    std::string name;
    TaskTag task_tag = TaskTag::legal_qa;
    /// Payload fields concatenated (newline-separated) into the input.
    std::vector<std::string> input_fields;
    std::string output_field;
};

/// A JSON array of {name, task_tag, input_fields, output_field}. Throws Error(ParseError).
std::vector<TaskSchema> load_schemas(const std::filesystem::path& path);

enum class DropReason { missing_input, missing_output, unrouted };
std::string_view to_string(DropReason r) noexcept;

struct Drop {
    std::string source_id;
    DropReason reason = DropReason::missing_input;
};

struct CleanResult {
    std::vector<InstructionPair> pairs;
    std::vector<Drop> dropped;
};

/// One pair per record that has every mapped field, in input order. Text is
/// whitespace-normalized and stripped of control characters. Throws
/// Error(SchemaMismatch) when a mapped field is absent from every record.
CleanResult clean_and_pair(const std::vector<RawRecord>& records, const TaskSchema& schema);

// ---------------------------------------------------- model-backed strategies

struct ForgeContext {
    gateway::Gateway& gateway;
    const gateway::ProviderProfile& profile;
    const TemplateSet& templates;
    std::string model;  // empty: profile default
    SyllogismLexicon lexicon;
};

/// Request for shaping attempt 1 ("forge.shape") or 2 ("forge.shape.strict").
gateway::ChatRequest shaping_request(const InstructionPair& pair, const ForgeContext& ctx, int attempt);

/// Output rewritten by the model into a labeled syllogism ("forge.shape",
/// then once "forge.shape.strict"). Throws Error(ShapingRejected); gateway errors propagate.
InstructionPair behavior_shape(const InstructionPair& pair, const ForgeContext& ctx);

/// True when every gold letter appears as a standalone letter and the reply
/// is more than the bare letters.
bool expansion_consistent(std::string_view response, const objective::LetterSet& gold);

/// Request for expansion attempt 1 ("forge.expand") or 2 ("forge.expand.strict").
gateway::ChatRequest expansion_request(const objective::McqItem& mcq, const ForgeContext& ctx, int attempt);

/// Explanation pair for a multiple-choice item ("forge.expand", then once
/// "forge.expand.strict"). Throws Error(ExpansionInconsistent), Error(InvariantViolation).
InstructionPair knowledge_expand(const objective::McqItem& mcq, const ForgeContext& ctx);

/// Multiple-choice item from a record payload {stem, options ("A. text" lines), answer, subject?}.
/// Returns the drop reason when the payload lacks a usable question or answer.
std::variant<objective::McqItem, DropReason> mcq_from_record(const RawRecord& record);

/// Input wrapped by the LCoT template; output unchanged. Propagates apply_lcot errors.
InstructionPair develop_thinking(const InstructionPair& pair, const TemplateSet& templates,
                                 std::string_view variant = "lcot.zh");

// ---------------------------------------------------------------- references

struct ReferencePattern {
    std::string name;
    /// ECMAScript regex over UTF-8 text; group 1 = law title, group 2 = article numeral.
    std::string regex;
};

struct PatternSet {
    std::vector<ReferencePattern> patterns;

    /// Bracketed statute title followed by an article marker: 《…》第…条.
    static PatternSet defaults();
    /// A JSON array of {name, regex}. Throws Error(InvalidConfig) on an empty set or a bad regex.
    static PatternSet load(const std::filesystem::path& path);
    static PatternSet from_json(const nlohmann::json& j);
};

struct Reference {
    std::string title;  // as written at first occurrence
    int article = 0;
    std::optional<std::string> text;  // article text when found in the knowledge base

    /// "《title》第N条" or "《title》第N条：text".
    [[nodiscard]] std::string render() const;
    bool operator==(const Reference&) const = default;
};

/// Deduplicated (title without a leading "中华人民共和国", article) in
/// first-occurrence order. Article text is filled in when `kb` resolves it.
std::vector<Reference> extract_references(std::string_view raw_text, const PatternSet& patterns,
                                          const kb::KnowledgeBase* kb = nullptr);

/// The record's payload values joined in field-name order; the text references are read from.
std::string raw_text_of(const RawRecord& record);

/// A triplet for each pair whose source record cites at least one article;
/// other pairs pass through. Throws Error(AlignmentError) on an unknown source_id.
std::vector<DatasetItem> build_triplets(const std::vector<InstructionPair>& pairs,
                                        const std::vector<RawRecord>& records, const PatternSet& patterns,
                                        const kb::KnowledgeBase* kb = nullptr);

// ------------------------------------------------------------ export, stats

nlohmann::ordered_json item_to_json(const DatasetItem& item);
/// Throws Error(ParseError), Error(InvariantViolation).
DatasetItem item_from_json(const nlohmann::json& j);

/// Items sorted (stably) by source_id, one JSON object per line with the keys
/// input, output, references (triplets only), task_tag, scenario_tag, strategy, source_id.
/// Throws Error(InvariantViolation), Error(IoError).
void export_dataset(std::vector<DatasetItem> items, const std::filesystem::path& path);
std::vector<DatasetItem> load_dataset(const std::filesystem::path& path);

struct StatsRow {
    std::string subset;  // "SFT-Pair", "SFT-Triplet" or "General"
    TaskTag task_tag = TaskTag::legal_qa;
    ScenarioTag scenario_tag = ScenarioTag::consultation;
    std::size_t size = 0;
};

struct DatasetStats {
    std::vector<StatsRow> rows;
    std::size_t total = 0;
};

DatasetStats dataset_stats(const std::vector<DatasetItem>& items);
/// Dataset | Task | Size | Scenario, then a Total row.
std::string render_stats(const DatasetStats& stats);
nlohmann::ordered_json stats_to_json(const DatasetStats& stats);

// ------------------------------------------------------------------ pipeline

struct PipelinePlan {
    std::vector<TaskSchema> schemas;
    /// Schema names whose pairs are behavior shaped / LCoT-wrapped / turned into triplets.
    std::set<std::string> shape;
    std::set<std::string> lcot;
    std::set<std::string> triplet;
    /// Records routed to this name are multiple-choice items for knowledge expansion.
    std::string expand_route = "judicial_exam_mcq";
    PatternSet patterns = PatternSet::defaults();
    int concurrency = 4;
};

/// {schemas, shape, lcot, triplet, expand_route?, patterns?} where patterns is
/// an inline pattern array. Throws Error(ParseError), Error(InvalidConfig).
PipelinePlan load_plan(const std::filesystem::path& path);

/// Per-record state after a stage; kept + dropped + rejected equals the record count.
struct StageCount {
    std::string stage;
    std::size_t kept = 0;
    std::size_t dropped = 0;
    std::size_t rejected = 0;
};

struct LogEntry {
    std::string source_id;
    std::string stage;
    std::string reason;
};

struct PipelineResult {
    std::vector<DatasetItem> items;  // sorted by source_id
    std::vector<StageCount> stages;
    std::vector<LogEntry> log;
};

/// Stages: clean, expand, shape, lcot, triplet. Shaping and expansion
/// rejections are logged, not thrown; gateway errors propagate.
PipelineResult run_pipeline(const std::vector<RawRecord>& records, const PipelinePlan& plan, const ForgeContext& ctx,
                            const kb::KnowledgeBase* kb = nullptr);

/// The request the pipeline sends for `record` at a model-backed stage
/// ("shape" or "expand") and attempt (1 or 2); nullopt when the record does
/// not reach that stage. Used to record and replay pipeline transcripts.
std::optional<gateway::ChatRequest> pipeline_request(const RawRecord& record, const PipelinePlan& plan,
                                                     const ForgeContext& ctx, std::string_view stage, int attempt);

nlohmann::ordered_json stages_to_json(const PipelineResult& result);

}  // namespace juris::forge
