#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "juris/gateway.hpp"
#include "juris/templates.hpp"

namespace juris::objective {

// Report column order.
enum class Subject { NJE, PAE, CPA, UNGEE, PFE, LBK };
enum class Level { Hard, Normal, Easy };
enum class AnswerType { single, multi };

inline constexpr std::array<Subject, 6> kSubjects = {Subject::NJE, Subject::PAE,  Subject::CPA,
                                                     Subject::UNGEE, Subject::PFE, Subject::LBK};

std::string_view to_string(Subject s) noexcept;
std::string_view to_string(Level l) noexcept;
std::string_view to_string(AnswerType t) noexcept;
std::optional<Subject> subject_from_string(std::string_view s);
std::optional<Level> level_from_string(std::string_view s);
std::optional<AnswerType> answer_type_from_string(std::string_view s);
Level level_of(Subject s) noexcept;

using LetterSet = std::set<char>;
std::string letters_string(const LetterSet& letters);

struct McqItem {
    std::string id;
    Subject subject = Subject::NJE;
    Level level = Level::Hard;
    AnswerType answer_type = AnswerType::single;
    std::string stem;
    /// Letter → option text, in letter order.
    std::vector<std::pair<char, std::string>> options;
    LetterSet gold;

    [[nodiscard]] std::string option_letters() const;
    bool operator==(const McqItem&) const = default;
};

/// Problems with one item; empty when it satisfies every invariant.
std::vector<std::string> check_invariants(const McqItem& item);

/// Parses one dataset record {id, subject, level, answer_type, stem, options, gold}.
/// `options` is an object keyed by letter; `gold` an array of letters or a letter string.
/// Throws Error(ParseError) on a malformed record and Error(InvariantViolation) on a broken invariant.
McqItem item_from_json(const nlohmann::json& j);
nlohmann::ordered_json item_to_json(const McqItem& item);

/// Reads a dataset file. Every violation in the file is reported, each with its
/// line number, in a single Error(InvariantViolation); Error(ParseError) for bad lines.
std::vector<McqItem> load_dataset(const std::filesystem::path& path);

struct FewShotConfig {
    int n_single = 4;
    int n_multi = 5;
    std::uint64_t seed = 0;
};

/// "stem\nA. text\nB. text" as used in prompts.
std::string format_question(const McqItem& item);

/// Exemplars for `item`: same answer type and subject first, then same answer
/// type from any subject, ranked by a seeded hash. Items whose id is in
/// `excluded` (the scored set) are never chosen. Throws Error(ExemplarShortage).
std::vector<const McqItem*> select_exemplars(const McqItem& item, const FewShotConfig& config,
                                             const std::vector<McqItem>& pool, const std::set<std::string>& excluded);

/// Few-shot prompt from the "eval.objective.single" / "eval.objective.multi" templates.
gateway::ChatRequest build_prompt(const McqItem& item, const FewShotConfig& config, const std::vector<McqItem>& pool,
                                  const std::set<std::string>& excluded, const TemplateSet& templates,
                                  const gateway::ProviderProfile& profile, const std::string& model);

enum class ExtractionRule { explicit_answer, standalone_letters, fallback_scan, none };
std::string_view to_string(ExtractionRule r) noexcept;

struct ExtractionOutcome {
    LetterSet letters;
    ExtractionRule rule = ExtractionRule::none;
    std::string raw_response;
};

/// Never throws. Only upper-case letters (ASCII or full-width) count as option letters.
ExtractionOutcome extract_answer(std::string_view response, std::string_view option_letters);

inline bool score_item(const LetterSet& extracted, const LetterSet& gold) { return extracted == gold; }

struct ItemResult {
    std::string id;
    Subject subject = Subject::NJE;
    AnswerType answer_type = AnswerType::single;
    bool correct = false;
    bool errored = false;
    LetterSet extracted;
    LetterSet gold;
    ExtractionRule rule = ExtractionRule::none;
    std::string response;
    std::string error;
};

struct Cell {
    std::int64_t correct = 0;
    std::int64_t total = 0;

    [[nodiscard]] double accuracy() const { return total ? 100.0 * static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

using CellKey = std::pair<Subject, AnswerType>;

struct AccuracyReport {
    std::string model;
    std::map<CellKey, Cell> cells;
    std::map<Level, Cell> levels;
    Cell overall;
    /// 100 × Σcorrect / Σtotal.
    double micro_average = 0.0;
    std::int64_t errors = 0;
    /// Sorted by id.
    std::vector<ItemResult> items;
};

/// Folds per-item results. Throws Error(DoubleCount), Error(EmptyDataset).
AccuracyReport aggregate(std::vector<ItemResult> results, std::string model = {});

/// Builds a report from per-cell tallies.
AccuracyReport aggregate_cells(const std::map<CellKey, Cell>& cells, std::string model = {});

/// Correct count implied by a published percentage: round(accuracy × total / 100).
std::int64_t tally_from_accuracy(double accuracy_percent, std::int64_t total);

/// Table columns: NJE..UNGEE with S and M, PFE and LBK with S, plus any other
/// cell present in the report.
std::vector<CellKey> report_columns(const std::vector<const AccuracyReport*>& reports);

/// One header block and one row per report, percentages to two decimals (half-up).
std::string render_report(const std::vector<const AccuracyReport*>& reports);
std::string render_report(const AccuracyReport& report);

nlohmann::ordered_json report_to_json(const AccuracyReport& report);

struct EvaluateOptions {
    FewShotConfig few_shot;
    std::string model;  // empty: profile default
    int concurrency = 4;
};

/// Prompts every item, extracts and scores. Items whose call fails score
/// incorrect and are tallied in `errors`. Throws Error(EmptyDataset).
AccuracyReport evaluate(gateway::Gateway& gateway, const gateway::ProviderProfile& profile,
                        const std::vector<McqItem>& dataset, const std::vector<McqItem>& pool,
                        const TemplateSet& templates, const EvaluateOptions& options);

}  // namespace juris::objective
