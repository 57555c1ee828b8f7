#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "juris/gateway.hpp"
#include "juris/templates.hpp"

namespace juris::subjective {

enum class Scenario { professional_tools, consultation, judgment_prediction };

std::string_view to_string(Scenario s) noexcept;
std::optional<Scenario> scenario_from_string(std::string_view s);

struct SubjectiveItem {
    std::string id;
    std::string question;
    std::string reference_answer;
    Scenario scenario = Scenario::consultation;
};

/// Reads {id, question, reference_answer, scenario_tag} lines.
/// Throws Error(ParseError), Error(InvariantViolation).
std::vector<SubjectiveItem> load_dataset(const std::filesystem::path& path);

struct JudgeRubric {
    std::string accuracy;
    std::string completeness;
    std::string clarity;

    /// From the "rubric.accuracy", "rubric.completeness" and "rubric.clarity" assets.
    static JudgeRubric from_templates(const TemplateSet& templates);
};

struct JudgeScore {
    double accuracy = 0;
    double completeness = 0;
    double clarity = 0;

    bool operator==(const JudgeScore&) const = default;
};

/// Throws Error(EmptyCandidate). `round` is the 1-based repeat number.
gateway::ChatRequest build_judge_prompt(const SubjectiveItem& item, std::string_view candidate_answer,
                                        const JudgeRubric& rubric, const TemplateSet& templates, int round,
                                        const gateway::ProviderProfile& judge, const std::string& model);

/// Follow-up turn asking the judge to restate its scores in the required format.
gateway::ChatRequest build_reask(const gateway::ChatRequest& first, std::string_view first_reply,
                                 const TemplateSet& templates);

/// Reads "<label>: <n>" for each dimension, in any order, with label synonyms
/// (Accuracy/ACC/准确性, Completeness/CPL/完整性, Clarity/CLR/清晰度, ...).
/// Throws Error(ScoreOutOfRange) for a value outside [1, 5], then Error(ScoreMissing).
JudgeScore parse_judge_scores(std::string_view text);

struct ItemOutcome {
    std::string id;
    Scenario scenario = Scenario::consultation;
    std::string candidate;
    std::vector<std::optional<JudgeScore>> rounds;
    /// Mean of the valid rounds; nullopt when the item is excluded.
    std::optional<JudgeScore> score;
};

struct DimensionMeans {
    double accuracy = 0;
    double completeness = 0;
    double clarity = 0;
    double average = 0;
    int n_items = 0;
};

struct SubjectiveReport {
    std::string model;
    double mean_acc = 0;
    double mean_cpl = 0;
    double mean_clr = 0;
    /// (mean_acc + mean_cpl + mean_clr) / 3.
    double average = 0;
    int n_items = 0;
    int n_invalid = 0;
    std::map<Scenario, DimensionMeans> by_scenario;
    /// Sorted by id.
    std::vector<ItemOutcome> items;
};

/// Means over the included items. Throws Error(AllInvalid) if none is included.
SubjectiveReport summarize(std::vector<ItemOutcome> items, std::string model = {});

/// Report from published dimension means (no items).
SubjectiveReport report_from_means(std::string model, double acc, double cpl, double clr);

std::string render_report(const std::vector<const SubjectiveReport*>& reports);
std::string render_report(const SubjectiveReport& report);
nlohmann::ordered_json report_to_json(const SubjectiveReport& report);

struct EvaluateOptions {
    int repeats = 3;
    std::string model;        // candidate model; empty: profile default
    std::string judge_model;  // empty: judge profile default
    int concurrency = 4;
};

/// One candidate per item, `repeats` judgments each (one re-ask on a parse
/// failure). Gateway errors propagate. Throws Error(AllInvalid), Error(EmptyDataset).
SubjectiveReport evaluate(gateway::Gateway& gateway, const gateway::ProviderProfile& model_profile,
                          const gateway::ProviderProfile& judge_profile, const std::vector<SubjectiveItem>& dataset,
                          const TemplateSet& templates, const EvaluateOptions& options);

/// The candidate-answer request for an item.
gateway::ChatRequest build_candidate_prompt(const SubjectiveItem& item, const gateway::ProviderProfile& profile,
                                            const std::string& model);

}  // namespace juris::subjective
