#include "juris/eval_subjective.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>

#include "juris/error.hpp"
#include "juris/jsonl.hpp"
#include "juris/parallel.hpp"
#include "juris/text.hpp"

namespace juris::subjective {

namespace {

bool is_ascii_alpha(char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

const std::array<std::vector<std::string>, 3> kLabels = {{
    {"accuracy", "acc", "准确性", "准确度", "准确"},
    {"completeness", "cpl", "完整性", "完整度", "完整"},
    {"clarity", "clr", "清晰度", "清晰性", "清晰"},
}};

// Value after the first occurrence of any label that is followed by a number.
std::optional<double> labeled_number(const std::string& folded, const std::vector<std::string>& labels)
{
    std::optional<std::pair<std::size_t, double>> best;
    for (const auto& label : labels) {
        bool ascii = is_ascii_alpha(label[0]);
        for (auto pos = folded.find(label); pos != std::string::npos; pos = folded.find(label, pos + 1)) {
            if (ascii && pos > 0 && is_ascii_alpha(folded[pos - 1])) continue;
            std::size_t p = pos + label.size();
            if (ascii && p < folded.size() && is_ascii_alpha(folded[p])) continue;
            while (p < folded.size() && (folded[p] == ' ' || folded[p] == '*' || folded[p] == '\t')) ++p;
            if (p < folded.size() && (folded[p] == ':' || folded[p] == '=')) {
                ++p;
            } else if (folded.compare(p, 3, "\xEF\xBC\x9A") == 0) {  // full-width colon
                p += 3;
            }
            while (p < folded.size() && (folded[p] == ' ' || folded[p] == '*' || folded[p] == '\t')) ++p;
            if (p >= folded.size() || !is_digit(folded[p])) continue;
            std::size_t end = p;
            while (end < folded.size() && is_digit(folded[end])) ++end;
            if (end + 1 < folded.size() && folded[end] == '.' && is_digit(folded[end + 1])) {
                ++end;
                while (end < folded.size() && is_digit(folded[end])) ++end;
            }
            double value = std::strtod(folded.substr(p, end - p).c_str(), nullptr);
            if (!best || pos < best->first) best = {pos, value};
            break;
        }
    }
    if (!best) return std::nullopt;
    return best->second;
}

std::string fmt2(double v) { return text::fixed2_half_up(v); }

std::string pad(std::string s, std::size_t width)
{
    std::size_t w = text::codepoint_count(s);
    if (w < width) s.append(width - w, ' ');
    return s;
}

}  // namespace

std::string_view to_string(Scenario s) noexcept
{
    switch (s) {
        case Scenario::professional_tools: return "professional_tools";
        case Scenario::consultation: return "consultation";
        case Scenario::judgment_prediction: return "judgment_prediction";
    }
    return "?";
}

std::optional<Scenario> scenario_from_string(std::string_view s)
{
    if (s == "professional_tools") return Scenario::professional_tools;
    if (s == "consultation") return Scenario::consultation;
    if (s == "judgment_prediction") return Scenario::judgment_prediction;
    return std::nullopt;
}

std::vector<SubjectiveItem> load_dataset(const std::filesystem::path& path)
{
    std::vector<SubjectiveItem> items;
    std::vector<std::string> violations;
    for (const auto& line : jsonl::read(path)) {
        const std::string where = path.string() + ":" + std::to_string(line.number);
        SubjectiveItem item;
        try {
            const auto& j = line.value;
            item.id = j.at("id").get<std::string>();
            item.question = j.at("question").get<std::string>();
            item.reference_answer = j.at("reference_answer").get<std::string>();
            auto scenario = scenario_from_string(j.at("scenario_tag").get<std::string>());
            if (!scenario) throw Error(ErrorCode::ParseError, where + ": unknown scenario_tag");
            item.scenario = *scenario;
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::ParseError, where + ": " + e.what());
        }
        if (item.id.empty() || text::is_blank(item.question) || text::is_blank(item.reference_answer)) {
            violations.push_back("line " + std::to_string(line.number) + ": empty id, question or reference_answer");
            continue;
        }
        items.push_back(std::move(item));
    }
    if (!violations.empty()) {
        std::string msg = path.string();
        for (const auto& v : violations) msg += "\n  " + v;
        throw Error(ErrorCode::InvariantViolation, msg);
    }
    return items;
}

JudgeRubric JudgeRubric::from_templates(const TemplateSet& templates)
{
    JudgeRubric r{templates.get("rubric.accuracy").body(), templates.get("rubric.completeness").body(),
                  templates.get("rubric.clarity").body()};
    if (text::is_blank(r.accuracy) || text::is_blank(r.completeness) || text::is_blank(r.clarity)) {
        throw Error(ErrorCode::TemplateInvalid, "rubric criterion is empty");
    }
    return r;
}

gateway::ChatRequest build_judge_prompt(const SubjectiveItem& item, std::string_view candidate_answer,
                                        const JudgeRubric& rubric, const TemplateSet& templates, int round,
                                        const gateway::ProviderProfile& judge, const std::string& model)
{
    if (text::is_blank(candidate_answer)) throw Error(ErrorCode::EmptyCandidate, "item " + item.id + ": empty candidate answer");
    auto content = templates.get("judge").render({{"question", item.question},
                                                  {"reference", item.reference_answer},
                                                  {"candidate", std::string(candidate_answer)},
                                                  {"accuracy", rubric.accuracy},
                                                  {"completeness", rubric.completeness},
                                                  {"clarity", rubric.clarity},
                                                  {"round", std::to_string(round)}});
    return gateway::make_request(judge.provider_id, model.empty() ? judge.default_model : model,
                                 {{gateway::Role::user, std::move(content)}});
}

gateway::ChatRequest build_reask(const gateway::ChatRequest& first, std::string_view first_reply,
                                 const TemplateSet& templates)
{
    auto messages = first.messages;
    messages.push_back({gateway::Role::assistant, text::is_blank(first_reply) ? std::string("(empty)") : std::string(first_reply)});
    messages.push_back({gateway::Role::user, templates.get("judge.reask").body()});
    return gateway::make_request(first.provider_id, first.model_id, std::move(messages), first.temperature,
                                 first.max_tokens);
}

JudgeScore parse_judge_scores(std::string_view text)
{
    std::string folded = text::to_lower_ascii(text);
    std::array<std::optional<double>, 3> values;
    for (std::size_t d = 0; d < 3; ++d) values[d] = labeled_number(folded, kLabels[d]);
    static constexpr std::array<std::string_view, 3> kNames = {"accuracy", "completeness", "clarity"};
    for (std::size_t d = 0; d < 3; ++d) {
        if (values[d] && (*values[d] < 1.0 || *values[d] > 5.0)) {
            throw Error(ErrorCode::ScoreOutOfRange, std::string(kNames[d]) + " score " + fmt2(*values[d]) + " outside [1, 5]");
        }
    }
    for (std::size_t d = 0; d < 3; ++d) {
        if (!values[d]) throw Error(ErrorCode::ScoreMissing, std::string(kNames[d]) + " score not found");
    }
    return {*values[0], *values[1], *values[2]};
}

SubjectiveReport summarize(std::vector<ItemOutcome> items, std::string model)
{
    std::sort(items.begin(), items.end(), [](const ItemOutcome& a, const ItemOutcome& b) { return a.id < b.id; });
    SubjectiveReport report;
    report.model = std::move(model);
    double acc = 0, cpl = 0, clr = 0;
    std::map<Scenario, std::array<double, 3>> sums;
    for (const auto& item : items) {
        if (!item.score) {
            ++report.n_invalid;
            continue;
        }
        ++report.n_items;
        acc += item.score->accuracy;
        cpl += item.score->completeness;
        clr += item.score->clarity;
        auto& s = sums[item.scenario];
        s[0] += item.score->accuracy;
        s[1] += item.score->completeness;
        s[2] += item.score->clarity;
        ++report.by_scenario[item.scenario].n_items;
    }
    if (report.n_items == 0) throw Error(ErrorCode::AllInvalid, "every item was excluded");
    report.mean_acc = acc / report.n_items;
    report.mean_cpl = cpl / report.n_items;
    report.mean_clr = clr / report.n_items;
    report.average = (report.mean_acc + report.mean_cpl + report.mean_clr) / 3.0;
    for (auto& [scenario, means] : report.by_scenario) {
        const auto& s = sums[scenario];
        means.accuracy = s[0] / means.n_items;
        means.completeness = s[1] / means.n_items;
        means.clarity = s[2] / means.n_items;
        means.average = (means.accuracy + means.completeness + means.clarity) / 3.0;
    }
    report.items = std::move(items);
    return report;
}

SubjectiveReport report_from_means(std::string model, double acc, double cpl, double clr)
{
    SubjectiveReport r;
    r.model = std::move(model);
    r.mean_acc = acc;
    r.mean_cpl = cpl;
    r.mean_clr = clr;
    r.average = (acc + cpl + clr) / 3.0;
    return r;
}

std::string render_report(const std::vector<const SubjectiveReport*>& reports)
{
    std::size_t first = 5;
    for (const auto* r : reports) first = std::max(first, text::codepoint_count(r->model));
    first += 2;
    std::string out = pad("Model", first) + "ACC   CPL   CLR   Average\n";
    std::string notes;
    for (const auto* r : reports) {
        std::string name = r->model.empty() ? "-" : r->model;
        out += pad(name, first) + fmt2(r->mean_acc) + "  " + fmt2(r->mean_cpl) + "  " + fmt2(r->mean_clr) + "  " +
               fmt2(r->average) + "\n";
        if (r->n_invalid > 0) {
            notes += "* " + name + ": " + std::to_string(r->n_invalid) + " of " +
                     std::to_string(r->n_items + r->n_invalid) +
                     " items excluded (no judgment could be parsed)\n";
        }
    }
    return out + notes;
}

std::string render_report(const SubjectiveReport& report)
{
    return render_report(std::vector<const SubjectiveReport*>{&report});
}

nlohmann::ordered_json report_to_json(const SubjectiveReport& report)
{
    nlohmann::ordered_json j;
    j["model"] = report.model;
    j["mean_acc"] = report.mean_acc;
    j["mean_cpl"] = report.mean_cpl;
    j["mean_clr"] = report.mean_clr;
    j["average"] = report.average;
    j["display"] = {fmt2(report.mean_acc), fmt2(report.mean_cpl), fmt2(report.mean_clr), fmt2(report.average)};
    j["n_items"] = report.n_items;
    j["n_invalid"] = report.n_invalid;
    auto& scenarios = j["by_scenario"] = nlohmann::ordered_json::array();
    for (const auto& [scenario, m] : report.by_scenario) {
        scenarios.push_back({{"scenario", to_string(scenario)},
                             {"n_items", m.n_items},
                             {"accuracy", m.accuracy},
                             {"completeness", m.completeness},
                             {"clarity", m.clarity},
                             {"average", m.average}});
    }
    auto& items = j["items"] = nlohmann::ordered_json::array();
    for (const auto& item : report.items) {
        nlohmann::ordered_json row;
        row["id"] = item.id;
        row["scenario"] = to_string(item.scenario);
        auto& rounds = row["rounds"] = nlohmann::ordered_json::array();
        for (const auto& r : item.rounds) {
            rounds.push_back(r ? nlohmann::ordered_json{r->accuracy, r->completeness, r->clarity} : nlohmann::ordered_json());
        }
        row["score"] = item.score ? nlohmann::ordered_json{item.score->accuracy, item.score->completeness, item.score->clarity}
                                  : nlohmann::ordered_json();
        items.push_back(std::move(row));
    }
    return j;
}

gateway::ChatRequest build_candidate_prompt(const SubjectiveItem& item, const gateway::ProviderProfile& profile,
                                            const std::string& model)
{
    return gateway::make_request(profile.provider_id, model.empty() ? profile.default_model : model,
                                 {{gateway::Role::user, item.question}});
}

SubjectiveReport evaluate(gateway::Gateway& gateway, const gateway::ProviderProfile& model_profile,
                          const gateway::ProviderProfile& judge_profile, const std::vector<SubjectiveItem>& dataset,
                          const TemplateSet& templates, const EvaluateOptions& options)
{
    if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "dataset has no items");
    if (options.repeats < 1) throw Error(ErrorCode::InvalidConfig, "repeats must be at least 1");
    const auto rubric = JudgeRubric::from_templates(templates);

    std::vector<ItemOutcome> outcomes(dataset.size());
    parallel_for(dataset.size(), options.concurrency, [&](std::size_t i) {
        const auto& item = dataset[i];
        auto& out = outcomes[i];
        out.id = item.id;
        out.scenario = item.scenario;
        out.candidate = gateway.complete(build_candidate_prompt(item, model_profile, options.model), model_profile).text;
        if (text::is_blank(out.candidate)) {
            out.rounds.assign(static_cast<std::size_t>(options.repeats), std::nullopt);
            return;
        }
        JudgeScore sum;
        int valid = 0;
        for (int round = 1; round <= options.repeats; ++round) {
            auto req = build_judge_prompt(item, out.candidate, rubric, templates, round, judge_profile, options.judge_model);
            auto reply = gateway.complete(req, judge_profile).text;
            std::optional<JudgeScore> score;
            try {
                score = parse_judge_scores(reply);
            } catch (const Error&) {
                auto again = gateway.complete(build_reask(req, reply, templates), judge_profile).text;
                try {
                    score = parse_judge_scores(again);
                } catch (const Error&) {
                }
            }
            out.rounds.push_back(score);
            if (score) {
                sum.accuracy += score->accuracy;
                sum.completeness += score->completeness;
                sum.clarity += score->clarity;
                ++valid;
            }
        }
        if (valid > 0) out.score = JudgeScore{sum.accuracy / valid, sum.completeness / valid, sum.clarity / valid};
    });
    return summarize(std::move(outcomes), options.model.empty() ? model_profile.default_model : options.model);
}

}  // namespace juris::subjective
