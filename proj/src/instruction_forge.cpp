#include "juris/instruction_forge.hpp"

#include <algorithm>
#include <regex>

#include "juris/chunking.hpp"
#include "juris/error.hpp"
#include "juris/jsonl.hpp"
#include "juris/parallel.hpp"
#include "juris/text.hpp"

namespace juris::forge {

namespace {

constexpr std::string_view kCountryPrefix = "中华人民共和国";

template <class E, std::size_t N>
std::optional<E> lookup(const std::array<std::string_view, N>& names, std::string_view s)
{
    for (std::size_t i = 0; i < N; ++i) {
        if (names[i] == s) return static_cast<E>(i);
    }
    return std::nullopt;
}

constexpr std::array<std::string_view, 3> kSourceKinds = {"public_task_dataset", "legal_raw_text", "open_instruction"};
constexpr std::array<std::string_view, 11> kTaskTags = {
    "element_extraction", "event_detection",  "case_classification",   "judgement_prediction",
    "case_matching",      "doc_summarization", "opinion_summarization", "legal_qa",
    "reading_comprehension", "judicial_exam", "general_instruction"};
constexpr std::array<std::string_view, 11> kTaskNames = {
    "Legal Element Extraction", "Legal Event Detection",         "Legal Case Classification",
    "Judgement Prediction",     "Similar Cases Matching",        "Documents Summarization",
    "Public Opinion Summarization", "Legal Question Answering",  "Document Reading Comprehension",
    "Judicial Examination",     "General Instruction"};
constexpr std::array<std::string_view, 4> kScenarios = {"professional_tools", "consultation", "examination_assistant",
                                                        "general"};
constexpr std::array<std::string_view, 4> kScenarioNames = {"Legal Professional Tools", "Legal Consultation",
                                                            "Examination Assistant", "General"};
constexpr std::array<std::string_view, 4> kStrategies = {"cleaned", "behavior_shaped", "knowledge_expanded", "lcot"};

std::string strip_country_prefix(std::string_view title)
{
    auto t = text::trim(title);
    if (t.substr(0, kCountryPrefix.size()) == kCountryPrefix) t.remove_prefix(kCountryPrefix.size());
    return std::string(text::trim(t));
}

std::string model_of(const ForgeContext& ctx) { return ctx.model.empty() ? ctx.profile.default_model : ctx.model; }

gateway::ChatRequest user_request(const ForgeContext& ctx, std::string prompt)
{
    return gateway::make_request(ctx.profile.provider_id, model_of(ctx), {{gateway::Role::user, std::move(prompt)}});
}

std::string ask(const ForgeContext& ctx, const gateway::ChatRequest& req)
{
    return std::string(text::trim(ctx.gateway.complete(req, ctx.profile).text));
}

void check_attempt(int attempt)
{
    if (attempt != 1 && attempt != 2) throw Error(ErrorCode::InvalidRequest, "attempt must be 1 or 2");
}

char32_t fold_fullwidth(char32_t c) { return (c >= U'Ａ' && c <= U'Ｚ') ? c - U'Ａ' + U'A' : c; }

bool is_upper(char32_t c) { return c >= U'A' && c <= U'Z'; }
bool is_alpha(char32_t c) { return is_upper(c) || (c >= U'a' && c <= U'z'); }

std::string require_string(const nlohmann::json& j, const char* key)
{
    if (!j.contains(key) || !j.at(key).is_string()) throw Error(ErrorCode::ParseError, std::string("missing string field '") + key + "'");
    return j.at(key).get<std::string>();
}

}  // namespace

std::string_view to_string(SourceKind v) noexcept { return kSourceKinds[static_cast<std::size_t>(v)]; }
std::string_view to_string(TaskTag v) noexcept { return kTaskTags[static_cast<std::size_t>(v)]; }
std::string_view to_string(ScenarioTag v) noexcept { return kScenarios[static_cast<std::size_t>(v)]; }
std::string_view to_string(Strategy v) noexcept { return kStrategies[static_cast<std::size_t>(v)]; }
std::optional<SourceKind> source_kind_from_string(std::string_view s) { return lookup<SourceKind>(kSourceKinds, s); }
std::optional<TaskTag> task_tag_from_string(std::string_view s) { return lookup<TaskTag>(kTaskTags, s); }
std::optional<ScenarioTag> scenario_tag_from_string(std::string_view s) { return lookup<ScenarioTag>(kScenarios, s); }
std::optional<Strategy> strategy_from_string(std::string_view s) { return lookup<Strategy>(kStrategies, s); }

ScenarioTag scenario_of(TaskTag task) noexcept
{
    switch (task) {
        case TaskTag::legal_qa: return ScenarioTag::consultation;
        case TaskTag::reading_comprehension:
        case TaskTag::judicial_exam: return ScenarioTag::examination_assistant;
        case TaskTag::general_instruction: return ScenarioTag::general;
        default: return ScenarioTag::professional_tools;
    }
}

std::string_view display_name(TaskTag task) noexcept { return kTaskNames[static_cast<std::size_t>(task)]; }
std::string_view display_name(ScenarioTag scenario) noexcept { return kScenarioNames[static_cast<std::size_t>(scenario)]; }

// ------------------------------------------------------------------ records

RawRecord record_from_json(const nlohmann::json& j)
{
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "record is not an object");
    RawRecord r;
    r.source_id = require_string(j, "source_id");
    auto kind = source_kind_from_string(require_string(j, "source_kind"));
    if (!kind) throw Error(ErrorCode::ParseError, "unknown source_kind");
    r.source_kind = *kind;
    if (j.contains("schema")) r.schema = require_string(j, "schema");
    if (!j.contains("payload") || !j.at("payload").is_object()) throw Error(ErrorCode::ParseError, "missing object field 'payload'");
    for (const auto& [key, value] : j.at("payload").items()) {
        if (value.is_string()) {
            r.payload[key] = value.get<std::string>();
        } else if (value.is_array()) {
            // Lists (options, multiple answers) arrive one entry per line.
            std::string joined;
            for (const auto& v : value) {
                if (!joined.empty()) joined += "\n";
                joined += v.is_string() ? v.get<std::string>() : v.dump();
            }
            r.payload[key] = joined;
        } else if (!value.is_null()) {
            r.payload[key] = value.dump();
        }
    }
    if (r.source_id.empty()) throw Error(ErrorCode::InvariantViolation, "empty source_id");
    if (r.payload.empty()) throw Error(ErrorCode::InvariantViolation, "record " + r.source_id + ": empty payload");
    return r;
}

nlohmann::ordered_json record_to_json(const RawRecord& r)
{
    nlohmann::ordered_json j;
    j["source_id"] = r.source_id;
    j["source_kind"] = to_string(r.source_kind);
    j["schema"] = r.schema;
    j["payload"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.payload) j["payload"][k] = v;
    return j;
}

std::vector<RawRecord> load_records(const std::filesystem::path& path)
{
    std::vector<RawRecord> out;
    std::set<std::string> seen;
    for (const auto& line : jsonl::read(path)) {
        const std::string where = path.string() + ":" + std::to_string(line.number);
        try {
            out.push_back(record_from_json(line.value));
        } catch (const Error& e) {
            throw Error(e.code(), where + ": " + e.what());
        }
        if (!seen.insert(out.back().source_id).second) {
            throw Error(ErrorCode::InvariantViolation, where + ": duplicate source_id " + out.back().source_id);
        }
    }
    return out;
}

const InstructionPair& pair_of(const DatasetItem& item)
{
    if (const auto* t = std::get_if<InstructionTriplet>(&item)) return t->pair;
    return std::get<InstructionPair>(item);
}

std::vector<std::string> check_invariants(const DatasetItem& item)
{
    std::vector<std::string> problems;
    const auto& p = pair_of(item);
    if (text::is_blank(p.input)) problems.push_back("empty input");
    if (text::is_blank(p.output)) problems.push_back("empty output");
    if (p.source_id.empty()) problems.push_back("empty source_id");
    if (scenario_of(p.task_tag) != p.scenario_tag) {
        problems.push_back("task " + std::string(to_string(p.task_tag)) + " does not belong to scenario " +
                           std::string(to_string(p.scenario_tag)));
    }
    if (const auto* t = std::get_if<InstructionTriplet>(&item)) {
        if (t->references.empty()) problems.push_back("triplet without references");
        for (const auto& r : t->references) {
            if (text::is_blank(r)) problems.push_back("empty reference");
        }
    }
    return problems;
}

// ----------------------------------------------------------------- cleaning

namespace {

TaskSchema schema_from_json(const nlohmann::json& s, const std::string& where)
{
    TaskSchema schema;
    try {
        schema.name = s.at("name").get<std::string>();
        auto tag = task_tag_from_string(s.at("task_tag").get<std::string>());
        if (!tag) throw Error(ErrorCode::ParseError, where + ": schema " + schema.name + ": unknown task_tag");
        schema.task_tag = *tag;
        schema.input_fields = s.at("input_fields").get<std::vector<std::string>>();
        schema.output_field = s.at("output_field").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, where + ": " + e.what());
    }
    if (schema.name.empty() || schema.input_fields.empty() || schema.output_field.empty()) {
        throw Error(ErrorCode::ParseError, where + ": schema with empty name or fields");
    }
    return schema;
}

nlohmann::json parse_file(const std::filesystem::path& path)
{
    try {
        return nlohmann::json::parse(jsonl::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

}  // namespace

std::vector<TaskSchema> load_schemas(const std::filesystem::path& path)
{
    auto j = parse_file(path);
    if (!j.is_array()) throw Error(ErrorCode::ParseError, path.string() + ": expected an array of schemas");
    std::vector<TaskSchema> out;
    for (const auto& s : j) out.push_back(schema_from_json(s, path.string()));
    return out;
}

std::string_view to_string(DropReason r) noexcept
{
    switch (r) {
        case DropReason::missing_input: return "missing_input";
        case DropReason::missing_output: return "missing_output";
        case DropReason::unrouted: return "unrouted";
    }
    return "?";
}

CleanResult clean_and_pair(const std::vector<RawRecord>& records, const TaskSchema& schema)
{
    if (!records.empty()) {
        auto fields = schema.input_fields;
        fields.push_back(schema.output_field);
        for (const auto& f : fields) {
            bool present = std::any_of(records.begin(), records.end(),
                                       [&](const RawRecord& r) { return r.payload.count(f) > 0; });
            if (!present) {
                throw Error(ErrorCode::SchemaMismatch, "schema " + schema.name + ": field '" + f + "' absent from every record");
            }
        }
    }

    CleanResult out;
    for (const auto& r : records) {
        std::string input;
        bool input_ok = true;
        for (const auto& f : schema.input_fields) {
            auto it = r.payload.find(f);
            std::string part = it == r.payload.end() ? std::string() : text::normalize_whitespace(it->second);
            if (text::is_blank(part)) {
                input_ok = false;
                break;
            }
            if (!input.empty()) input += "\n";
            input += part;
        }
        if (!input_ok) {
            out.dropped.push_back({r.source_id, DropReason::missing_input});
            continue;
        }
        auto it = r.payload.find(schema.output_field);
        std::string output = it == r.payload.end() ? std::string() : text::normalize_whitespace(it->second);
        if (text::is_blank(output)) {
            out.dropped.push_back({r.source_id, DropReason::missing_output});
            continue;
        }
        out.pairs.push_back({std::move(input), std::move(output), schema.task_tag, scenario_of(schema.task_tag), r.source_id,
                             Strategy::cleaned});
    }
    return out;
}

// --------------------------------------------------- model-backed strategies

gateway::ChatRequest shaping_request(const InstructionPair& pair, const ForgeContext& ctx, int attempt)
{
    check_attempt(attempt);
    const char* name = attempt == 1 ? "forge.shape" : "forge.shape.strict";
    return user_request(ctx, ctx.templates.get(name).render({{"input", pair.input}, {"output", pair.output}}));
}

InstructionPair behavior_shape(const InstructionPair& pair, const ForgeContext& ctx)
{
    for (int attempt = 1; attempt <= 2; ++attempt) {
        auto reply = ask(ctx, shaping_request(pair, ctx, attempt));
        if (is_syllogism(reply, ctx.lexicon)) {
            InstructionPair shaped = pair;
            shaped.output = text::normalize_whitespace(reply);
            shaped.strategy = Strategy::behavior_shaped;
            return shaped;
        }
    }
    throw Error(ErrorCode::ShapingRejected, "pair " + pair.source_id + ": no labeled syllogism after retry");
}

bool expansion_consistent(std::string_view response, const objective::LetterSet& gold)
{
    std::vector<char32_t> cps;
    for (char32_t c : text::decode_utf8(response)) cps.push_back(fold_fullwidth(c));

    objective::LetterSet seen;
    bool has_other = false;
    for (std::size_t i = 0; i < cps.size();) {
        if (!is_alpha(cps[i])) {
            if (!text::is_space(cps[i]) && !text::is_separator(cps[i])) has_other = true;
            ++i;
            continue;
        }
        std::size_t end = i;
        bool all_upper = true;
        while (end < cps.size() && is_alpha(cps[end])) {
            all_upper = all_upper && is_upper(cps[end]);
            ++end;
        }
        if (all_upper) {
            for (std::size_t k = i; k < end; ++k) seen.insert(static_cast<char>(cps[k]));
        } else {
            has_other = true;
        }
        i = end;
    }
    if (!has_other) return false;
    return std::all_of(gold.begin(), gold.end(), [&](char g) { return seen.count(g) > 0; });
}

gateway::ChatRequest expansion_request(const objective::McqItem& mcq, const ForgeContext& ctx, int attempt)
{
    check_attempt(attempt);
    const char* name = attempt == 1 ? "forge.expand" : "forge.expand.strict";
    return user_request(ctx, ctx.templates.get(name).render({{"question", objective::format_question(mcq)},
                                                             {"answer", objective::letters_string(mcq.gold)}}));
}

InstructionPair knowledge_expand(const objective::McqItem& mcq, const ForgeContext& ctx)
{
    auto problems = objective::check_invariants(mcq);
    if (!problems.empty()) throw Error(ErrorCode::InvariantViolation, "item " + mcq.id + ": " + problems.front());
    const std::string question = objective::format_question(mcq);
    const std::string answer = objective::letters_string(mcq.gold);
    for (int attempt = 1; attempt <= 2; ++attempt) {
        auto reply = ask(ctx, expansion_request(mcq, ctx, attempt));
        if (expansion_consistent(reply, mcq.gold)) {
            return {question,  text::normalize_whitespace(reply), TaskTag::judicial_exam, ScenarioTag::examination_assistant,
                    mcq.id, Strategy::knowledge_expanded};
        }
    }
    throw Error(ErrorCode::ExpansionInconsistent, "item " + mcq.id + ": explanation does not carry answer " + answer);
}

std::variant<objective::McqItem, DropReason> mcq_from_record(const RawRecord& record)
{
    objective::McqItem item;
    item.id = record.source_id;
    auto field = [&](const char* name) {
        auto it = record.payload.find(name);
        return it == record.payload.end() ? std::string() : text::normalize_whitespace(it->second);
    };
    item.stem = field("stem");
    if (text::is_blank(item.stem)) return DropReason::missing_input;

    const std::string options = field("options");
    for (auto line : text::split_lines(options)) {
        line = text::trim(line);
        if (line.empty()) continue;
        auto cps = text::decode_utf8(line);
        if (cps.size() < 2) return DropReason::missing_input;
        char32_t letter = fold_fullwidth(cps[0]);
        if (!is_upper(letter)) return DropReason::missing_input;
        std::size_t i = 1;
        while (i < cps.size() && (text::is_space(cps[i]) || cps[i] == U'.' || cps[i] == U'．' || cps[i] == U'、' ||
                                  cps[i] == U':' || cps[i] == U'：' || cps[i] == U')' || cps[i] == U'）')) {
            ++i;
        }
        if (i == 1 || i >= cps.size()) return DropReason::missing_input;
        item.options.emplace_back(static_cast<char>(letter), text::encode_utf8({cps.begin() + static_cast<std::ptrdiff_t>(i), cps.end()}));
    }
    if (item.options.size() < 2) return DropReason::missing_input;

    for (char32_t c : text::decode_utf8(field("answer"))) {
        c = fold_fullwidth(c);
        if (is_upper(c)) item.gold.insert(static_cast<char>(c));
    }
    if (item.gold.empty()) return DropReason::missing_output;
    auto letters = item.option_letters();
    for (char g : item.gold) {
        if (letters.find(g) == std::string::npos) return DropReason::missing_output;
    }

    if (auto s = field("subject"); !s.empty()) {
        auto subject = objective::subject_from_string(s);
        if (!subject) return DropReason::missing_input;
        item.subject = *subject;
    }
    item.level = objective::level_of(item.subject);
    item.answer_type = item.gold.size() > 1 ? objective::AnswerType::multi : objective::AnswerType::single;
    return item;
}

InstructionPair develop_thinking(const InstructionPair& pair, const TemplateSet& templates, std::string_view variant)
{
    InstructionPair out = pair;
    out.input = apply_lcot(pair.input, templates, variant);
    out.strategy = Strategy::lcot;
    return out;
}

// --------------------------------------------------------------- references

PatternSet PatternSet::defaults()
{
    return {{{"bracketed_title_article",
              "《((?:(?!《|》)[^\\n])+?)》\\s*第((?:[0-9]|零|〇|一|二|两|三|四|五|六|七|八|九|十|百|千)+)条"}}};
}

PatternSet PatternSet::load(const std::filesystem::path& path)
{
    try {
        return from_json(nlohmann::json::parse(jsonl::read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

PatternSet PatternSet::from_json(const nlohmann::json& j)
{
    PatternSet set;
    try {
        for (const auto& p : j) set.patterns.push_back({p.at("name").get<std::string>(), p.at("regex").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, e.what());
    }
    if (set.patterns.empty()) throw Error(ErrorCode::InvalidConfig, "empty pattern set");
    for (const auto& p : set.patterns) {
        try {
            std::regex re(p.regex, std::regex::ECMAScript);
            if (re.mark_count() < 2) throw Error(ErrorCode::InvalidConfig, "pattern " + p.name + " needs two groups");
        } catch (const std::regex_error& e) {
            throw Error(ErrorCode::InvalidConfig, "pattern " + p.name + ": " + e.what());
        }
    }
    return set;
}

std::string Reference::render() const
{
    std::string out = "《" + title + "》第" + std::to_string(article) + "条";
    if (text && !text::is_blank(*text)) out += "：" + *text;
    return out;
}

std::vector<Reference> extract_references(std::string_view raw_text, const PatternSet& patterns,
                                          const kb::KnowledgeBase* kb)
{
    struct Hit {
        std::size_t pos;
        Reference ref;
    };
    std::vector<Hit> hits;
    const std::string s(raw_text);
    for (const auto& p : patterns.patterns) {
        const std::regex re(p.regex, std::regex::ECMAScript);
        for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
            const auto& m = *it;
            if (m.size() < 3 || !m[1].matched || !m[2].matched) continue;
            auto article = kb::parse_numeral(m[2].str());
            std::string title(text::trim(m[1].str()));
            if (!article || *article <= 0 || title.empty()) continue;
            hits.push_back({static_cast<std::size_t>(m.position(0)), {title, *article, std::nullopt}});
        }
    }
    std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.pos < b.pos; });

    static const std::regex leading_marker("^\\s*第(?:[0-9]|零|〇|一|二|两|三|四|五|六|七|八|九|十|百|千)+条\\s*");
    std::vector<Reference> out;
    std::set<std::pair<std::string, int>> seen;
    for (auto& h : hits) {
        if (!seen.insert({strip_country_prefix(h.ref.title), h.ref.article}).second) continue;
        if (kb) {
            if (auto chunk = kb->find_article(h.ref.title, h.ref.article)) {
                std::string body = std::regex_replace(chunk->chunk.text, leading_marker, "");
                body = text::collapse_whitespace(body);
                if (!body.empty()) h.ref.text = body;
            }
        }
        out.push_back(std::move(h.ref));
    }
    return out;
}

std::string raw_text_of(const RawRecord& record)
{
    std::string out;
    for (const auto& [key, value] : record.payload) {
        if (!out.empty()) out += "\n";
        out += value;
    }
    return out;
}

std::vector<DatasetItem> build_triplets(const std::vector<InstructionPair>& pairs, const std::vector<RawRecord>& records,
                                        const PatternSet& patterns, const kb::KnowledgeBase* kb)
{
    std::map<std::string_view, const RawRecord*> by_id;
    for (const auto& r : records) by_id.emplace(r.source_id, &r);
    std::vector<DatasetItem> out;
    for (const auto& p : pairs) {
        auto it = by_id.find(p.source_id);
        if (it == by_id.end()) throw Error(ErrorCode::AlignmentError, "no raw record for source_id " + p.source_id);
        auto refs = extract_references(raw_text_of(*it->second), patterns, kb);
        if (refs.empty()) {
            out.emplace_back(p);
            continue;
        }
        InstructionTriplet t{p, {}};
        for (const auto& r : refs) t.references.push_back(r.render());
        out.emplace_back(std::move(t));
    }
    return out;
}

// ---------------------------------------------------------- export, stats

nlohmann::ordered_json item_to_json(const DatasetItem& item)
{
    const auto& p = pair_of(item);
    nlohmann::ordered_json j;
    j["input"] = p.input;
    j["output"] = p.output;
    if (const auto* t = std::get_if<InstructionTriplet>(&item)) j["references"] = t->references;
    j["task_tag"] = to_string(p.task_tag);
    j["scenario_tag"] = to_string(p.scenario_tag);
    j["strategy"] = to_string(p.strategy);
    j["source_id"] = p.source_id;
    return j;
}

DatasetItem item_from_json(const nlohmann::json& j)
{
    InstructionPair p;
    std::optional<std::vector<std::string>> refs;
    try {
        p.input = j.at("input").get<std::string>();
        p.output = j.at("output").get<std::string>();
        auto task = task_tag_from_string(j.at("task_tag").get<std::string>());
        auto scenario = scenario_tag_from_string(j.at("scenario_tag").get<std::string>());
        auto strategy = strategy_from_string(j.at("strategy").get<std::string>());
        if (!task || !scenario || !strategy) throw Error(ErrorCode::ParseError, "unknown tag value");
        p.task_tag = *task;
        p.scenario_tag = *scenario;
        p.strategy = *strategy;
        p.source_id = j.at("source_id").get<std::string>();
        if (j.contains("references")) refs = j.at("references").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, e.what());
    }
    DatasetItem item = refs ? DatasetItem(InstructionTriplet{std::move(p), std::move(*refs)}) : DatasetItem(std::move(p));
    auto problems = check_invariants(item);
    if (!problems.empty()) throw Error(ErrorCode::InvariantViolation, problems.front());
    return item;
}

void export_dataset(std::vector<DatasetItem> items, const std::filesystem::path& path)
{
    for (const auto& item : items) {
        auto problems = check_invariants(item);
        if (!problems.empty()) {
            throw Error(ErrorCode::InvariantViolation, "item " + pair_of(item).source_id + ": " + problems.front());
        }
    }
    std::stable_sort(items.begin(), items.end(),
                     [](const DatasetItem& a, const DatasetItem& b) { return pair_of(a).source_id < pair_of(b).source_id; });
    std::vector<nlohmann::ordered_json> rows;
    rows.reserve(items.size());
    for (const auto& item : items) rows.push_back(item_to_json(item));
    jsonl::write(path, rows);
}

std::vector<DatasetItem> load_dataset(const std::filesystem::path& path)
{
    std::vector<DatasetItem> out;
    for (const auto& line : jsonl::read(path)) {
        try {
            out.push_back(item_from_json(line.value));
        } catch (const Error& e) {
            throw Error(e.code(), path.string() + ":" + std::to_string(line.number) + ": " + e.what());
        }
    }
    return out;
}

namespace {

constexpr std::array<std::string_view, 3> kSubsets = {"SFT-Pair", "SFT-Triplet", "General"};

std::size_t subset_index(const DatasetItem& item)
{
    if (std::holds_alternative<InstructionTriplet>(item)) return 1;
    return pair_of(item).task_tag == TaskTag::general_instruction ? 2 : 0;
}

std::string pad_right(std::string s, std::size_t width)
{
    auto w = text::codepoint_count(s);
    if (w < width) s.append(width - w, ' ');
    return s;
}

std::string pad_left(const std::string& s, std::size_t width)
{
    auto w = text::codepoint_count(s);
    return w < width ? std::string(width - w, ' ') + s : s;
}

std::string rstrip(std::string s)
{
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s;
}

}  // namespace

DatasetStats dataset_stats(const std::vector<DatasetItem>& items)
{
    std::map<std::tuple<std::size_t, TaskTag, ScenarioTag>, std::size_t> counts;
    for (const auto& item : items) {
        const auto& p = pair_of(item);
        ++counts[{subset_index(item), p.task_tag, p.scenario_tag}];
    }
    DatasetStats stats;
    for (const auto& [key, n] : counts) {
        stats.rows.push_back({std::string(kSubsets[std::get<0>(key)]), std::get<1>(key), std::get<2>(key), n});
        stats.total += n;
    }
    return stats;
}

std::string render_stats(const DatasetStats& stats)
{
    std::size_t w_set = 7, w_task = 4, w_size = 4;
    for (const auto& r : stats.rows) {
        w_set = std::max(w_set, r.subset.size());
        w_task = std::max(w_task, display_name(r.task_tag).size());
        w_size = std::max(w_size, std::to_string(r.size).size());
    }
    w_size = std::max(w_size, std::to_string(stats.total).size());

    std::string out = rstrip(pad_right("Dataset", w_set) + "  " + pad_right("Task", w_task) + "  " +
                             pad_left("Size", w_size) + "  Scenario") + "\n";
    std::string previous_set;
    for (const auto& r : stats.rows) {
        std::string set = r.subset == previous_set ? std::string() : r.subset;
        previous_set = r.subset;
        out += rstrip(pad_right(set, w_set) + "  " + pad_right(std::string(display_name(r.task_tag)), w_task) + "  " +
                      pad_left(std::to_string(r.size), w_size) + "  " + std::string(display_name(r.scenario_tag))) +
               "\n";
    }
    out += rstrip(pad_right("Total", w_set) + "  " + pad_right("", w_task) + "  " +
                  pad_left(std::to_string(stats.total), w_size)) + "\n";
    return out;
}

nlohmann::ordered_json stats_to_json(const DatasetStats& stats)
{
    nlohmann::ordered_json j;
    auto& rows = j["rows"] = nlohmann::ordered_json::array();
    for (const auto& r : stats.rows) {
        rows.push_back({{"dataset", r.subset},
                        {"task_tag", to_string(r.task_tag)},
                        {"scenario_tag", to_string(r.scenario_tag)},
                        {"size", r.size}});
    }
    j["total"] = stats.total;
    return j;
}

// ----------------------------------------------------------------- pipeline

namespace {

enum class State { alive, dropped, rejected };

struct Slot {
    State state = State::alive;
    std::optional<InstructionPair> pair;
    std::vector<std::string> references;
    const TaskSchema* schema = nullptr;
    bool expand = false;
};

}  // namespace

PipelineResult run_pipeline(const std::vector<RawRecord>& records, const PipelinePlan& plan, const ForgeContext& ctx,
                            const kb::KnowledgeBase* kb)
{
    {
        std::set<std::string_view> ids;
        for (const auto& r : records) {
            if (!ids.insert(r.source_id).second) {
                throw Error(ErrorCode::InvariantViolation, "duplicate source_id " + r.source_id);
            }
        }
    }
    std::map<std::string_view, const TaskSchema*> schemas;
    for (const auto& s : plan.schemas) schemas.emplace(s.name, &s);

    PipelineResult result;
    std::vector<Slot> slots(records.size());
    auto tally = [&](std::string stage) {
        StageCount c{std::move(stage), 0, 0, 0};
        for (const auto& s : slots) {
            if (s.state == State::alive) ++c.kept;
            if (s.state == State::dropped) ++c.dropped;
            if (s.state == State::rejected) ++c.rejected;
        }
        result.stages.push_back(std::move(c));
    };
    auto drop = [&](std::size_t i, std::string stage, std::string_view reason, State state) {
        slots[i].state = state;
        slots[i].pair.reset();
        result.log.push_back({records[i].source_id, std::move(stage), std::string(reason)});
    };

    // clean: route each record, then pair per schema (records keep input order within a schema).
    std::map<const TaskSchema*, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].schema == plan.expand_route) {
            slots[i].expand = true;
            continue;
        }
        auto it = schemas.find(records[i].schema);
        if (it == schemas.end()) {
            drop(i, "clean", to_string(DropReason::unrouted), State::dropped);
            continue;
        }
        slots[i].schema = it->second;
        groups[it->second].push_back(i);
    }
    std::map<std::string_view, std::size_t> index_of;
    for (std::size_t i = 0; i < records.size(); ++i) index_of.emplace(records[i].source_id, i);
    for (const auto& [schema, members] : groups) {
        std::vector<RawRecord> subset;
        for (auto i : members) subset.push_back(records[i]);
        auto cleaned = clean_and_pair(subset, *schema);
        for (auto& p : cleaned.pairs) {
            auto i = index_of.at(p.source_id);
            slots[i].pair = std::move(p);
        }
        for (const auto& d : cleaned.dropped) drop(index_of.at(d.source_id), "clean", to_string(d.reason), State::dropped);
    }
    // Log entries follow record order regardless of schema grouping.
    std::stable_sort(result.log.begin(), result.log.end(),
                     [&](const LogEntry& a, const LogEntry& b) { return index_of.at(a.source_id) < index_of.at(b.source_id); });
    tally("clean");

    // Runs `fn` over the selected records in parallel; failures are collected per slot
    // and applied in record order so the log is deterministic.
    auto stage = [&](const std::string& name, auto select, auto fn) {
        std::vector<std::size_t> todo;
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (slots[i].state == State::alive && select(i)) todo.push_back(i);
        }
        std::vector<std::optional<std::pair<State, std::string>>> failures(todo.size());
        parallel_for(todo.size(), plan.concurrency, [&](std::size_t k) { failures[k] = fn(todo[k]); });
        for (std::size_t k = 0; k < todo.size(); ++k) {
            if (failures[k]) drop(todo[k], name, failures[k]->second, failures[k]->first);
        }
        tally(name);
    };
    using Failure = std::optional<std::pair<State, std::string>>;

    stage("expand", [&](std::size_t i) { return slots[i].expand; },
          [&](std::size_t i) -> Failure {
              auto parsed = mcq_from_record(records[i]);
              if (auto* reason = std::get_if<DropReason>(&parsed)) {
                  return std::pair{State::dropped, std::string(to_string(*reason))};
              }
              try {
                  slots[i].pair = knowledge_expand(std::get<objective::McqItem>(parsed), ctx);
              } catch (const Error& e) {
                  if (e.code() != ErrorCode::ExpansionInconsistent && e.code() != ErrorCode::InvariantViolation) throw;
                  return std::pair{State::rejected, std::string(to_string(e.code()))};
              }
              return std::nullopt;
          });

    auto in = [&](const std::set<std::string>& names) {
        return [&](std::size_t i) { return slots[i].schema && names.count(slots[i].schema->name) > 0; };
    };

    stage("shape", in(plan.shape), [&](std::size_t i) -> Failure {
        try {
            slots[i].pair = behavior_shape(*slots[i].pair, ctx);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::ShapingRejected) throw;
            return std::pair{State::rejected, std::string(to_string(e.code()))};
        }
        return std::nullopt;
    });

    stage("lcot", in(plan.lcot), [&](std::size_t i) -> Failure {
        try {
            slots[i].pair = develop_thinking(*slots[i].pair, ctx.templates);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::AlreadyWrapped && e.code() != ErrorCode::EmptyInput) throw;
            return std::pair{State::rejected, std::string(to_string(e.code()))};
        }
        return std::nullopt;
    });

    stage("triplet", in(plan.triplet), [&](std::size_t i) -> Failure {
        for (const auto& r : extract_references(raw_text_of(records[i]), plan.patterns, kb)) {
            slots[i].references.push_back(r.render());
        }
        return std::nullopt;
    });

    for (auto& s : slots) {
        if (s.state != State::alive) continue;
        if (s.references.empty()) {
            result.items.emplace_back(std::move(*s.pair));
        } else {
            result.items.emplace_back(InstructionTriplet{std::move(*s.pair), std::move(s.references)});
        }
    }
    std::stable_sort(result.items.begin(), result.items.end(),
                     [](const DatasetItem& a, const DatasetItem& b) { return pair_of(a).source_id < pair_of(b).source_id; });
    return result;
}

PipelinePlan load_plan(const std::filesystem::path& path)
{
    auto j = parse_file(path);
    PipelinePlan plan;
    try {
        for (const auto& s : j.at("schemas")) plan.schemas.push_back(schema_from_json(s, path.string()));
        if (j.contains("shape")) plan.shape = j.at("shape").get<std::set<std::string>>();
        if (j.contains("lcot")) plan.lcot = j.at("lcot").get<std::set<std::string>>();
        if (j.contains("triplet")) plan.triplet = j.at("triplet").get<std::set<std::string>>();
        if (j.contains("expand_route")) plan.expand_route = j.at("expand_route").get<std::string>();
        if (j.contains("concurrency")) plan.concurrency = j.at("concurrency").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
    if (j.contains("patterns")) plan.patterns = PatternSet::from_json(j.at("patterns"));
    return plan;
}

std::optional<gateway::ChatRequest> pipeline_request(const RawRecord& record, const PipelinePlan& plan,
                                                     const ForgeContext& ctx, std::string_view stage, int attempt)
{
    if (stage == "expand") {
        if (record.schema != plan.expand_route) return std::nullopt;
        auto parsed = mcq_from_record(record);
        if (!std::holds_alternative<objective::McqItem>(parsed)) return std::nullopt;
        return expansion_request(std::get<objective::McqItem>(parsed), ctx, attempt);
    }
    if (stage != "shape") throw Error(ErrorCode::InvalidRequest, "no model-backed stage named " + std::string(stage));
    if (plan.shape.count(record.schema) == 0 || record.schema == plan.expand_route) return std::nullopt;
    auto schema = std::find_if(plan.schemas.begin(), plan.schemas.end(),
                               [&](const TaskSchema& s) { return s.name == record.schema; });
    if (schema == plan.schemas.end()) return std::nullopt;
    CleanResult cleaned;
    try {
        cleaned = clean_and_pair({record}, *schema);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::SchemaMismatch) throw;  // a lone record lacking a field
        return std::nullopt;
    }
    if (cleaned.pairs.empty()) return std::nullopt;
    return shaping_request(cleaned.pairs.front(), ctx, attempt);
}

nlohmann::ordered_json stages_to_json(const PipelineResult& result)
{
    nlohmann::ordered_json j;
    auto& stages = j["stages"] = nlohmann::ordered_json::array();
    for (const auto& s : result.stages) {
        stages.push_back({{"stage", s.stage}, {"kept", s.kept}, {"dropped", s.dropped}, {"rejected", s.rejected}});
    }
    auto& log = j["log"] = nlohmann::ordered_json::array();
    for (const auto& e : result.log) log.push_back({{"source_id", e.source_id}, {"stage", e.stage}, {"reason", e.reason}});
    return j;
}

}  // namespace juris::forge
