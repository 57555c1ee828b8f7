#include "juris/eval_objective.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "juris/error.hpp"
#include "juris/hashing.hpp"
#include "juris/jsonl.hpp"
#include "juris/parallel.hpp"
#include "juris/text.hpp"

namespace juris::objective {

namespace {

constexpr std::array<std::string_view, 6> kSubjectNames = {"NJE", "PAE", "CPA", "UNGEE", "PFE", "LBK"};

bool is_ascii_letter(char32_t c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z'); }

char32_t fold_fullwidth(char32_t c)
{
    if (c >= 0xFF21 && c <= 0xFF3A) return c - 0xFEE0;  // Ａ-Ｚ
    if (c >= 0xFF41 && c <= 0xFF5A) return c - 0xFEE0;  // ａ-ｚ
    return c;
}

bool is_letter_separator(char32_t c)
{
    return c == ' ' || c == '\t' || c == ',' || c == 0xFF0C /*，*/ || c == 0x3001 /*、*/ || c == 0x548C /*和*/ ||
           c == 0x53CA /*及*/ || c == 0x4E0E /*与*/ || c == 0x3000;
}

// Maximal ASCII-letter run at `pos`; returns its end.
std::size_t letter_run_end(const std::u32string& s, std::size_t pos)
{
    while (pos < s.size() && is_ascii_letter(s[pos])) ++pos;
    return pos;
}

bool run_is_options(const std::u32string& s, std::size_t begin, std::size_t end, std::string_view valid)
{
    if (begin == end) return false;
    for (std::size_t i = begin; i < end; ++i) {
        if (s[i] < 'A' || s[i] > 'Z' || valid.find(static_cast<char>(s[i])) == std::string_view::npos) return false;
    }
    return true;
}

bool match_ci(const std::u32string& s, std::size_t pos, std::string_view word)
{
    if (pos + word.size() > s.size()) return false;
    for (std::size_t i = 0; i < word.size(); ++i) {
        char32_t c = s[pos + i];
        if (c >= 'A' && c <= 'Z') c += 'a' - 'A';
        if (c != static_cast<unsigned char>(word[i])) return false;
    }
    return true;
}

// Option letters starting exactly at `pos`, possibly separated ("A、C", "A, C", "AC").
std::optional<LetterSet> letters_at(const std::u32string& s, std::size_t pos, std::string_view valid)
{
    LetterSet out;
    while (true) {
        std::size_t end = letter_run_end(s, pos);
        if (!run_is_options(s, pos, end, valid)) break;
        for (std::size_t i = pos; i < end; ++i) out.insert(static_cast<char>(s[i]));
        std::size_t q = end;
        while (q < s.size() && is_letter_separator(s[q])) ++q;
        if (q > end && match_ci(s, q, "and") && q + 3 < s.size() && s[q + 3] == ' ') {
            q += 3;
            while (q < s.size() && is_letter_separator(s[q])) ++q;
        }
        if (q == end || q >= s.size() || !is_ascii_letter(s[q])) break;
        pos = q;
    }
    if (out.empty()) return std::nullopt;
    return out;
}

// End of an explicit-answer phrase starting at `pos`, or npos.
std::size_t explicit_phrase_end(const std::u32string& s, std::size_t pos)
{
    static const std::u32string kDaAn = U"答案";
    if (s.compare(pos, kDaAn.size(), kDaAn) == 0) {
        std::size_t p = pos + kDaAn.size();
        if (p < s.size() && (s[p] == U'是' || s[p] == U'为' || s[p] == ':' || s[p] == U'：')) return p + 1;
        return std::u32string::npos;
    }
    if (match_ci(s, pos, "answer") && (pos == 0 || !is_ascii_letter(s[pos - 1]))) {
        std::size_t p = pos + 6;
        if (p < s.size() && (s[p] == ':' || s[p] == U'：')) return p + 1;
        std::size_t q = p;
        while (q < s.size() && s[q] == ' ') ++q;
        if (q > p && match_ci(s, q, "is") && (q + 2 >= s.size() || !is_ascii_letter(s[q + 2]))) return q + 2;
    }
    return std::u32string::npos;
}

std::size_t skip_answer_filler(const std::u32string& s, std::size_t p)
{
    static const std::u32string kXuanXiang = U"选项";
    while (p < s.size()) {
        if (s[p] == ' ' || s[p] == '\t' || s[p] == ':' || s[p] == U'：' || s[p] == 0x3000) {
            ++p;
        } else if (s.compare(p, kXuanXiang.size(), kXuanXiang) == 0) {
            p += kXuanXiang.size();
        } else if (match_ci(s, p, "options") && !is_ascii_letter(p + 7 < s.size() ? s[p + 7] : U' ')) {
            p += 7;
        } else if (match_ci(s, p, "option") && !is_ascii_letter(p + 6 < s.size() ? s[p + 6] : U' ')) {
            p += 6;
        } else {
            break;
        }
    }
    return p;
}

std::uint64_t exemplar_rank(std::uint64_t seed, const std::string& target, const std::string& candidate)
{
    return sha256_u64(std::to_string(seed) + "\x1f" + target + "\x1f" + candidate);
}

std::string cell_text(const AccuracyReport& r, const CellKey& key)
{
    auto it = r.cells.find(key);
    if (it == r.cells.end() || it->second.total == 0) return "-";
    return text::percent2_half_up(it->second.correct, it->second.total);
}

std::string pad(std::string s, std::size_t width)
{
    std::size_t w = text::codepoint_count(s);
    if (w < width) s.append(width - w, ' ');
    return s;
}

}  // namespace

std::string_view to_string(Subject s) noexcept { return kSubjectNames[static_cast<std::size_t>(s)]; }

std::string_view to_string(Level l) noexcept
{
    switch (l) {
        case Level::Hard: return "Hard";
        case Level::Normal: return "Normal";
        case Level::Easy: return "Easy";
    }
    return "?";
}

std::string_view to_string(AnswerType t) noexcept { return t == AnswerType::single ? "single" : "multi"; }

std::string_view to_string(ExtractionRule r) noexcept
{
    switch (r) {
        case ExtractionRule::explicit_answer: return "explicit_answer";
        case ExtractionRule::standalone_letters: return "standalone_letters";
        case ExtractionRule::fallback_scan: return "fallback_scan";
        case ExtractionRule::none: return "none";
    }
    return "?";
}

std::optional<Subject> subject_from_string(std::string_view s)
{
    for (std::size_t i = 0; i < kSubjectNames.size(); ++i) {
        if (kSubjectNames[i] == s) return static_cast<Subject>(i);
    }
    return std::nullopt;
}

std::optional<Level> level_from_string(std::string_view s)
{
    if (s == "Hard") return Level::Hard;
    if (s == "Normal") return Level::Normal;
    if (s == "Easy") return Level::Easy;
    return std::nullopt;
}

std::optional<AnswerType> answer_type_from_string(std::string_view s)
{
    if (s == "single") return AnswerType::single;
    if (s == "multi") return AnswerType::multi;
    return std::nullopt;
}

Level level_of(Subject s) noexcept
{
    switch (s) {
        case Subject::NJE:
        case Subject::PAE:
        case Subject::CPA: return Level::Hard;
        case Subject::UNGEE: return Level::Normal;
        case Subject::PFE:
        case Subject::LBK: return Level::Easy;
    }
    return Level::Hard;
}

std::string letters_string(const LetterSet& letters) { return std::string(letters.begin(), letters.end()); }

std::string McqItem::option_letters() const
{
    std::string out;
    for (const auto& [letter, text] : options) out += letter;
    return out;
}

std::vector<std::string> check_invariants(const McqItem& item)
{
    std::vector<std::string> problems;
    if (item.id.empty()) problems.push_back("empty id");
    if (text::is_blank(item.stem)) problems.push_back("empty stem");
    if (item.options.size() < 2) problems.push_back("fewer than 2 options");
    for (std::size_t i = 0; i < item.options.size(); ++i) {
        if (item.options[i].first != static_cast<char>('A' + i)) {
            problems.push_back("option letters must run A, B, C, ... in order");
            break;
        }
    }
    if (item.gold.empty()) problems.push_back("empty gold set");
    auto letters = item.option_letters();
    for (char g : item.gold) {
        if (letters.find(g) == std::string::npos) problems.push_back(std::string("gold letter ") + g + " is not an option");
    }
    if (item.answer_type == AnswerType::single && item.gold.size() != 1) {
        problems.push_back("single-answer item has " + std::to_string(item.gold.size()) + " gold letters");
    }
    if (item.answer_type == AnswerType::multi && item.gold.size() < 2) {
        problems.push_back("multi-answer item has fewer than 2 gold letters");
    }
    if (item.level != level_of(item.subject)) {
        problems.push_back(std::string("level ") + std::string(to_string(item.level)) + " does not match subject " +
                           std::string(to_string(item.subject)));
    }
    return problems;
}

McqItem item_from_json(const nlohmann::json& j)
{
    McqItem item;
    try {
        item.id = j.at("id").get<std::string>();
        auto subject = subject_from_string(j.at("subject").get<std::string>());
        if (!subject) throw Error(ErrorCode::ParseError, "unknown subject " + j.at("subject").get<std::string>());
        item.subject = *subject;
        item.level = level_of(item.subject);
        if (j.contains("level")) {
            auto level = level_from_string(j.at("level").get<std::string>());
            if (!level) throw Error(ErrorCode::ParseError, "unknown level " + j.at("level").get<std::string>());
            item.level = *level;
        }
        auto type = answer_type_from_string(j.at("answer_type").get<std::string>());
        if (!type) throw Error(ErrorCode::ParseError, "unknown answer_type " + j.at("answer_type").get<std::string>());
        item.answer_type = *type;
        item.stem = j.at("stem").get<std::string>();
        for (const auto& [key, value] : j.at("options").items()) {
            if (key.size() != 1 || key[0] < 'A' || key[0] > 'Z') throw Error(ErrorCode::ParseError, "bad option key " + key);
            item.options.emplace_back(key[0], value.get<std::string>());
        }
        std::sort(item.options.begin(), item.options.end());
        const auto& gold = j.at("gold");
        std::string gold_letters;
        if (gold.is_string()) {
            gold_letters = gold.get<std::string>();
        } else {
            for (const auto& g : gold) gold_letters += g.get<std::string>();
        }
        for (char c : gold_letters) item.gold.insert(c);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, e.what());
    }
    auto problems = check_invariants(item);
    if (!problems.empty()) {
        std::string msg = "item " + item.id + ":";
        for (const auto& p : problems) msg += " " + p + ";";
        throw Error(ErrorCode::InvariantViolation, msg);
    }
    return item;
}

nlohmann::ordered_json item_to_json(const McqItem& item)
{
    nlohmann::ordered_json j;
    j["id"] = item.id;
    j["subject"] = to_string(item.subject);
    j["level"] = to_string(item.level);
    j["answer_type"] = to_string(item.answer_type);
    j["stem"] = item.stem;
    auto& options = j["options"] = nlohmann::ordered_json::object();
    for (const auto& [letter, text] : item.options) options[std::string(1, letter)] = text;
    j["gold"] = letters_string(item.gold);
    return j;
}

std::vector<McqItem> load_dataset(const std::filesystem::path& path)
{
    std::vector<McqItem> items;
    std::vector<std::string> violations;
    for (const auto& line : jsonl::read(path)) {
        try {
            items.push_back(item_from_json(line.value));
        } catch (const Error& e) {
            if (e.code() == ErrorCode::ParseError) {
                throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line.number) + ": " + e.what());
            }
            violations.push_back("line " + std::to_string(line.number) + ": " + e.what());
        }
    }
    if (!violations.empty()) {
        std::string msg = path.string();
        for (const auto& v : violations) msg += "\n  " + v;
        throw Error(ErrorCode::InvariantViolation, msg);
    }
    return items;
}

std::string format_question(const McqItem& item)
{
    std::string out = item.stem;
    for (const auto& [letter, text] : item.options) {
        out += "\n";
        out += letter;
        out += ". ";
        out += text;
    }
    return out;
}

std::vector<const McqItem*> select_exemplars(const McqItem& item, const FewShotConfig& config,
                                             const std::vector<McqItem>& pool, const std::set<std::string>& excluded)
{
    const std::size_t n = static_cast<std::size_t>(item.answer_type == AnswerType::single ? config.n_single : config.n_multi);
    std::vector<std::pair<std::uint64_t, const McqItem*>> same_subject, other_subject;
    for (const auto& candidate : pool) {
        if (candidate.answer_type != item.answer_type || candidate.id == item.id || excluded.count(candidate.id)) continue;
        auto rank = exemplar_rank(config.seed, item.id, candidate.id);
        (candidate.subject == item.subject ? same_subject : other_subject).emplace_back(rank, &candidate);
    }
    auto by_rank = [](const auto& a, const auto& b) { return a.first != b.first ? a.first < b.first : a.second->id < b.second->id; };
    std::sort(same_subject.begin(), same_subject.end(), by_rank);
    std::sort(other_subject.begin(), other_subject.end(), by_rank);

    std::vector<const McqItem*> chosen;
    for (const auto& [rank, c] : same_subject) {
        if (chosen.size() == n) break;
        chosen.push_back(c);
    }
    for (const auto& [rank, c] : other_subject) {
        if (chosen.size() == n) break;
        chosen.push_back(c);
    }
    if (chosen.size() < n) {
        throw Error(ErrorCode::ExemplarShortage, "item " + item.id + " needs " + std::to_string(n) + " " +
                                                     std::string(to_string(item.answer_type)) +
                                                     " exemplars, pool has " + std::to_string(chosen.size()));
    }
    return chosen;
}

gateway::ChatRequest build_prompt(const McqItem& item, const FewShotConfig& config, const std::vector<McqItem>& pool,
                                  const std::set<std::string>& excluded, const TemplateSet& templates,
                                  const gateway::ProviderProfile& profile, const std::string& model)
{
    auto exemplars = select_exemplars(item, config, pool, excluded);
    std::string block;
    for (std::size_t i = 0; i < exemplars.size(); ++i) {
        if (i) block += "\n\n";
        block += format_question(*exemplars[i]);
        block += "\n答案：";
        block += letters_string(exemplars[i]->gold);
    }
    const auto& tmpl = templates.get(item.answer_type == AnswerType::single ? "eval.objective.single" : "eval.objective.multi");
    auto content = tmpl.render({{"exemplars", block}, {"question", format_question(item)}});
    return gateway::make_request(profile.provider_id, model.empty() ? profile.default_model : model,
                                 {{gateway::Role::user, std::move(content)}});
}

ExtractionOutcome extract_answer(std::string_view response, std::string_view option_letters)
{
    ExtractionOutcome out;
    out.raw_response = std::string(response);
    std::u32string s;
    for (char32_t c : text::decode_utf8(response)) s.push_back(fold_fullwidth(c));

    // Rule 1: the last explicit-answer phrase followed by option letters.
    for (std::size_t pos = 0; pos < s.size(); ++pos) {
        std::size_t end = explicit_phrase_end(s, pos);
        if (end == std::u32string::npos) continue;
        std::size_t start = skip_answer_filler(s, end);
        if (auto letters = letters_at(s, start, option_letters)) {
            out.letters = *letters;
            out.rule = ExtractionRule::explicit_answer;
        }
    }
    if (out.rule != ExtractionRule::none) return out;

    // Rule 2: the last line made only of option letters and separators.
    std::size_t line_start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i < s.size() && s[i] != '\n') continue;
        std::size_t b = line_start;
        std::size_t e = i;
        if (e > b && s[e - 1] == '\r') --e;
        while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == 0x3000)) ++b;
        while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == 0x3000)) --e;
        if (b < e && is_ascii_letter(s[b])) {
            std::u32string line = s.substr(b, e - b);
            LetterSet letters;
            bool ok = true;
            std::size_t p = 0;
            while (p < line.size()) {
                if (is_letter_separator(line[p]) && line[p] != 0x548C && line[p] != 0x53CA && line[p] != 0x4E0E) {
                    ++p;
                    continue;
                }
                std::size_t run_end = letter_run_end(line, p);
                if (!run_is_options(line, p, run_end, option_letters)) {
                    ok = false;
                    break;
                }
                for (std::size_t k = p; k < run_end; ++k) letters.insert(static_cast<char>(line[k]));
                p = run_end;
            }
            if (ok && !letters.empty()) {
                out.letters = letters;
                out.rule = ExtractionRule::standalone_letters;
            }
        }
        line_start = i + 1;
    }
    if (out.rule != ExtractionRule::none) return out;

    // Rule 3: the first letter run, bounded by non-letters, made only of option letters.
    for (std::size_t pos = 0; pos < s.size();) {
        if (!is_ascii_letter(s[pos])) {
            ++pos;
            continue;
        }
        std::size_t end = letter_run_end(s, pos);
        if (run_is_options(s, pos, end, option_letters)) {
            for (std::size_t k = pos; k < end; ++k) out.letters.insert(static_cast<char>(s[k]));
            out.rule = ExtractionRule::fallback_scan;
            return out;
        }
        pos = end;
    }
    return out;
}

AccuracyReport aggregate(std::vector<ItemResult> results, std::string model)
{
    if (results.empty()) throw Error(ErrorCode::EmptyDataset, "no scored items");
    std::sort(results.begin(), results.end(), [](const ItemResult& a, const ItemResult& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < results.size(); ++i) {
        if (results[i].id == results[i - 1].id) throw Error(ErrorCode::DoubleCount, "item " + results[i].id + " scored twice");
    }
    std::map<CellKey, Cell> cells;
    std::int64_t errors = 0;
    for (const auto& r : results) {
        auto& cell = cells[{r.subject, r.answer_type}];
        ++cell.total;
        if (r.correct) ++cell.correct;
        if (r.errored) ++errors;
    }
    auto report = aggregate_cells(cells, std::move(model));
    report.errors = errors;
    report.items = std::move(results);
    return report;
}

AccuracyReport aggregate_cells(const std::map<CellKey, Cell>& cells, std::string model)
{
    AccuracyReport report;
    report.model = std::move(model);
    for (const auto& [key, cell] : cells) {
        if (cell.total == 0) continue;
        if (cell.correct < 0 || cell.correct > cell.total) {
            throw Error(ErrorCode::InvariantViolation, "cell correct count outside [0, total]");
        }
        report.cells[key] = cell;
        auto& level = report.levels[level_of(key.first)];
        level.correct += cell.correct;
        level.total += cell.total;
        report.overall.correct += cell.correct;
        report.overall.total += cell.total;
    }
    if (report.overall.total == 0) throw Error(ErrorCode::EmptyDataset, "no scored items");
    report.micro_average = report.overall.accuracy();
    return report;
}

std::int64_t tally_from_accuracy(double accuracy_percent, std::int64_t total)
{
    return static_cast<std::int64_t>(std::llround(accuracy_percent * static_cast<double>(total) / 100.0));
}

std::vector<CellKey> report_columns(const std::vector<const AccuracyReport*>& reports)
{
    std::vector<CellKey> columns;
    for (Subject s : kSubjects) {
        columns.emplace_back(s, AnswerType::single);
        bool has_multi = s != Subject::PFE && s != Subject::LBK;
        for (const auto* r : reports) has_multi = has_multi || r->cells.count({s, AnswerType::multi});
        if (has_multi) columns.emplace_back(s, AnswerType::multi);
    }
    return columns;
}

std::string render_report(const std::vector<const AccuracyReport*>& reports)
{
    constexpr std::size_t kCol = 8;
    auto columns = report_columns(reports);
    std::size_t first = 5;
    for (const auto* r : reports) first = std::max(first, text::codepoint_count(r->model));
    first += 2;

    std::string level_row = pad("", first);
    std::string subject_row = pad("", first);
    std::string type_row = pad("Model", first);
    for (std::size_t i = 0; i < columns.size(); ++i) {
        const auto [subject, type] = columns[i];
        bool new_subject = i == 0 || columns[i - 1].first != subject;
        bool new_level = i == 0 || level_of(columns[i - 1].first) != level_of(subject);
        level_row += pad(new_level ? std::string(to_string(level_of(subject))) : "", kCol);
        subject_row += pad(new_subject ? std::string(to_string(subject)) : "", kCol);
        type_row += pad(type == AnswerType::single ? "S" : "M", kCol);
    }
    type_row += "Average";

    auto rstrip = [](std::string s) {
        while (!s.empty() && s.back() == ' ') s.pop_back();
        return s;
    };
    std::string out = rstrip(level_row) + "\n" + rstrip(subject_row) + "\n" + type_row + "\n";
    std::string notes;
    for (const auto* r : reports) {
        std::string row = pad(r->model.empty() ? "-" : r->model, first);
        for (const auto& key : columns) row += pad(cell_text(*r, key), kCol);
        row += text::percent2_half_up(r->overall.correct, r->overall.total);
        out += row + "\n";
        if (r->errors > 0) {
            notes += "* " + (r->model.empty() ? std::string("-") : r->model) + ": " + std::to_string(r->errors) +
                     " item(s) failed after retries and were scored incorrect\n";
        }
    }
    return out + notes;
}

std::string render_report(const AccuracyReport& report) { return render_report(std::vector<const AccuracyReport*>{&report}); }

nlohmann::ordered_json report_to_json(const AccuracyReport& report)
{
    nlohmann::ordered_json j;
    j["model"] = report.model;
    auto& cells = j["cells"] = nlohmann::ordered_json::array();
    for (const auto& [key, cell] : report.cells) {
        cells.push_back({{"subject", to_string(key.first)},
                         {"answer_type", to_string(key.second)},
                         {"level", to_string(level_of(key.first))},
                         {"correct", cell.correct},
                         {"total", cell.total},
                         {"accuracy", text::percent2_half_up(cell.correct, cell.total)}});
    }
    auto& levels = j["levels"] = nlohmann::ordered_json::array();
    for (const auto& [level, cell] : report.levels) {
        levels.push_back({{"level", to_string(level)},
                          {"correct", cell.correct},
                          {"total", cell.total},
                          {"accuracy", text::percent2_half_up(cell.correct, cell.total)}});
    }
    j["correct"] = report.overall.correct;
    j["total"] = report.overall.total;
    j["micro_average"] = text::percent2_half_up(report.overall.correct, report.overall.total);
    j["errors"] = report.errors;
    auto& items = j["items"] = nlohmann::ordered_json::array();
    for (const auto& r : report.items) {
        nlohmann::ordered_json row;
        row["id"] = r.id;
        row["subject"] = to_string(r.subject);
        row["answer_type"] = to_string(r.answer_type);
        row["gold"] = letters_string(r.gold);
        row["extracted"] = letters_string(r.extracted);
        row["rule"] = to_string(r.rule);
        row["correct"] = r.correct;
        if (r.errored) row["error"] = r.error;
        items.push_back(std::move(row));
    }
    return j;
}

AccuracyReport evaluate(gateway::Gateway& gateway, const gateway::ProviderProfile& profile,
                        const std::vector<McqItem>& dataset, const std::vector<McqItem>& pool,
                        const TemplateSet& templates, const EvaluateOptions& options)
{
    if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "dataset has no items");
    std::set<std::string> scored;
    for (const auto& item : dataset) scored.insert(item.id);

    std::vector<gateway::ChatRequest> prompts;
    prompts.reserve(dataset.size());
    for (const auto& item : dataset) {
        prompts.push_back(build_prompt(item, options.few_shot, pool, scored, templates, profile, options.model));
    }

    std::vector<ItemResult> results(dataset.size());
    parallel_for(dataset.size(), options.concurrency, [&](std::size_t i) {
        const auto& item = dataset[i];
        ItemResult& r = results[i];
        r.id = item.id;
        r.subject = item.subject;
        r.answer_type = item.answer_type;
        r.gold = item.gold;
        try {
            r.response = gateway.complete(prompts[i], profile).text;
            auto outcome = extract_answer(r.response, item.option_letters());
            r.extracted = outcome.letters;
            r.rule = outcome.rule;
            r.correct = score_item(r.extracted, r.gold);
        } catch (const Error& e) {
            r.errored = true;
            r.error = e.what();
        }
    });
    return aggregate(std::move(results), options.model.empty() ? profile.default_model : options.model);
}

}  // namespace juris::objective
