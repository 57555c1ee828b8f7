#include <doctest.h>

#include <algorithm>
#include <functional>
#include <random>

#include "juris/error.hpp"
#include "juris/eval_objective.hpp"
#include "juris/jsonl.hpp"
#include "juris/text.hpp"
#include "test_support.hpp"

using namespace juris;
using namespace juris::objective;

namespace {

ErrorCode code_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected juris::Error");
    return ErrorCode::IoError;
}

const TemplateSet& shipped_templates()
{
    static const TemplateSet set = TemplateSet::load(testing::template_dir() / "manifest.json");
    return set;
}

std::filesystem::path objective_fixture(const std::string& name) { return testing::fixture_dir() / "objective" / name; }

LetterSet set_of(std::string_view letters) { return LetterSet(letters.begin(), letters.end()); }

McqItem make_item(std::string id, Subject subject, AnswerType type, std::string gold)
{
    McqItem item;
    item.id = std::move(id);
    item.subject = subject;
    item.level = level_of(subject);
    item.answer_type = type;
    item.stem = "题干" + item.id;
    item.options = {{'A', "甲"}, {'B', "乙"}, {'C', "丙"}, {'D', "丁"}};
    item.gold = set_of(gold);
    return item;
}

}  // namespace

TEST_CASE("subject levels")
{
    CHECK(level_of(Subject::CPA) == Level::Hard);
    CHECK(level_of(Subject::NJE) == Level::Hard);
    CHECK(level_of(Subject::PAE) == Level::Hard);
    CHECK(level_of(Subject::UNGEE) == Level::Normal);
    CHECK(level_of(Subject::LBK) == Level::Easy);
    CHECK(level_of(Subject::PFE) == Level::Easy);
}

TEST_CASE("dataset loading validates every invariant")
{
    testing::TempDir dir;
    auto good = item_to_json(make_item("a", Subject::NJE, AnswerType::single, "B"));
    auto two_gold = item_to_json(make_item("b", Subject::NJE, AnswerType::single, "AB"));
    auto bad_letter = item_to_json(make_item("c", Subject::NJE, AnswerType::single, "B"));
    bad_letter["gold"] = "E";
    auto bad_level = item_to_json(make_item("d", Subject::LBK, AnswerType::single, "A"));
    bad_level["level"] = "Hard";
    auto one_multi = item_to_json(make_item("e", Subject::PAE, AnswerType::multi, "A"));

    jsonl::write(dir.path() / "ok.jsonl", {good});
    auto items = load_dataset(dir.path() / "ok.jsonl");
    REQUIRE(items.size() == 1);
    CHECK(items[0].gold == set_of("B"));
    CHECK(items[0].option_letters() == "ABCD");

    jsonl::write(dir.path() / "bad.jsonl", {good, two_gold, bad_letter, bad_level, one_multi});
    try {
        load_dataset(dir.path() / "bad.jsonl");
        FAIL("expected InvariantViolation");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvariantViolation);
        std::string msg = e.what();
        CHECK(msg.find("line 2") != std::string::npos);
        CHECK(msg.find("line 3") != std::string::npos);
        CHECK(msg.find("line 4") != std::string::npos);
        CHECK(msg.find("line 5") != std::string::npos);
        CHECK(msg.find("line 1:") == std::string::npos);
    }

    jsonl::write_file(dir.path() / "broken.jsonl", "{\"id\": 1\n");
    CHECK(code_of([&] { load_dataset(dir.path() / "broken.jsonl"); }) == ErrorCode::ParseError);
}

TEST_CASE("fixture datasets load")
{
    auto items = load_dataset(objective_fixture("dataset24.jsonl"));
    CHECK(items.size() == 24);
    auto pool = load_dataset(objective_fixture("exemplar_pool.jsonl"));
    CHECK(pool.size() == 40);
}

TEST_CASE("extraction corpus agrees with its labels")
{
    auto corpus = jsonl::read(objective_fixture("extraction_corpus.jsonl"));
    REQUIRE(corpus.size() >= 50);
    for (const auto& line : corpus) {
        const auto& row = line.value;
        auto out = extract_answer(row["response"].get<std::string>(), row["options"].get<std::string>());
        INFO("line " << line.number << ": " << row["response"].get<std::string>());
        CHECK(letters_string(out.letters) == row["expected"].get<std::string>());
        CHECK(to_string(out.rule) == row["rule"].get<std::string>());
    }
}

TEST_CASE("extraction is total and stays within the options")
{
    std::mt19937 rng(11);
    const std::vector<std::string> pieces = {"答案", "是", "为", "：", ":", "A", "B", "C", "D", "E", "Z", "a", "ｂ",
                                             "Ｃ", "\n", " ", "、", "和", "answer", " is ", "选项", "。", "\xff", "法"};
    for (int i = 0; i < 3000; ++i) {
        std::string s;
        int n = static_cast<int>(rng() % 20);
        for (int k = 0; k < n; ++k) s += pieces[rng() % pieces.size()];
        std::string options = i % 2 ? "ABCD" : "AB";
        ExtractionOutcome out;
        CHECK_NOTHROW(out = extract_answer(s, options));
        for (char c : out.letters) CHECK(options.find(c) != std::string::npos);
        CHECK((out.rule == ExtractionRule::none) == out.letters.empty());
        CHECK(out.raw_response == s);
    }
}

TEST_CASE("exact set scoring")
{
    CHECK(score_item(set_of("B"), set_of("B")));
    CHECK_FALSE(score_item(set_of("A"), set_of("AC")));
    CHECK_FALSE(score_item(set_of(""), set_of("D")));
    CHECK_FALSE(score_item(set_of("ACD"), set_of("AC")));
}

TEST_CASE("few-shot prompts")
{
    const auto& templates = shipped_templates();
    auto dataset = load_dataset(objective_fixture("dataset24.jsonl"));
    auto pool = load_dataset(objective_fixture("exemplar_pool.jsonl"));
    std::set<std::string> scored;
    for (const auto& i : dataset) scored.insert(i.id);
    auto profile = testing::replay_profile();
    FewShotConfig config{.seed = 7};

    auto count_answers = [](const std::string& s) {
        std::size_t n = 0;
        for (auto pos = s.find("答案："); pos != std::string::npos; pos = s.find("答案：", pos + 1)) ++n;
        return n;
    };

    for (const auto& item : dataset) {
        auto req = build_prompt(item, config, pool, scored, templates, profile, "candidate");
        const auto& content = req.messages.at(0).content;
        // exemplar answers + the open slot for the target (+1 for the header's quoted 答案：)
        std::size_t shots = item.answer_type == AnswerType::single ? 4 : 5;
        CHECK(count_answers(content) == shots + 2);
        CHECK(content.find(format_question(item) + "\n答案：") != std::string::npos);
        auto again = build_prompt(item, config, pool, scored, templates, profile, "candidate");
        CHECK(again.messages[0].content == content);
        CHECK(again.request_tag == req.request_tag);

        auto exemplars = select_exemplars(item, config, pool, scored);
        for (const auto* e : exemplars) {
            CHECK(e->answer_type == item.answer_type);
            CHECK(scored.count(e->id) == 0);
        }
        // Same-subject exemplars come first.
        bool seen_other = false;
        for (const auto* e : exemplars) {
            if (e->subject != item.subject) seen_other = true;
            else CHECK_FALSE(seen_other);
        }
    }

    auto single = dataset[0];
    auto other_seed = build_prompt(single, {.seed = 8}, pool, scored, templates, profile, "candidate");
    CHECK(other_seed.messages[0].content != build_prompt(single, config, pool, scored, templates, profile, "candidate").messages[0].content);

    // A pool overlapping the scored set never contributes those items.
    std::vector<McqItem> overlapping = pool;
    overlapping.insert(overlapping.end(), dataset.begin(), dataset.end());
    for (const auto& item : dataset) {
        for (const auto* e : select_exemplars(item, config, overlapping, scored)) CHECK(scored.count(e->id) == 0);
    }

    std::vector<McqItem> tiny(pool.begin(), pool.begin() + 3);
    CHECK(code_of([&] { select_exemplars(single, config, tiny, scored); }) == ErrorCode::ExemplarShortage);
}

TEST_CASE("aggregation")
{
    SUBCASE("all correct")
    {
        std::vector<ItemResult> results;
        results.push_back({"1", Subject::NJE, AnswerType::single, true});
        results.push_back({"2", Subject::NJE, AnswerType::multi, true});
        results.push_back({"3", Subject::UNGEE, AnswerType::single, true});
        results.push_back({"4", Subject::LBK, AnswerType::single, true});
        auto report = aggregate(results);
        for (const auto& [key, cell] : report.cells) CHECK(text::percent2_half_up(cell.correct, cell.total) == "100.00");
        CHECK(report.micro_average == 100.0);
    }

    SUBCASE("double count and empty")
    {
        std::vector<ItemResult> results;
        results.push_back({"1", Subject::NJE, AnswerType::single, true});
        results.push_back({"1", Subject::NJE, AnswerType::single, false});
        CHECK(code_of([&] { aggregate(results); }) == ErrorCode::DoubleCount);
        CHECK(code_of([&] { aggregate({}); }) == ErrorCode::EmptyDataset);
    }

    SUBCASE("micro-average identity and permutation invariance")
    {
        std::mt19937 rng(3);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<ItemResult> results;
            std::int64_t correct = 0;
            int n = 1 + static_cast<int>(rng() % 200);
            for (int i = 0; i < n; ++i) {
                ItemResult r;
                r.id = "i" + std::to_string(i);
                r.subject = kSubjects[rng() % kSubjects.size()];
                r.answer_type = rng() % 2 ? AnswerType::single : AnswerType::multi;
                r.correct = rng() % 3 == 0;
                correct += r.correct;
                results.push_back(r);
            }
            auto report = aggregate(results, "m");
            CHECK(report.micro_average == 100.0 * static_cast<double>(correct) / n);
            std::shuffle(results.begin(), results.end(), rng);
            auto shuffled = aggregate(results, "m");
            CHECK(report_to_json(shuffled) == report_to_json(report));
            CHECK(render_report(shuffled) == render_report(report));
        }
    }
}

TEST_CASE("report layout")
{
    // Published row for the domain model; counts per subject cell.
    const std::vector<std::pair<CellKey, std::pair<double, std::int64_t>>> row = {
        {{Subject::NJE, AnswerType::single}, {42.09, 537}}, {{Subject::NJE, AnswerType::multi}, {19.87, 463}},
        {{Subject::PAE, AnswerType::single}, {40.68, 118}}, {{Subject::PAE, AnswerType::multi}, {18.48, 276}},
        {{Subject::CPA, AnswerType::single}, {39.59, 197}}, {{Subject::CPA, AnswerType::multi}, {19.17, 120}},
        {{Subject::UNGEE, AnswerType::single}, {50.94, 320}}, {{Subject::UNGEE, AnswerType::multi}, {25.29, 87}},
        {{Subject::PFE, AnswerType::single}, {57.06, 170}}, {{Subject::LBK, AnswerType::single}, {54.91, 275}},
    };
    std::map<CellKey, Cell> cells;
    for (const auto& [key, v] : row) cells[key] = {tally_from_accuracy(v.first, v.second), v.second};
    auto report = aggregate_cells(cells, "DISC-LawLLM");
    auto text = render_report(report);
    CHECK(text ==
          "             Hard                                            Normal          Easy\n"
          "             NJE             PAE             CPA             UNGEE           PFE     LBK\n"
          "Model        S       M       S       M       S       M       S       M       S       S       Average\n"
          "DISC-LawLLM  42.09   19.87   40.68   18.48   39.59   19.17   50.94   25.29   57.06   54.91   37.10\n");
}

TEST_CASE("end-to-end objective run under replay")
{
    auto dataset = load_dataset(objective_fixture("dataset24.jsonl"));
    auto pool = load_dataset(objective_fixture("exemplar_pool.jsonl"));
    const auto& templates = shipped_templates();
    auto transport = std::make_shared<testing::ScriptedTransport>(
        [](const gateway::ChatRequest&) { return gateway::TransportReply{500, {}, gateway::FinishReason::error, ""}; });
    gateway::Gateway gw(transport, testing::no_sleep_options());
    auto profile = testing::replay_profile("objective");

    std::set<std::string> scored;
    for (const auto& i : dataset) scored.insert(i.id);
    EvaluateOptions options{.few_shot = {.seed = 7}, .model = "candidate", .concurrency = 4};
    auto store = gw.transcripts(profile);
    for (const auto& line : jsonl::read(objective_fixture("responses24.jsonl"))) {
        auto id = line.value["id"].get<std::string>();
        auto it = std::find_if(dataset.begin(), dataset.end(), [&](const McqItem& m) { return m.id == id; });
        REQUIRE(it != dataset.end());
        auto req = build_prompt(*it, options.few_shot, pool, scored, templates, profile, "candidate");
        store->append({req.request_tag, line.value["response"].get<std::string>(), gateway::FinishReason::stop});
    }

    auto expected = nlohmann::json::parse(jsonl::read_file(objective_fixture("expected24.json")));
    auto report = evaluate(gw, profile, dataset, pool, templates, options);
    for (const auto& c : expected["cells"]) {
        CellKey key{*subject_from_string(c[0].get<std::string>()), *answer_type_from_string(c[1].get<std::string>())};
        REQUIRE(report.cells.count(key));
        CHECK(report.cells[key].correct == c[2].get<std::int64_t>());
        CHECK(report.cells[key].total == c[3].get<std::int64_t>());
    }
    CHECK(report.cells.size() == expected["cells"].size());
    CHECK(report.overall.correct == expected["correct"].get<std::int64_t>());
    CHECK(report.errors == expected["errors"].get<std::int64_t>());
    CHECK(report_to_json(report)["micro_average"] == expected["micro_average"]);
    for (const auto& [name, counts] : expected["levels"].items()) {
        CHECK(report.levels[*level_from_string(name)].correct == counts[0].get<std::int64_t>());
        CHECK(report.levels[*level_from_string(name)].total == counts[1].get<std::int64_t>());
    }
    CHECK(transport->calls == 0);

    options.concurrency = 1;
    auto serial = evaluate(gw, profile, dataset, pool, templates, options);
    CHECK(render_report(serial) == render_report(report));
    CHECK(report_to_json(serial).dump() == report_to_json(report).dump());

    CHECK(code_of([&] { evaluate(gw, profile, {}, pool, templates, options); }) == ErrorCode::EmptyDataset);
}
