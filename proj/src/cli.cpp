#include <map>
#include <ostream>

#include <CLI11.hpp>

#include "juris/cli.hpp"
#include "juris/error.hpp"

namespace juris::cli {

namespace {

using Action = std::function<void(Operations&, const WorkbenchConfig&, std::ostream&)>;

/// Leaves `field` alone when the flag was given, otherwise takes the config value.
template <class T, class V>
void fallback(const CLI::Option* flag, T& field, const V& value)
{
    if (flag->count() == 0) field = value;
}

std::string str(const std::filesystem::path& p) { return p.empty() ? std::string() : p.string(); }

struct Parser {
    CLI::App app{"Legal consultation and evaluation workbench", "juris"};
    std::string config_path;
    int concurrency = 0;
    CLI::Option* concurrency_flag = nullptr;
    std::map<const CLI::App*, Action> actions;

    Parser()
    {
        app.require_subcommand(1);
        app.fallthrough();
        app.add_option("--config", config_path, "Workbench config (YAML); default ./juris.yaml when present")
            ->check(CLI::ExistingFile);
        concurrency_flag = app.add_option("--concurrency", concurrency, "Cap for every bounded worker pool")
                               ->check(CLI::PositiveNumber);
        add_kb();
        add_forge();
        add_eval();
        add_gateway();
        add_serve();
    }

    int pool_size(const WorkbenchConfig& cfg) const { return concurrency_flag->count() ? concurrency : cfg.concurrency; }

    void add_kb()
    {
        auto* kb = app.add_subcommand("kb", "Knowledge base management");
        kb->require_subcommand(1);

        auto* ingest = kb->add_subcommand("ingest", "Add documents (new lineages or new versions) and update the index");
        auto a = std::make_shared<KbIngestArgs>();
        auto* kb_flag = ingest->add_option("--kb", a->kb_dir, "Knowledge base directory");
        ingest->add_option("--in", a->input, "Ingest file: one {category, title, body, effective_date?} per line")
            ->required()
            ->check(CLI::ExistingFile);
        ingest->add_option("--out", a->out, "Write the ingested document ids as JSON");
        actions[ingest] = [a, kb_flag](Operations& ops, const WorkbenchConfig& cfg, std::ostream& out) {
            auto args = *a;
            fallback(kb_flag, args.kb_dir, str(cfg.kb_dir));
            ops.kb_ingest(args, out);
        };

        auto* rebuild = kb->add_subcommand("rebuild", "Rebuild the index from the stored documents");
        auto r = std::make_shared<KbRebuildArgs>();
        auto* rkb_flag = rebuild->add_option("--kb", r->kb_dir, "Knowledge base directory");
        rebuild->add_option("--out", r->out, "Write index statistics as JSON");
        actions[rebuild] = [r, rkb_flag](Operations& ops, const WorkbenchConfig& cfg, std::ostream& out) {
            auto args = *r;
            fallback(rkb_flag, args.kb_dir, str(cfg.kb_dir));
            ops.kb_rebuild(args, out);
        };

        auto* search = kb->add_subcommand("search", "Top-K search over the active versions");
        auto s = std::make_shared<KbSearchArgs>();
        auto* skb_flag = search->add_option("--kb", s->kb_dir, "Knowledge base directory");
        search->add_option("--q,--query", s->query, "Query text")->required();
        auto* k_flag = search->add_option("--k", s->k, "Number of hits");
        search->add_option("--backend", s->backend, "lexical or vector")->check(CLI::IsMember({"lexical", "vector"}));
        search->add_option("--provider", s->provider, "Embedding provider for the vector backend");
        search->add_option("--out", s->out, "Write the hits as JSON");
        actions[search] = [s, skb_flag, k_flag](Operations& ops, const WorkbenchConfig& cfg, std::ostream& out) {
            auto args = *s;
            fallback(skb_flag, args.kb_dir, str(cfg.kb_dir));
            fallback(k_flag, args.k, cfg.eval.k);
            ops.kb_search(args, out);
        };
    }

    void add_forge()
    {
        auto* forge = app.add_subcommand("forge", "Instruction dataset construction");
        forge->require_subcommand(1);

        auto* clean = forge->add_subcommand("clean", "Pair raw records through their task schemas");
        auto c = std::make_shared<ForgeCleanArgs>();
        clean->add_option("--records", c->records, "Raw records (JSONL)")->required()->check(CLI::ExistingFile);
        clean->add_option("--schemas", c->schemas, "Task schemas (JSON)")->required()->check(CLI::ExistingFile);
        clean->add_option("--out", c->out, "Output pairs (JSONL)")->required();
        clean->add_option("--drops-out", c->drops_out, "Write dropped records with reasons (JSONL)");
        actions[clean] = [c](Operations& ops, const WorkbenchConfig&, std::ostream& out) { ops.forge_clean(*c, out); };

        auto* shape = forge->add_subcommand("shape", "Rewrite outputs as labeled syllogisms");
        auto sh = std::make_shared<ForgeShapeArgs>();
        shape->add_option("--in", sh->input, "Input pairs (JSONL)")->required()->check(CLI::ExistingFile);
        shape->add_option("--provider", sh->provider, "Provider id; default from config");
        shape->add_option("--model", sh->model, "Model id; default from the provider");
        shape->add_option("--out", sh->out, "Output pairs (JSONL)")->required();
        actions[shape] = [this, sh](Operations& ops, const WorkbenchConfig& cfg, std::ostream& out) {
            auto args = *sh;
            args.concurrency = pool_size(cfg);
            ops.forge_shape(args, out);
        };

        auto* expand = forge->add_subcommand("expand", "Turn exam MCQ records into explained answers");
        auto ex = std::make_shared<ForgeExpandArgs>();
        expand->add_option("--records", ex->records, "Raw MCQ records (JSONL)")->required()->check(CLI::ExistingFile);
        expand->add_option("--provider", ex->provider, "Provider id; default from config");
        expand->add_option("--model", ex->model, "Model id; default from the provider");
        expand->add_option("--out", ex->out, "Output pairs (JSONL)")->required();
        actions[expand] = [this, ex](Operations& ops, const WorkbenchConfig& cfg, std::ostream& out) {
            auto args = *ex;
            args.concurrency = pool_size(cfg);
            ops.forge_expand(args, out);
        };

        auto* lcot = forge->add_subcommand("lcot", "Wrap inputs with the legal chain-of-thought template");
        auto lc = std::make_shared<ForgeLcotArgs>();
        lcot->add_option("--in", lc->input, "Input pairs (JSONL)")->required()->check(CLI::ExistingFile);
        lcot->add_option("--variant", lc->variant, "Template name (lcot.zh or lcot.en)");
        lcot->add_option("--out", lc->out, "Output pairs (JSONL)")->required();
        actions[lcot] = [lc](Operations& ops, const WorkbenchConfig&, std::ostream& out) { ops.forge_lcot(*lc, out); };

        auto* triplet = forge->add_subcommand("triplet", "Attach cited statutes to pairs");
        auto t = std::make_shared<ForgeTripletArgs>();
        triplet->add_option("--in", t->input, "Input pairs (JSONL)")->required()->check(CLI::ExistingFile);
        triplet->add_option("--records", t->records, "Raw records the pairs came from")->required()->check(CLI::ExistingFile);
        triplet->add_option("--patterns", t->patterns, "Citation patterns (JSON)")->check(CLI::ExistingFile);
        triplet->add_option("--kb", t->kb_dir, "Resolve article text from this knowledge base");
        triplet->add_option("--out", t->out, "Output items (JSONL)")->required();
        actions[triplet] = [t](Operations& ops, const WorkbenchConfig&, std::ostream& out) { ops.forge_triplet(*t, out); };

        auto* exp = forge->add_subcommand("export", "Run the whole pipeline and write the dataset");
        auto e = std::make_shared<ForgeExportArgs>();
        exp->add_option("--records", e->records, "Raw records (JSONL)")->required()->check(CLI::ExistingFile);
        exp->add_option("--plan", e->plan, "Pipeline plan (JSON)")->required()->check(CLI::ExistingFile);
        exp->add_option("--provider", e->provider, "Provider id; default from config");
        exp->add_option("--model", e->model, "Model id; default from the provider");
        exp->add_option("--kb", e->kb_dir, "Resolve article text from this knowledge base");
        exp->add_option("--out", e->out, "Output dataset (JSONL)")->required();
        exp->add_option("--stages-out", e->stages_out, "Write per-stage counts and the drop log (JSON)");
        actions[exp] = [this, e](Operations& ops, const WorkbenchConfig& cfg, std::ostream& out) {
            auto args = *e;
            args.concurrency = pool_size(cfg);
            ops.forge_export(args, out);
        };

        auto* stats = forge->add_subcommand("stats", "Dataset statistics by subset and task");
        auto st = std::make_shared<ForgeStatsArgs>();
        stats->add_option("--in", st->input, "Dataset (JSONL)")->required()->check(CLI::ExistingFile);
        stats->add_option("--out", st->out, "Write the statistics as JSON");
        actions[stats] = [st](Operations& ops, const WorkbenchConfig&, std::ostream& out) { ops.forge_stats(*st, out); };
    }

    void add_eval()
    {
        auto* eval = app.add_subcommand("eval", "Model evaluation");
        eval->require_subcommand(1);

        auto* obj = eval->add_subcommand("obj", "Multiple-choice accuracy with few-shot prompts");
        auto o = std::make_shared<EvalObjArgs>();
        obj->add_option("--dataset", o->dataset, "MCQ items (JSONL)")->required()->check(CLI::ExistingFile);
        auto* pool_flag = obj->add_option("--pool", o->pool, "Exemplar pool (JSONL)")->check(CLI::ExistingFile);
        obj->add_option("--provider", o->provider, "Provider id; default from config");
        obj->add_option("--model", o->model, "Model id; default from the provider");
        auto* single_flag = obj->add_option("--shots-single", o->shots_single, "Exemplars for single-answer items");
        auto* multi_flag = obj->add_option("--shots-multi", o->shots_multi, "Exemplars for multi-answer items");
        auto* seed_flag = obj->add_option("--seed", o->seed, "Exemplar selection seed");
        obj->add_option("--out", o->out, "Write the report as JSON");
        actions[obj] = [this, o, pool_flag, single_flag, multi_flag, seed_flag](Operations& ops, const WorkbenchConfig& cfg,
                                                                                 std::ostream& out) {
            auto args = *o;
            fallback(pool_flag, args.pool, str(cfg.eval.pool));
            fallback(single_flag, args.shots_single, cfg.eval.shots_single);
            fallback(multi_flag, args.shots_multi, cfg.eval.shots_multi);
            fallback(seed_flag, args.seed, cfg.eval.seed);
            args.concurrency = pool_size(cfg);
            ops.eval_obj(args, out);
        };

        auto* subj = eval->add_subcommand("subj", "Judge-scored open questions");
        auto s = std::make_shared<EvalSubjArgs>();
        subj->add_option("--dataset", s->dataset, "Subjective items (JSONL)")->required()->check(CLI::ExistingFile);
        subj->add_option("--provider", s->provider, "Candidate provider id; default from config");
        auto* judge_flag = subj->add_option("--judge-provider", s->judge_provider, "Judge provider id");
        subj->add_option("--model", s->model, "Candidate model id");
        subj->add_option("--judge-model", s->judge_model, "Judge model id");
        auto* repeats_flag = subj->add_option("--repeats", s->repeats, "Judgments per item")->check(CLI::PositiveNumber);
        subj->add_option("--out", s->out, "Write the report as JSON");
        actions[subj] = [this, s, judge_flag, repeats_flag](Operations& ops, const WorkbenchConfig& cfg, std::ostream& out) {
            auto args = *s;
            fallback(judge_flag, args.judge_provider, cfg.eval.judge_provider);
            fallback(repeats_flag, args.repeats, cfg.eval.repeats);
            args.concurrency = pool_size(cfg);
            ops.eval_subj(args, out);
        };
    }

    void add_gateway()
    {
        auto* gw = app.add_subcommand("gateway", "Transcript recording and verification");
        gw->require_subcommand(1);

        auto* record = gw->add_subcommand("record", "Send requests live and record the responses");
        auto r = std::make_shared<GatewayRecordArgs>();
        record->add_option("--requests", r->requests, "Requests (JSONL: messages, model?, temperature?, max_tokens?)")
            ->required()
            ->check(CLI::ExistingFile);
        record->add_option("--provider", r->provider, "Provider id; default from config");
        record->add_option("--transcript", r->transcript, "Transcript file; default from the provider");
        record->add_option("--out", r->out, "Write the recorded tags as JSON");
        actions[record] = [this, r](Operations& ops, const WorkbenchConfig& cfg, std::ostream& out) {
            auto args = *r;
            args.concurrency = pool_size(cfg);
            ops.gateway_record(args, out);
        };

        auto* verify = gw->add_subcommand("replay-verify", "Check that every request replays from the transcript");
        auto v = std::make_shared<GatewayReplayVerifyArgs>();
        verify->add_option("--requests", v->requests, "Requests (JSONL)")->required()->check(CLI::ExistingFile);
        verify->add_option("--provider", v->provider, "Provider id; default from config");
        verify->add_option("--transcript", v->transcript, "Transcript file; default from the provider")
            ->check(CLI::ExistingFile);
        verify->add_option("--out", v->out, "Write hits and misses as JSON");
        actions[verify] = [v](Operations& ops, const WorkbenchConfig&, std::ostream& out) {
            ops.gateway_replay_verify(*v, out);
        };
    }

    void add_serve()
    {
        auto* serve = app.add_subcommand("serve", "Run the HTTP service");
        auto s = std::make_shared<ServeArgs>();
        serve->add_option("--host", s->host, "Listen address");
        serve->add_option("--port", s->port, "Listen port")->check(CLI::Range(1, 65535));
        auto* kb_flag = serve->add_option("--kb", s->kb_dir, "Knowledge base directory");
        serve->add_option("--provider", s->provider, "Consultation provider id; default from config");
        auto* runs_flag = serve->add_option("--runs", s->runs_dir, "Eval run registry directory");
        auto* workers_flag = serve->add_option("--workers", s->workers, "Eval run workers")->check(CLI::PositiveNumber);
        actions[serve] = [this, s, kb_flag, runs_flag, workers_flag](Operations& ops, const WorkbenchConfig& cfg,
                                                                     std::ostream& out) {
            auto args = *s;
            fallback(kb_flag, args.kb_dir, str(cfg.kb_dir));
            fallback(runs_flag, args.runs_dir, str(cfg.runs_dir));
            if (concurrency_flag->count()) fallback(workers_flag, args.workers, concurrency);
            ops.serve(args, out);
        };
    }

    /// The innermost parsed subcommand's action.
    const Action* selected() const
    {
        const CLI::App* cur = &app;
        for (;;) {
            auto subs = cur->get_subcommands();
            if (subs.empty()) break;
            cur = subs.front();
        }
        auto it = actions.find(cur);
        return it == actions.end() ? nullptr : &it->second;
    }
};

}  // namespace

int run(const std::vector<std::string>& args, const OperationsFactory& factory, std::ostream& out, std::ostream& err)
{
    Parser p;
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        p.app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return p.app.exit(e, out, err) == 0 ? 0 : 1;
    }
    const Action* action = p.selected();
    if (!action) {
        err << p.app.help();
        return 1;
    }
    try {
        WorkbenchConfig cfg;
        if (!p.config_path.empty()) cfg = load_config(p.config_path);
        else if (std::filesystem::exists("juris.yaml")) cfg = load_config("juris.yaml");
        auto ops = factory(cfg);
        (*action)(*ops, cfg, out);
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return is_validation_error(e.code()) ? 1 : 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace juris::cli
