#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "juris/gateway.hpp"

namespace juris::cli {

struct EvalDefaults {
    int shots_single = 4;
    int shots_multi = 5;
    std::uint64_t seed = 0;
    int repeats = 3;
    int k = 3;
    /// Exemplar pool for objective runs.
    std::filesystem::path pool;
    /// Provider used as judge; empty: the default provider.
    std::string judge_provider;
};

/// Workbench configuration (YAML). Relative paths resolve against the config
/// file's directory. Credentials are never read from the file: a provider names
/// the environment variable that holds its key (`auth_env`).
struct WorkbenchConfig {
    std::map<std::string, gateway::ProviderProfile> providers;
    std::string default_provider;
    std::filesystem::path kb_dir = "kb";
    std::filesystem::path templates = "templates/manifest.json";
    std::filesystem::path runs_dir = "runs";
    EvalDefaults eval;
    int concurrency = 4;

    /// Empty id: the default provider. Throws Error(InvalidConfig).
    [[nodiscard]] const gateway::ProviderProfile& provider(const std::string& id) const;
};

/// Throws Error(InvalidConfig) when a referenced path is missing, when not
/// exactly one provider is marked default, or when a credential appears inline.
WorkbenchConfig config_from_yaml(const std::string& yaml, const std::filesystem::path& base_dir);
WorkbenchConfig load_config(const std::filesystem::path& path);

// Arguments of each subcommand after config defaults and flag overrides.
// Paths are plain strings; empty means "not given".

struct KbIngestArgs {
    std::string kb_dir;
    std::string input;
    std::string out;
};
struct KbRebuildArgs {
    std::string kb_dir;
    std::string out;
};
struct KbSearchArgs {
    std::string kb_dir;
    std::string query;
    int k = 3;
    std::string backend = "lexical";
    std::string provider;
    std::string out;
};
struct ForgeCleanArgs {
    std::string records;
    std::string schemas;
    std::string out;
    std::string drops_out;
};
struct ForgeShapeArgs {
    std::string input;
    std::string provider;
    std::string model;
    int concurrency = 4;
    std::string out;
};
struct ForgeExpandArgs {
    std::string records;
    std::string provider;
    std::string model;
    int concurrency = 4;
    std::string out;
};
struct ForgeLcotArgs {
    std::string input;
    std::string variant = "lcot.zh";
    std::string out;
};
struct ForgeTripletArgs {
    std::string input;
    std::string records;
    std::string patterns;
    std::string kb_dir;
    std::string out;
};
struct ForgeExportArgs {
    std::string records;
    std::string plan;
    std::string provider;
    std::string model;
    std::string kb_dir;
    int concurrency = 4;
    std::string out;
    std::string stages_out;
};
struct ForgeStatsArgs {
    std::string input;
    std::string out;
};
struct EvalObjArgs {
    std::string dataset;
    std::string pool;
    std::string provider;
    std::string model;
    int shots_single = 4;
    int shots_multi = 5;
    std::uint64_t seed = 0;
    int concurrency = 4;
    std::string out;
};
struct EvalSubjArgs {
    std::string dataset;
    std::string provider;
    std::string judge_provider;
    std::string model;
    std::string judge_model;
    int repeats = 3;
    int concurrency = 4;
    std::string out;
};
struct GatewayRecordArgs {
    std::string requests;
    std::string provider;
    std::string transcript;
    int concurrency = 4;
    std::string out;
};
struct GatewayReplayVerifyArgs {
    std::string requests;
    std::string provider;
    std::string transcript;
    std::string out;
};
struct ServeArgs {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string kb_dir;
    std::string provider;
    std::string runs_dir;
    int workers = 2;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(KbIngestArgs, kb_dir, input, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(KbRebuildArgs, kb_dir, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(KbSearchArgs, kb_dir, query, k, backend, provider, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ForgeCleanArgs, records, schemas, out, drops_out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ForgeShapeArgs, input, provider, model, concurrency, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ForgeExpandArgs, records, provider, model, concurrency, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ForgeLcotArgs, input, variant, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ForgeTripletArgs, input, records, patterns, kb_dir, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ForgeExportArgs, records, plan, provider, model, kb_dir, concurrency, out, stages_out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ForgeStatsArgs, input, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EvalObjArgs, dataset, pool, provider, model, shots_single, shots_multi, seed,
                                   concurrency, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EvalSubjArgs, dataset, provider, judge_provider, model, judge_model, repeats,
                                   concurrency, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GatewayRecordArgs, requests, provider, transcript, concurrency, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GatewayReplayVerifyArgs, requests, provider, transcript, out)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ServeArgs, host, port, kb_dir, provider, runs_dir, workers)

/// One method per subcommand. Human-readable output goes to `out`; failures
/// are thrown as juris::Error.
class Operations {
  public:
    virtual ~Operations() = default;
    virtual void kb_ingest(const KbIngestArgs& a, std::ostream& out) = 0;
    virtual void kb_rebuild(const KbRebuildArgs& a, std::ostream& out) = 0;
    virtual void kb_search(const KbSearchArgs& a, std::ostream& out) = 0;
    virtual void forge_clean(const ForgeCleanArgs& a, std::ostream& out) = 0;
    virtual void forge_shape(const ForgeShapeArgs& a, std::ostream& out) = 0;
    virtual void forge_expand(const ForgeExpandArgs& a, std::ostream& out) = 0;
    virtual void forge_lcot(const ForgeLcotArgs& a, std::ostream& out) = 0;
    virtual void forge_triplet(const ForgeTripletArgs& a, std::ostream& out) = 0;
    virtual void forge_export(const ForgeExportArgs& a, std::ostream& out) = 0;
    virtual void forge_stats(const ForgeStatsArgs& a, std::ostream& out) = 0;
    virtual void eval_obj(const EvalObjArgs& a, std::ostream& out) = 0;
    virtual void eval_subj(const EvalSubjArgs& a, std::ostream& out) = 0;
    virtual void gateway_record(const GatewayRecordArgs& a, std::ostream& out) = 0;
    virtual void gateway_replay_verify(const GatewayReplayVerifyArgs& a, std::ostream& out) = 0;
    virtual void serve(const ServeArgs& a, std::ostream& out) = 0;
};

/// Operations backed by the library modules.
class ModuleOperations final : public Operations {
  public:
    explicit ModuleOperations(WorkbenchConfig config, std::shared_ptr<gateway::Transport> transport = nullptr);

    void kb_ingest(const KbIngestArgs& a, std::ostream& out) override;
    void kb_rebuild(const KbRebuildArgs& a, std::ostream& out) override;
    void kb_search(const KbSearchArgs& a, std::ostream& out) override;
    void forge_clean(const ForgeCleanArgs& a, std::ostream& out) override;
    void forge_shape(const ForgeShapeArgs& a, std::ostream& out) override;
    void forge_expand(const ForgeExpandArgs& a, std::ostream& out) override;
    void forge_lcot(const ForgeLcotArgs& a, std::ostream& out) override;
    void forge_triplet(const ForgeTripletArgs& a, std::ostream& out) override;
    void forge_export(const ForgeExportArgs& a, std::ostream& out) override;
    void forge_stats(const ForgeStatsArgs& a, std::ostream& out) override;
    void eval_obj(const EvalObjArgs& a, std::ostream& out) override;
    void eval_subj(const EvalSubjArgs& a, std::ostream& out) override;
    void gateway_record(const GatewayRecordArgs& a, std::ostream& out) override;
    void gateway_replay_verify(const GatewayReplayVerifyArgs& a, std::ostream& out) override;
    void serve(const ServeArgs& a, std::ostream& out) override;

  private:
    WorkbenchConfig config_;
    std::shared_ptr<gateway::Gateway> gateway_;
};

/// Builds the operations object once the config is known.
using OperationsFactory = std::function<std::unique_ptr<Operations>(const WorkbenchConfig&)>;

/// Parses `args` (without the program name), loads the config (--config, else
/// ./juris.yaml when present, else built-in defaults) and dispatches. Returns
/// 0 on success, 1 on usage or validation errors, 2 on runtime errors.
int run(const std::vector<std::string>& args, const OperationsFactory& factory, std::ostream& out, std::ostream& err);

}  // namespace juris::cli
