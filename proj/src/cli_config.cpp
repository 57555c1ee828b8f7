#include <set>

#include <yaml-cpp/yaml.h>

#include "juris/cli.hpp"
#include "juris/error.hpp"
#include "juris/jsonl.hpp"

namespace juris::cli {

namespace {

const std::set<std::string> kCredentialKeys{"api_key", "apikey", "key", "token", "secret", "password", "credential",
                                            "credentials", "authorization"};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p)
{
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

template <class T>
T scalar(const YAML::Node& node, const std::string& where)
{
    try {
        return node.as<T>();
    } catch (const YAML::Exception& e) {
        throw Error(ErrorCode::InvalidConfig, where + ": " + e.what());
    }
}

gateway::ProviderProfile provider_from_yaml(const YAML::Node& node, const std::filesystem::path& base, bool& is_default)
{
    if (!node.IsMap()) throw Error(ErrorCode::InvalidConfig, "each provider must be a mapping");
    gateway::ProviderProfile p;
    is_default = false;
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        const auto& v = kv.second;
        if (kCredentialKeys.count(key)) {
            throw Error(ErrorCode::InvalidConfig,
                        "provider key '" + key + "': credentials come from the environment; name the variable with auth_env");
        }
        const std::string where = "provider." + key;
        if (key == "id") p.provider_id = scalar<std::string>(v, where);
        else if (key == "endpoint") p.endpoint = scalar<std::string>(v, where);
        else if (key == "auth_env") p.auth_ref = scalar<std::string>(v, where);
        else if (key == "mode") p.mode = gateway::mode_from_string(scalar<std::string>(v, where));
        else if (key == "transcript") p.transcript_path = resolve(base, scalar<std::string>(v, where));
        else if (key == "model") p.default_model = scalar<std::string>(v, where);
        else if (key == "embedding_model") p.embedding_model = scalar<std::string>(v, where);
        else if (key == "max_concurrent") p.max_concurrent = scalar<int>(v, where);
        else if (key == "retry_budget") p.retry_budget = scalar<int>(v, where);
        else if (key == "default") is_default = scalar<bool>(v, where);
        else throw Error(ErrorCode::InvalidConfig, "unknown provider key '" + key + "'");
    }
    p.validate();
    if (p.mode == gateway::Mode::replay && !p.transcript_path.empty() && !std::filesystem::exists(p.transcript_path)) {
        throw Error(ErrorCode::InvalidConfig, p.provider_id + ": transcript " + p.transcript_path.string() + " does not exist");
    }
    return p;
}

}  // namespace

const gateway::ProviderProfile& WorkbenchConfig::provider(const std::string& id) const
{
    const std::string& key = id.empty() ? default_provider : id;
    if (key.empty()) throw Error(ErrorCode::InvalidConfig, "no provider configured");
    auto it = providers.find(key);
    if (it == providers.end()) throw Error(ErrorCode::InvalidConfig, "unknown provider '" + key + "'");
    return it->second;
}

WorkbenchConfig config_from_yaml(const std::string& yaml, const std::filesystem::path& base_dir)
{
    YAML::Node root;
    try {
        root = YAML::Load(yaml);
    } catch (const YAML::Exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("config: ") + e.what());
    }
    WorkbenchConfig cfg;
    cfg.kb_dir = base_dir / cfg.kb_dir;
    cfg.templates = base_dir / cfg.templates;
    cfg.runs_dir = base_dir / cfg.runs_dir;
    if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
    if (!root.IsMap()) throw Error(ErrorCode::InvalidConfig, "config must be a mapping");

    std::vector<std::string> defaults;
    for (const auto& kv : root) {
        const auto key = kv.first.as<std::string>();
        const auto& v = kv.second;
        if (key == "providers") {
            if (!v.IsSequence()) throw Error(ErrorCode::InvalidConfig, "providers must be a list");
            for (const auto& node : v) {
                bool is_default = false;
                auto p = provider_from_yaml(node, base_dir, is_default);
                if (is_default) defaults.push_back(p.provider_id);
                const auto id = p.provider_id;
                if (!cfg.providers.emplace(id, std::move(p)).second) {
                    throw Error(ErrorCode::InvalidConfig, "duplicate provider '" + id + "'");
                }
            }
        } else if (key == "kb_dir") {
            cfg.kb_dir = resolve(base_dir, scalar<std::string>(v, key));
        } else if (key == "templates") {
            cfg.templates = resolve(base_dir, scalar<std::string>(v, key));
        } else if (key == "runs_dir") {
            cfg.runs_dir = resolve(base_dir, scalar<std::string>(v, key));
        } else if (key == "concurrency") {
            cfg.concurrency = scalar<int>(v, key);
        } else if (key == "eval") {
            if (!v.IsMap()) throw Error(ErrorCode::InvalidConfig, "eval must be a mapping");
            for (const auto& e : v) {
                const auto k = e.first.as<std::string>();
                const std::string where = "eval." + k;
                if (k == "shots_single") cfg.eval.shots_single = scalar<int>(e.second, where);
                else if (k == "shots_multi") cfg.eval.shots_multi = scalar<int>(e.second, where);
                else if (k == "seed") cfg.eval.seed = scalar<std::uint64_t>(e.second, where);
                else if (k == "repeats") cfg.eval.repeats = scalar<int>(e.second, where);
                else if (k == "k") cfg.eval.k = scalar<int>(e.second, where);
                else if (k == "pool") cfg.eval.pool = resolve(base_dir, scalar<std::string>(e.second, where));
                else if (k == "judge_provider") cfg.eval.judge_provider = scalar<std::string>(e.second, where);
                else throw Error(ErrorCode::InvalidConfig, "unknown key '" + where + "'");
            }
        } else if (kCredentialKeys.count(key)) {
            throw Error(ErrorCode::InvalidConfig, "key '" + key + "': credentials come from the environment");
        } else {
            throw Error(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
        }
    }

    if (!cfg.providers.empty()) {
        if (defaults.empty() && cfg.providers.size() == 1) defaults.push_back(cfg.providers.begin()->first);
        if (defaults.size() != 1) {
            throw Error(ErrorCode::InvalidConfig, "exactly one provider must be marked default (found " +
                                                      std::to_string(defaults.size()) + ")");
        }
        cfg.default_provider = defaults.front();
    }
    if (!cfg.eval.judge_provider.empty()) (void)cfg.provider(cfg.eval.judge_provider);
    if (cfg.concurrency < 1) throw Error(ErrorCode::InvalidConfig, "concurrency must be >= 1");
    if (!std::filesystem::exists(cfg.templates)) {
        throw Error(ErrorCode::InvalidConfig, "template manifest " + cfg.templates.string() + " does not exist");
    }
    if (!cfg.eval.pool.empty() && !std::filesystem::exists(cfg.eval.pool)) {
        throw Error(ErrorCode::InvalidConfig, "exemplar pool " + cfg.eval.pool.string() + " does not exist");
    }
    return cfg;
}

WorkbenchConfig load_config(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::InvalidConfig, "config " + path.string() + " does not exist");
    return config_from_yaml(jsonl::read_file(path), path.parent_path().empty() ? "." : path.parent_path());
}

}  // namespace juris::cli
