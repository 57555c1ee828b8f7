#include "juris/run_registry.hpp"

#include <cstdio>

#include "juris/error.hpp"
#include "juris/jsonl.hpp"

namespace juris {

std::string_view to_string(RunKind k) noexcept { return k == RunKind::objective ? "objective" : "subjective"; }

std::string_view to_string(RunStatus s) noexcept
{
    switch (s) {
        case RunStatus::queued: return "queued";
        case RunStatus::running: return "running";
        case RunStatus::done: return "done";
        case RunStatus::failed: return "failed";
    }
    return "?";
}

std::optional<RunKind> run_kind_from_string(std::string_view s)
{
    if (s == "objective") return RunKind::objective;
    if (s == "subjective") return RunKind::subjective;
    return std::nullopt;
}

std::optional<RunStatus> run_status_from_string(std::string_view s)
{
    for (auto st : {RunStatus::queued, RunStatus::running, RunStatus::done, RunStatus::failed}) {
        if (to_string(st) == s) return st;
    }
    return std::nullopt;
}

nlohmann::ordered_json descriptor_to_json(const EvalRunDescriptor& d)
{
    nlohmann::ordered_json j;
    j["run_id"] = d.run_id;
    j["kind"] = to_string(d.kind);
    j["status"] = to_string(d.status);
    if (d.report_ref) j["report_ref"] = d.report_ref->string();
    if (d.error) j["error"] = *d.error;
    return j;
}

bool is_legal_transition(RunStatus from, RunStatus to) noexcept
{
    switch (from) {
        case RunStatus::queued: return to == RunStatus::running || to == RunStatus::failed;
        case RunStatus::running: return to == RunStatus::done || to == RunStatus::failed;
        default: return false;
    }
}

RunRegistry::RunRegistry(std::filesystem::path dir) : dir_(std::move(dir))
{
    std::filesystem::create_directories(dir_);
    const auto path = dir_ / "runs.json";
    if (!std::filesystem::exists(path)) return;
    try {
        for (const auto& j : nlohmann::json::parse(jsonl::read_file(path))) {
            EvalRunDescriptor d;
            d.run_id = j.at("run_id").get<std::string>();
            auto kind = run_kind_from_string(j.at("kind").get<std::string>());
            auto status = run_status_from_string(j.at("status").get<std::string>());
            if (!kind || !status) throw Error(ErrorCode::ParseError, path.string() + ": bad run " + d.run_id);
            d.kind = *kind;
            d.status = *status;
            if (j.contains("report_ref")) d.report_ref = j.at("report_ref").get<std::string>();
            if (j.contains("error")) d.error = j.at("error").get<std::string>();
            if (d.status == RunStatus::queued || d.status == RunStatus::running) {
                d.status = RunStatus::failed;
                d.error = "interrupted by a service restart";
            }
            runs_[d.run_id] = std::move(d);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
    persist_locked();
}

void RunRegistry::persist_locked() const
{
    nlohmann::ordered_json all = nlohmann::ordered_json::array();
    for (const auto& [id, d] : runs_) all.push_back(descriptor_to_json(d));
    jsonl::write_file(dir_ / "runs.json", all.dump(2) + "\n");
}

EvalRunDescriptor RunRegistry::create(const std::string& run_id, RunKind kind)
{
    if (run_id.empty() || run_id.find_first_of("/\\") != std::string::npos || run_id == "." || run_id == "..") {
        throw Error(ErrorCode::InvalidRequest, "invalid run_id '" + run_id + "'");
    }
    std::lock_guard lock(mutex_);
    if (runs_.count(run_id)) throw Error(ErrorCode::DuplicateRun, "run " + run_id + " already exists");
    EvalRunDescriptor d{run_id, kind, RunStatus::queued, std::nullopt, std::nullopt};
    runs_[run_id] = d;
    persist_locked();
    return d;
}

EvalRunDescriptor RunRegistry::transition(const std::string& run_id, RunStatus to,
                                          std::optional<std::filesystem::path> report, std::optional<std::string> error)
{
    std::lock_guard lock(mutex_);
    auto it = runs_.find(run_id);
    if (it == runs_.end()) throw Error(ErrorCode::UnknownRun, "no run " + run_id);
    if (!is_legal_transition(it->second.status, to)) {
        throw Error(ErrorCode::IllegalTransition, "run " + run_id + ": " + std::string(to_string(it->second.status)) +
                                                      " -> " + std::string(to_string(to)));
    }
    it->second.status = to;
    it->second.report_ref = std::move(report);
    it->second.error = std::move(error);
    persist_locked();
    return it->second;
}

EvalRunDescriptor RunRegistry::mark_running(const std::string& run_id)
{
    return transition(run_id, RunStatus::running, std::nullopt, std::nullopt);
}

EvalRunDescriptor RunRegistry::complete(const std::string& run_id, const nlohmann::ordered_json& report)
{
    {
        std::lock_guard lock(mutex_);
        auto it = runs_.find(run_id);
        if (it == runs_.end()) throw Error(ErrorCode::UnknownRun, "no run " + run_id);
        if (!is_legal_transition(it->second.status, RunStatus::done)) {
            throw Error(ErrorCode::IllegalTransition, "run " + run_id + ": " + std::string(to_string(it->second.status)) + " -> done");
        }
    }
    const auto path = dir_ / (run_id + ".report.json");
    jsonl::write_file(path, report.dump(2) + "\n");
    return transition(run_id, RunStatus::done, path, std::nullopt);
}

EvalRunDescriptor RunRegistry::fail(const std::string& run_id, const std::string& message)
{
    return transition(run_id, RunStatus::failed, std::nullopt, message);
}

EvalRunDescriptor RunRegistry::get(const std::string& run_id) const
{
    std::lock_guard lock(mutex_);
    auto it = runs_.find(run_id);
    if (it == runs_.end()) throw Error(ErrorCode::UnknownRun, "no run " + run_id);
    return it->second;
}

std::optional<nlohmann::json> RunRegistry::report(const std::string& run_id) const
{
    auto d = get(run_id);
    if (d.status != RunStatus::done || !d.report_ref) return std::nullopt;
    return nlohmann::json::parse(jsonl::read_file(*d.report_ref));
}

std::vector<EvalRunDescriptor> RunRegistry::list() const
{
    std::lock_guard lock(mutex_);
    std::vector<EvalRunDescriptor> out;
    for (const auto& [id, d] : runs_) out.push_back(d);
    return out;
}

std::string RunRegistry::next_id() const
{
    std::lock_guard lock(mutex_);
    for (std::size_t n = runs_.size() + 1;; ++n) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "run-%04zu", n);
        if (!runs_.count(buf)) return buf;
    }
}

}  // namespace juris
