#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace juris {

enum class RunKind { objective, subjective };
enum class RunStatus { queued, running, done, failed };

std::string_view to_string(RunKind k) noexcept;
std::string_view to_string(RunStatus s) noexcept;
std::optional<RunKind> run_kind_from_string(std::string_view s);
std::optional<RunStatus> run_status_from_string(std::string_view s);

struct EvalRunDescriptor {
    std::string run_id;
    RunKind kind = RunKind::objective;
    RunStatus status = RunStatus::queued;
    /// Present exactly when status is done.
    std::optional<std::filesystem::path> report_ref;
    /// Failure message when status is failed.
    std::optional<std::string> error;

    bool operator==(const EvalRunDescriptor&) const = default;
};

nlohmann::ordered_json descriptor_to_json(const EvalRunDescriptor& d);

/// Only forward moves are legal: queued → running → {done, failed}, and queued → failed.
bool is_legal_transition(RunStatus from, RunStatus to) noexcept;

/// Eval runs persisted under one directory (runs.json plus one report file per
/// finished run). Every mutation is atomic and rewrites runs.json. On open,
/// runs left queued or running by a previous process are marked failed.
class RunRegistry {
  public:
    explicit RunRegistry(std::filesystem::path dir);

    /// Throws Error(DuplicateRun).
    EvalRunDescriptor create(const std::string& run_id, RunKind kind);
    /// Throws Error(UnknownRun), Error(IllegalTransition).
    EvalRunDescriptor mark_running(const std::string& run_id);
    /// Writes the report file, then marks the run done.
    EvalRunDescriptor complete(const std::string& run_id, const nlohmann::ordered_json& report);
    EvalRunDescriptor fail(const std::string& run_id, const std::string& message);

    /// Throws Error(UnknownRun).
    [[nodiscard]] EvalRunDescriptor get(const std::string& run_id) const;
    /// Report of a done run; nullopt otherwise. Throws Error(UnknownRun).
    [[nodiscard]] std::optional<nlohmann::json> report(const std::string& run_id) const;
    [[nodiscard]] std::vector<EvalRunDescriptor> list() const;

    /// A fresh id ("run-0001", ...) not yet in the registry.
    [[nodiscard]] std::string next_id() const;

  private:
    EvalRunDescriptor transition(const std::string& run_id, RunStatus to, std::optional<std::filesystem::path> report,
                                 std::optional<std::string> error);
    void persist_locked() const;

    std::filesystem::path dir_;
    mutable std::mutex mutex_;
    std::map<std::string, EvalRunDescriptor> runs_;
};

}  // namespace juris
