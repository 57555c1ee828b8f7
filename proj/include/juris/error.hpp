#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace juris {

enum class ErrorCode {
    // gateway
    TransportError,
    ReplayMiss,
    AuthMissing,
    CorruptTranscript,
    InvalidRequest,
    // knowledge base
    EmptyBody,
    MetadataMissing,
    UnknownDocument,
    EmptyQuery,
    IndexEmpty,
    CorruptIndex,
    InvalidConfig,
    // rag
    EmptyInput,
    TemplateInvalid,
    AlreadyWrapped,
    UnresolvedChunk,
    // forge
    SchemaMismatch,
    ShapingRejected,
    ExpansionInconsistent,
    AlignmentError,
    // objective eval
    ParseError,
    InvariantViolation,
    ExemplarShortage,
    DoubleCount,
    EmptyDataset,
    // subjective eval
    EmptyCandidate,
    ScoreMissing,
    ScoreOutOfRange,
    AllInvalid,
    // service / run registry
    UnknownRun,
    DuplicateRun,
    IllegalTransition,
    // shared
    IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Errors that originate from caller input rather than the environment.
/// The CLI maps these to exit code 1 and everything else to exit code 2.
bool is_validation_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code)
    {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

}  // namespace juris
