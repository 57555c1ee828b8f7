#include "juris/error.hpp"

namespace juris {

std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::ReplayMiss: return "ReplayMiss";
    case ErrorCode::AuthMissing: return "AuthMissing";
    case ErrorCode::CorruptTranscript: return "CorruptTranscript";
    case ErrorCode::InvalidRequest: return "InvalidRequest";
    case ErrorCode::EmptyBody: return "EmptyBody";
    case ErrorCode::MetadataMissing: return "MetadataMissing";
    case ErrorCode::UnknownDocument: return "UnknownDocument";
    case ErrorCode::EmptyQuery: return "EmptyQuery";
    case ErrorCode::IndexEmpty: return "IndexEmpty";
    case ErrorCode::CorruptIndex: return "CorruptIndex";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::TemplateInvalid: return "TemplateInvalid";
    case ErrorCode::AlreadyWrapped: return "AlreadyWrapped";
    case ErrorCode::UnresolvedChunk: return "UnresolvedChunk";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::ShapingRejected: return "ShapingRejected";
    case ErrorCode::ExpansionInconsistent: return "ExpansionInconsistent";
    case ErrorCode::AlignmentError: return "AlignmentError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::ExemplarShortage: return "ExemplarShortage";
    case ErrorCode::DoubleCount: return "DoubleCount";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::EmptyCandidate: return "EmptyCandidate";
    case ErrorCode::ScoreMissing: return "ScoreMissing";
    case ErrorCode::ScoreOutOfRange: return "ScoreOutOfRange";
    case ErrorCode::AllInvalid: return "AllInvalid";
    case ErrorCode::UnknownRun: return "UnknownRun";
    case ErrorCode::DuplicateRun: return "DuplicateRun";
    case ErrorCode::IllegalTransition: return "IllegalTransition";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

bool is_validation_error(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::TransportError:
    case ErrorCode::ReplayMiss:
    case ErrorCode::AuthMissing:
    case ErrorCode::ShapingRejected:
    case ErrorCode::ExpansionInconsistent:
    case ErrorCode::AllInvalid:
    case ErrorCode::IllegalTransition:
    case ErrorCode::IoError:
        return false;
    default:
        return true;
    }
}

}  // namespace juris
