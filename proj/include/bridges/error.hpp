#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bridges {

enum class ErrorCode {
    // input validation
    MissingColumn,
    ParseError,
    DuplicateKey,
    InvariantViolation,
    InvalidSpec,
    InvalidInput,
    InvalidConfig,
    MissingField,
    MissingAnomalyReport,
    MissingStageOutput,
    UnknownBank,
    // analysis failures
    EmptySlice,
    DegenerateYear,
    EmptySeries,
    AllZeroDistances,
    EmptyRoster,
    MissingAssets,
    ZeroDegreeNode,
    DimensionMismatch,
    NonFiniteLoss,
    RosterMismatch,
    InsufficientBanks,
    Io,
};

inline std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::MissingAnomalyReport: return "MissingAnomalyReport";
    case ErrorCode::MissingStageOutput: return "MissingStageOutput";
    case ErrorCode::UnknownBank: return "UnknownBank";
    case ErrorCode::EmptySlice: return "EmptySlice";
    case ErrorCode::DegenerateYear: return "DegenerateYear";
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::AllZeroDistances: return "AllZeroDistances";
    case ErrorCode::EmptyRoster: return "EmptyRoster";
    case ErrorCode::MissingAssets: return "MissingAssets";
    case ErrorCode::ZeroDegreeNode: return "ZeroDegreeNode";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::RosterMismatch: return "RosterMismatch";
    case ErrorCode::InsufficientBanks: return "InsufficientBanks";
    case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

/// True for errors caused by bad user input (CLI exit status 1); everything
/// else is treated as a runtime failure (exit status 2).
inline bool is_validation_error(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::MissingColumn:
    case ErrorCode::ParseError:
    case ErrorCode::DuplicateKey:
    case ErrorCode::InvariantViolation:
    case ErrorCode::InvalidSpec:
    case ErrorCode::InvalidInput:
    case ErrorCode::InvalidConfig:
    case ErrorCode::MissingField:
    case ErrorCode::MissingAnomalyReport:
    case ErrorCode::MissingStageOutput:
    case ErrorCode::UnknownBank:
        return true;
    default:
        return false;
    }
}

} // namespace bridges
