#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rbsde {

enum class ErrorCode {
    InvalidSpec,
    MissingBranchValue,
    UnknownMark,
    SingularGram,
    NotCentered,
    TooManyPolicies,
    NoConvergence,
    EstimateViolated,
    MonotonicityViolated,
    StepTooCoarse,
    InvalidStoppingTime,
    LuscViolated,
    ReconstructionFailed,
    FormulaViolated,
    ConfigInvalid,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidSpec: return "InvalidSpec";
        case ErrorCode::MissingBranchValue: return "MissingBranchValue";
        case ErrorCode::UnknownMark: return "UnknownMark";
        case ErrorCode::SingularGram: return "SingularGram";
        case ErrorCode::NotCentered: return "NotCentered";
        case ErrorCode::TooManyPolicies: return "TooManyPolicies";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::EstimateViolated: return "EstimateViolated";
        case ErrorCode::MonotonicityViolated: return "MonotonicityViolated";
        case ErrorCode::StepTooCoarse: return "StepTooCoarse";
        case ErrorCode::InvalidStoppingTime: return "InvalidStoppingTime";
        case ErrorCode::LuscViolated: return "LuscViolated";
        case ErrorCode::ReconstructionFailed: return "ReconstructionFailed";
        case ErrorCode::FormulaViolated: return "FormulaViolated";
        case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    }
    return "Unknown";
}

/// Base exception for every failure raised by the library. The code is the
/// stable identifier; the message carries the context (node, mark, path...).
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Exception that also carries the report explaining it (diagnostics, worst path, ...).
template <typename Report>
class ReportedError : public Error {
public:
    ReportedError(ErrorCode code, const std::string& message, Report report)
        : Error(code, message), report_(std::move(report)) {}

    const Report& report() const noexcept { return report_; }

private:
    Report report_;
};

}  // namespace rbsde
