#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prodinv {

enum class ErrorKind {
    Unstable,
    BadActionBounds,
    NegativeCost,
    BadTruncation,
    BadDiscount,
    OutOfRange,
    PhiUndefined,
    DegenerateRatio,
    UnstableInventory,
    Reducible,
    SolveFailed,
    NonConvergence,
    ParseError,
    ValidationError,
    IoError,
    BadArgument,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Unstable: return "Unstable";
    case ErrorKind::BadActionBounds: return "BadActionBounds";
    case ErrorKind::NegativeCost: return "NegativeCost";
    case ErrorKind::BadTruncation: return "BadTruncation";
    case ErrorKind::BadDiscount: return "BadDiscount";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::PhiUndefined: return "PhiUndefined";
    case ErrorKind::DegenerateRatio: return "DegenerateRatio";
    case ErrorKind::UnstableInventory: return "UnstableInventory";
    case ErrorKind::Reducible: return "Reducible";
    case ErrorKind::SolveFailed: return "SolveFailed";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ValidationError: return "ValidationError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::BadArgument: return "BadArgument";
    }
    return "Unknown";
}

/// Single exception type for the library; `kind()` identifies the failure.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace prodinv
