#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace derain {

enum class ErrorKind {
    InvalidArgument,
    InvalidImage,
    MissingCounterpart,
    DimensionMismatch,
    DecodeFailure,
    InsufficientPairs,
    IoFailure,
    PlacementFailure,
    ConfigInvalid,
    ShapeMismatch,
    NonFiniteLoss,
    DetectorUnavailable,
    AllTriosSkipped,
    FingerprintMismatch,
};

[[nodiscard]] constexpr std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::InvalidImage: return "InvalidImage";
        case ErrorKind::MissingCounterpart: return "MissingCounterpart";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::DecodeFailure: return "DecodeFailure";
        case ErrorKind::InsufficientPairs: return "InsufficientPairs";
        case ErrorKind::IoFailure: return "IoFailure";
        case ErrorKind::PlacementFailure: return "PlacementFailure";
        case ErrorKind::ConfigInvalid: return "ConfigInvalid";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorKind::DetectorUnavailable: return "DetectorUnavailable";
        case ErrorKind::AllTriosSkipped: return "AllTriosSkipped";
        case ErrorKind::FingerprintMismatch: return "FingerprintMismatch";
    }
    return "Unknown";
}

/// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace derain
