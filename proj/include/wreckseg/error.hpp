#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wreckseg {

// Stable error codes. The string form (code_name) is part of the CLI and HTTP
// surface, so never rename an entry.
enum class ErrorCode {
    MalformedHeader,
    InconsistentDimensions,
    UnsupportedTiffFeature,
    EmptyInput,
    UnwritableFormat,
    DegenerateRange,
    ResolutionTooCoarse,
    AllNodata,
    InvalidArgument,
    EmptyLabel,
    ShipOnNodata,
    NoValidPlacement,
    InsufficientInputs,
    ShapeMismatch,
    EmptyManifest,
    BadMagic,
    VersionUnsupported,
    ShapeMismatchWithConfig,
    WeightsChannelMismatch,
    PlacementOutOfBounds,
    MissingGeoreference,
    EmptyList,
    Io,
};

constexpr std::string_view code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::MalformedHeader: return "MalformedHeader";
        case ErrorCode::InconsistentDimensions: return "InconsistentDimensions";
        case ErrorCode::UnsupportedTiffFeature: return "UnsupportedTiffFeature";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::UnwritableFormat: return "UnwritableFormat";
        case ErrorCode::DegenerateRange: return "DegenerateRange";
        case ErrorCode::ResolutionTooCoarse: return "ResolutionTooCoarse";
        case ErrorCode::AllNodata: return "AllNodata";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::EmptyLabel: return "EmptyLabel";
        case ErrorCode::ShipOnNodata: return "ShipOnNodata";
        case ErrorCode::NoValidPlacement: return "NoValidPlacement";
        case ErrorCode::InsufficientInputs: return "InsufficientInputs";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::EmptyManifest: return "EmptyManifest";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::VersionUnsupported: return "VersionUnsupported";
        case ErrorCode::ShapeMismatchWithConfig: return "ShapeMismatchWithConfig";
        case ErrorCode::WeightsChannelMismatch: return "WeightsChannelMismatch";
        case ErrorCode::PlacementOutOfBounds: return "PlacementOutOfBounds";
        case ErrorCode::MissingGeoreference: return "MissingGeoreference";
        case ErrorCode::EmptyList: return "EmptyList";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(code_name(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace wreckseg
