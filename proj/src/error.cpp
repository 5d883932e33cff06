#include "ace/error.hpp"

namespace ace {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::ZeroVector: return "ZeroVector";
        case ErrorCode::NonPositiveTemperature: return "NonPositiveTemperature";
        case ErrorCode::InvalidDistribution: return "InvalidDistribution";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::DimMismatch: return "DimMismatch";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
        case ErrorCode::TruncatedFile: return "TruncatedFile";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::InvalidSpec: return "InvalidSpec";
        case ErrorCode::InvalidManifest: return "InvalidManifest";
        case ErrorCode::EmptyClassGroup: return "EmptyClassGroup";
        case ErrorCode::EmptyStream: return "EmptyStream";
        case ErrorCode::InvalidThreshold: return "InvalidThreshold";
        case ErrorCode::InvalidParams: return "InvalidParams";
        case ErrorCode::ClassOutOfRange: return "ClassOutOfRange";
        case ErrorCode::EmptyBatch: return "EmptyBatch";
        case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
        case ErrorCode::DegenerateSum: return "DegenerateSum";
        case ErrorCode::ConfigInvalid: return "ConfigInvalid";
        case ErrorCode::MalformedRecord: return "MalformedRecord";
    }
    return "Unknown";
}

}  // namespace ace
