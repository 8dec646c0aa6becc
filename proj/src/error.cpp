#include "loudgen/error.hpp"

namespace loudgen {

std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::Format: return "format";
    case ErrorCode::UnsupportedCodec: return "unsupported-codec";
    case ErrorCode::ChannelCount: return "channel-count";
    case ErrorCode::Io: return "io";
    case ErrorCode::Aliasing: return "aliasing";
    case ErrorCode::Design: return "design";
    case ErrorCode::Configuration: return "configuration";
    case ErrorCode::InsufficientAudio: return "insufficient-audio";
    case ErrorCode::UndefinedLoudness: return "undefined-loudness";
    case ErrorCode::Encoder: return "encoder";
    case ErrorCode::Dimension: return "dimension";
    case ErrorCode::InsufficientData: return "insufficient-data";
    case ErrorCode::Domain: return "domain";
    case ErrorCode::NumericalDivergence: return "numerical-divergence";
    case ErrorCode::Length: return "length";
    case ErrorCode::NoFrames: return "no-frames";
    case ErrorCode::Normalization: return "normalization";
    case ErrorCode::Conditioning: return "conditioning";
    }
    return "unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + " error: " + what), code_(code)
{
}

void fail(ErrorCode code, const std::string& what)
{
    throw Error(code, what);
}

} // namespace loudgen
