#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace loudgen {

enum class ErrorCode {
    Format,
    UnsupportedCodec,
    ChannelCount,
    Io,
    Aliasing,
    Design,
    Configuration,
    InsufficientAudio,
    UndefinedLoudness,
    Encoder,
    Dimension,
    InsufficientData,
    Domain,
    NumericalDivergence,
    Length,
    NoFrames,
    Normalization,
    Conditioning,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for the toolkit; callers branch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

inline void require(bool condition, ErrorCode code, const std::string& what)
{
    if (!condition) {
        fail(code, what);
    }
}

} // namespace loudgen
