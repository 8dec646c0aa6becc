#include "loudgen/audio_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>

#include "loudgen/error.hpp"
#include "loudgen/rng.hpp"

namespace loudgen {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

AudioBuffer::AudioBuffer(int sample_rate, std::vector<std::vector<double>> channels)
    : sample_rate_(sample_rate), channels_(std::move(channels))
{
    require(sample_rate_ > 0, ErrorCode::Configuration, "sample rate must be positive");
    require(!channels_.empty() && channels_.size() <= 2, ErrorCode::ChannelCount,
            "audio buffers hold 1 or 2 channels, got " + std::to_string(channels_.size()));
    for (const auto& c : channels_) {
        require(c.size() == channels_.front().size(), ErrorCode::Dimension, "channels differ in frame count");
    }
}

AudioBuffer AudioBuffer::silent(int sample_rate, int channels, std::size_t frames)
{
    return AudioBuffer(sample_rate,
                       std::vector<std::vector<double>>(static_cast<std::size_t>(channels), std::vector<double>(frames, 0.0)));
}

double AudioBuffer::duration_seconds() const noexcept
{
    return static_cast<double>(frame_count()) / static_cast<double>(sample_rate_);
}

void AudioBuffer::scale(double gain)
{
    for (auto& c : channels_) {
        for (auto& s : c) {
            s *= gain;
        }
    }
}

namespace {

constexpr std::uint16_t kFormatPcm = 0x0001;
constexpr std::uint16_t kFormatFloat = 0x0003;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T load_le(const unsigned char* p)
{
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

template <typename T>
void put_le(std::string& out, T v)
{
    char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    out.append(bytes, sizeof(T));
}

struct FmtChunk {
    std::uint16_t format = 0;
    std::uint16_t channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t block_align = 0;
    std::uint16_t bits = 0;
};

FmtChunk parse_fmt(const unsigned char* p, std::uint32_t size)
{
    require(size >= 16, ErrorCode::Format, "fmt chunk too short");
    FmtChunk fmt;
    fmt.format = load_le<std::uint16_t>(p);
    fmt.channels = load_le<std::uint16_t>(p + 2);
    fmt.sample_rate = load_le<std::uint32_t>(p + 4);
    fmt.block_align = load_le<std::uint16_t>(p + 12);
    fmt.bits = load_le<std::uint16_t>(p + 14);
    if (fmt.format == kFormatExtensible) {
        require(size >= 40, ErrorCode::Format, "extensible fmt chunk too short");
        // First two bytes of the sub-format GUID carry the real format tag.
        fmt.format = load_le<std::uint16_t>(p + 24);
    }
    return fmt;
}

} // namespace

AudioBuffer read_wav(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path.string());
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    require(bytes.size() >= 12, ErrorCode::Format, "file too short for a RIFF header");
    require(std::memcmp(bytes.data(), "RIFF", 4) == 0 && std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
            ErrorCode::Format, "not a RIFF/WAVE file");

    std::optional<FmtChunk> fmt;
    const unsigned char* data = nullptr;
    std::size_t data_size = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char* chunk = bytes.data() + pos;
        const auto size = load_le<std::uint32_t>(chunk + 4);
        const std::size_t body = pos + 8;
        const std::size_t available = bytes.size() - body;
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            require(size <= available, ErrorCode::Format, "truncated fmt chunk");
            fmt = parse_fmt(bytes.data() + body, size);
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            // Tolerate writers that leave a too-large data size on truncated files.
            data = bytes.data() + body;
            data_size = std::min<std::size_t>(size, available);
            break;
        }
        pos = body + size + (size & 1u);
    }

    require(fmt.has_value(), ErrorCode::Format, "missing fmt chunk");
    require(data != nullptr, ErrorCode::Format, "missing data chunk");
    require(fmt->channels >= 1, ErrorCode::Format, "zero channels");
    require(fmt->channels <= 2, ErrorCode::ChannelCount,
            "only mono and stereo are supported, file has " + std::to_string(fmt->channels) + " channels");
    require(fmt->sample_rate > 0, ErrorCode::Format, "zero sample rate");

    const bool pcm = fmt->format == kFormatPcm && (fmt->bits == 16 || fmt->bits == 24);
    const bool flt = fmt->format == kFormatFloat && fmt->bits == 32;
    require(pcm || flt, ErrorCode::UnsupportedCodec,
            "unsupported encoding (format tag " + std::to_string(fmt->format) + ", " + std::to_string(fmt->bits) + " bits)");

    const std::size_t bytes_per_sample = fmt->bits / 8u;
    const std::size_t frame_bytes = bytes_per_sample * fmt->channels;
    const std::size_t frames = data_size / frame_bytes;

    std::vector<std::vector<double>> channels(fmt->channels, std::vector<double>(frames));
    for (std::size_t f = 0; f < frames; ++f) {
        for (std::size_t c = 0; c < fmt->channels; ++c) {
            const unsigned char* s = data + f * frame_bytes + c * bytes_per_sample;
            double v = 0.0;
            if (flt) {
                v = static_cast<double>(load_le<float>(s));
            } else if (fmt->bits == 16) {
                v = static_cast<double>(load_le<std::int16_t>(s)) / 32768.0;
            } else {
                std::int32_t x = static_cast<std::int32_t>(s[0]) | (static_cast<std::int32_t>(s[1]) << 8) |
                                 (static_cast<std::int32_t>(s[2]) << 16);
                if (x & 0x800000) {
                    x |= ~0xFFFFFF;
                }
                v = static_cast<double>(x) / 8388608.0;
            }
            channels[c][f] = v;
        }
    }
    return AudioBuffer(static_cast<int>(fmt->sample_rate), std::move(channels));
}

WavWriteReport write_wav(const std::filesystem::path& path, const AudioBuffer& buffer, WavEncoding encoding)
{
    const auto channels = static_cast<std::uint16_t>(buffer.channel_count());
    require(channels >= 1, ErrorCode::ChannelCount, "cannot write a buffer without channels");
    const std::uint16_t bits = encoding == WavEncoding::Pcm16 ? 16 : 32;
    const std::uint16_t block_align = static_cast<std::uint16_t>(channels * bits / 8);
    const std::size_t frames = buffer.frame_count();
    const std::size_t data_bytes = frames * block_align;
    require(data_bytes <= 0xFFFFFFFFull - 36, ErrorCode::Io, "audio too long for a RIFF file");

    std::string out;
    out.reserve(44 + data_bytes);
    out.append("RIFF");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(36 + data_bytes));
    out.append("WAVEfmt ");
    put_le<std::uint32_t>(out, 16);
    put_le<std::uint16_t>(out, encoding == WavEncoding::Pcm16 ? kFormatPcm : kFormatFloat);
    put_le<std::uint16_t>(out, channels);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(buffer.sample_rate()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(buffer.sample_rate()) * block_align);
    put_le<std::uint16_t>(out, block_align);
    put_le<std::uint16_t>(out, bits);
    out.append("data");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data_bytes));

    WavWriteReport report;
    for (std::size_t f = 0; f < frames; ++f) {
        for (int c = 0; c < buffer.channel_count(); ++c) {
            double v = buffer.channel(c)[f];
            if (v > 1.0 || v < -1.0 || std::isnan(v)) {
                ++report.clipped_samples;
                v = std::isnan(v) ? 0.0 : std::clamp(v, -1.0, 1.0);
            }
            if (encoding == WavEncoding::Float32) {
                put_le<float>(out, static_cast<float>(v));
            } else {
                const long q = std::clamp(std::lround(v * 32768.0), -32768L, 32767L);
                put_le<std::int16_t>(out, static_cast<std::int16_t>(q));
            }
        }
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(file), ErrorCode::Io, "cannot open " + path.string() + " for writing");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    require(static_cast<bool>(file), ErrorCode::Io, "write failed for " + path.string());
    return report;
}

double envelope_gain(const std::vector<std::pair<double, double>>& envelope, double time)
{
    if (envelope.empty()) {
        return 1.0;
    }
    if (time <= envelope.front().first) {
        return envelope.front().second;
    }
    if (time >= envelope.back().first) {
        return envelope.back().second;
    }
    const auto upper = std::upper_bound(envelope.begin(), envelope.end(), time,
                                        [](double t, const auto& point) { return t < point.first; });
    const auto lower = std::prev(upper);
    const double span = upper->first - lower->first;
    const double w = span > 0.0 ? (time - lower->first) / span : 0.0;
    return lower->second + w * (upper->second - lower->second);
}

AudioBuffer synth_signal(const SignalSpec& spec, int sample_rate, int channels)
{
    require(sample_rate > 0, ErrorCode::Configuration, "sample rate must be positive");
    require(channels == 1 || channels == 2, ErrorCode::ChannelCount, "synthesis supports 1 or 2 channels");
    require(spec.duration > 0.0, ErrorCode::Domain, "signal duration must be positive");
    require(spec.amplitude >= 0.0 && spec.amplitude <= 1.0, ErrorCode::Domain, "amplitude must lie in [0, 1]");
    require(std::is_sorted(spec.envelope.begin(), spec.envelope.end(),
                           [](const auto& a, const auto& b) { return a.first < b.first; }),
            ErrorCode::Domain, "envelope breakpoints must be time-ordered");
    if (spec.kind == SignalKind::Sine) {
        require(spec.frequency > 0.0 && spec.frequency < 0.5 * sample_rate, ErrorCode::Aliasing,
                "sine frequency must lie below Nyquist (" + std::to_string(0.5 * sample_rate) + " Hz)");
    }

    const auto frames = static_cast<std::size_t>(std::llround(spec.duration * sample_rate));
    std::vector<double> mono(frames, 0.0);
    Rng rng(spec.seed);
    const double step = 2.0 * std::numbers::pi * spec.frequency / sample_rate;
    for (std::size_t i = 0; i < frames; ++i) {
        double v = 0.0;
        switch (spec.kind) {
        case SignalKind::Sine:
            v = spec.amplitude * std::sin(step * static_cast<double>(i));
            break;
        case SignalKind::Silence:
            break;
        case SignalKind::WhiteNoise:
        case SignalKind::EnvelopeModulated:
            v = spec.amplitude * (2.0 * uniform01(rng) - 1.0);
            break;
        }
        if (!spec.envelope.empty()) {
            v *= envelope_gain(spec.envelope, static_cast<double>(i) / sample_rate);
        }
        mono[i] = v;
    }
    return AudioBuffer(sample_rate, std::vector<std::vector<double>>(static_cast<std::size_t>(channels), mono));
}

} // namespace loudgen
