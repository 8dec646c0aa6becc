#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

namespace loudgen {

/// Planar multichannel audio in double precision. One or two channels of
/// equal length; samples nominally in [-1, 1].
class AudioBuffer {
public:
    AudioBuffer() = default;
    AudioBuffer(int sample_rate, std::vector<std::vector<double>> channels);

    /// Zero-filled buffer.
    static AudioBuffer silent(int sample_rate, int channels, std::size_t frames);

    int sample_rate() const noexcept { return sample_rate_; }
    int channel_count() const noexcept { return static_cast<int>(channels_.size()); }
    std::size_t frame_count() const noexcept { return channels_.empty() ? 0 : channels_.front().size(); }
    double duration_seconds() const noexcept;

    const std::vector<double>& channel(int index) const { return channels_.at(static_cast<std::size_t>(index)); }
    std::vector<double>& channel(int index) { return channels_.at(static_cast<std::size_t>(index)); }
    const std::vector<std::vector<double>>& channels() const noexcept { return channels_; }

    void scale(double gain);

    bool operator==(const AudioBuffer&) const = default;

private:
    int sample_rate_ = 44100;
    std::vector<std::vector<double>> channels_;
};

enum class WavEncoding { Pcm16, Float32 };

struct WavWriteReport {
    std::size_t clipped_samples = 0;
};

AudioBuffer read_wav(const std::filesystem::path& path);

/// Samples outside [-1, 1] are hard-clipped and counted in the report.
WavWriteReport write_wav(const std::filesystem::path& path, const AudioBuffer& buffer, WavEncoding encoding);

enum class SignalKind { Sine, Silence, WhiteNoise, EnvelopeModulated };

struct SignalSpec {
    SignalKind kind = SignalKind::Sine;
    double frequency = 997.0;
    double amplitude = 1.0;
    double duration = 1.0;
    /// (time seconds, linear gain) breakpoints; linear between, held at the ends.
    std::vector<std::pair<double, double>> envelope;
    std::uint64_t seed = 0;
};

/// Deterministic test signals. Sine phase starts at 0, noise is uniform in
/// [-amplitude, amplitude] and every channel gets the same samples.
/// EnvelopeModulated is white noise shaped by the envelope; an envelope on
/// any other kind is applied too.
AudioBuffer synth_signal(const SignalSpec& spec, int sample_rate, int channels);

double envelope_gain(const std::vector<std::pair<double, double>>& envelope, double time);

} // namespace loudgen
