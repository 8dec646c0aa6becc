#pragma once

#include <complex>
#include <vector>

#include "loudgen/audio_io.hpp"

namespace loudgen {

/// Direct-form biquad, a0 normalized to 1.
struct Biquad {
    double b0 = 1.0, b1 = 0.0, b2 = 0.0, a1 = 0.0, a2 = 0.0;

    std::complex<double> response(double frequency, double sample_rate) const;
    bool stable() const noexcept;
};

/// BS.1770 K-weighting: high-shelf pre-filter followed by the RLB high-pass.
struct FilterCascade {
    Biquad shelf;
    Biquad highpass;
    int sample_rate = 0;

    double gain_db(double frequency) const;
};

/// Calibration constant of the BS.1770 loudness formula.
inline constexpr double kLoudnessOffset = -0.691;
inline constexpr double kLufsFloor = -70.0;
inline constexpr double kLufsCeiling = 0.0;
inline constexpr double kMomentaryWindow = 1.0 / 6.0;

enum class ChannelRole { Left, Right, Mono };

struct LufsSeries {
    ChannelRole channel = ChannelRole::Mono;
    double window_seconds = kMomentaryWindow;
    double hop_seconds = kMomentaryWindow;
    /// May contain -infinity for windows of digital silence.
    std::vector<double> values;
};

struct NormalizedSeries {
    ChannelRole channel = ChannelRole::Mono;
    std::vector<double> values;
};

FilterCascade design_k_weighting(int sample_rate);

/// Filters every channel independently from a zero state.
AudioBuffer apply_k_weighting(const AudioBuffer& buffer, const FilterCascade& cascade);

/// Per-channel loudness over fixed windows: -0.691 + 10 log10(mean square of
/// the K-weighted channel). Trailing partial windows are dropped; no gating.
std::vector<LufsSeries> momentary_lufs(const AudioBuffer& buffer, double window_seconds = kMomentaryWindow,
                                       double hop_seconds = kMomentaryWindow);

/// Gated integrated loudness with unit L/R weights: 400 ms blocks at 75 %
/// overlap, absolute gate at -70 LUFS, relative gate 10 LU below.
double integrated_lufs(const AudioBuffer& buffer);

/// Clip to [-70, 0] then map affinely onto [0, 1].
NormalizedSeries clip_normalize(const LufsSeries& series);
double clip_normalize(double lufs);

/// Inverse of clip_normalize on [0, 1].
double denormalize_lufs(double normalized);

std::size_t window_length_samples(double seconds, int sample_rate);

} // namespace loudgen
