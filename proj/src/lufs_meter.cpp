#include "loudgen/lufs_meter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "loudgen/error.hpp"

namespace loudgen {

std::complex<double> Biquad::response(double frequency, double sample_rate) const
{
    const double w = 2.0 * std::numbers::pi * frequency / sample_rate;
    const std::complex<double> z1 = std::polar(1.0, -w);
    const std::complex<double> z2 = z1 * z1;
    return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
}

bool Biquad::stable() const noexcept
{
    // Jury conditions for z^2 + a1 z + a2.
    return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2;
}

double FilterCascade::gain_db(double frequency) const
{
    const auto h = shelf.response(frequency, sample_rate) * highpass.response(frequency, sample_rate);
    return 20.0 * std::log10(std::abs(h));
}

FilterCascade design_k_weighting(int sample_rate)
{
    require(sample_rate >= 8000, ErrorCode::Design,
            "K-weighting needs a sample rate of at least 8000 Hz, got " + std::to_string(sample_rate));
    const double fs = sample_rate;

    // Analog prototype parameters of the BS.1770 filters, discretized with the
    // bilinear transform at the target rate.
    FilterCascade cascade;
    cascade.sample_rate = sample_rate;
    {
        constexpr double f0 = 1681.974450955533;
        constexpr double gain_db = 3.999843853973347;
        constexpr double q = 0.7071752369554196;
        const double k = std::tan(std::numbers::pi * f0 / fs);
        const double vh = std::pow(10.0, gain_db / 20.0);
        const double vb = std::pow(vh, 0.4996667741545416);
        const double a0 = 1.0 + k / q + k * k;
        cascade.shelf = Biquad{(vh + vb * k / q + k * k) / a0, 2.0 * (k * k - vh) / a0, (vh - vb * k / q + k * k) / a0,
                               2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0};
    }
    {
        constexpr double f0 = 38.13547087602444;
        constexpr double q = 0.5003270373238773;
        const double k = std::tan(std::numbers::pi * f0 / fs);
        const double a0 = 1.0 + k / q + k * k;
        cascade.highpass = Biquad{1.0, -2.0, 1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0};
    }
    return cascade;
}

namespace {

void run_biquad(const Biquad& f, std::vector<double>& x)
{
    // Transposed direct form II.
    double s1 = 0.0;
    double s2 = 0.0;
    for (double& v : x) {
        const double in = v;
        const double out = f.b0 * in + s1;
        s1 = f.b1 * in - f.a1 * out + s2;
        s2 = f.b2 * in - f.a2 * out;
        v = out;
    }
}

double loudness_of_power(double mean_square)
{
    if (mean_square <= 0.0) {
        return -std::numeric_limits<double>::infinity();
    }
    return kLoudnessOffset + 10.0 * std::log10(mean_square);
}

ChannelRole role_for(int channel, int channel_count)
{
    if (channel_count == 1) {
        return ChannelRole::Mono;
    }
    return channel == 0 ? ChannelRole::Left : ChannelRole::Right;
}

} // namespace

std::size_t window_length_samples(double seconds, int sample_rate)
{
    return static_cast<std::size_t>(std::llround(seconds * sample_rate));
}

AudioBuffer apply_k_weighting(const AudioBuffer& buffer, const FilterCascade& cascade)
{
    require(cascade.sample_rate == buffer.sample_rate(), ErrorCode::Configuration,
            "filter designed for " + std::to_string(cascade.sample_rate) + " Hz applied to " +
                std::to_string(buffer.sample_rate()) + " Hz audio");
    auto channels = buffer.channels();
    for (auto& c : channels) {
        run_biquad(cascade.shelf, c);
        run_biquad(cascade.highpass, c);
    }
    return AudioBuffer(buffer.sample_rate(), std::move(channels));
}

std::vector<LufsSeries> momentary_lufs(const AudioBuffer& buffer, double window_seconds, double hop_seconds)
{
    require(window_seconds > 0.0 && hop_seconds > 0.0, ErrorCode::Domain, "window and hop must be positive");
    const std::size_t window = window_length_samples(window_seconds, buffer.sample_rate());
    const std::size_t hop = window_length_samples(hop_seconds, buffer.sample_rate());
    require(window >= 1 && hop >= 1, ErrorCode::Domain, "window shorter than one sample");
    require(buffer.frame_count() >= window, ErrorCode::InsufficientAudio,
            "audio of " + std::to_string(buffer.frame_count()) + " frames is shorter than one window of " +
                std::to_string(window));

    const AudioBuffer weighted = apply_k_weighting(buffer, design_k_weighting(buffer.sample_rate()));
    const std::size_t count = (buffer.frame_count() - window) / hop + 1;

    std::vector<LufsSeries> out;
    for (int c = 0; c < weighted.channel_count(); ++c) {
        const auto& x = weighted.channel(c);
        LufsSeries series{role_for(c, weighted.channel_count()), window_seconds, hop_seconds, {}};
        series.values.reserve(count);
        for (std::size_t w = 0; w < count; ++w) {
            const auto first = x.begin() + static_cast<std::ptrdiff_t>(w * hop);
            const double energy =
                std::transform_reduce(first, first + static_cast<std::ptrdiff_t>(window), 0.0, std::plus<>(),
                                      [](double s) { return s * s; });
            series.values.push_back(loudness_of_power(energy / static_cast<double>(window)));
        }
        out.push_back(std::move(series));
    }
    return out;
}

double integrated_lufs(const AudioBuffer& buffer)
{
    const std::size_t step = window_length_samples(0.1, buffer.sample_rate());
    const std::size_t block = 4 * step;
    require(buffer.frame_count() >= block, ErrorCode::InsufficientAudio, "integrated loudness needs at least 400 ms");

    const AudioBuffer weighted = apply_k_weighting(buffer, design_k_weighting(buffer.sample_rate()));

    // Per-100 ms sub-block energies summed over channels, then 4 sub-blocks per gating block.
    const std::size_t subblocks = weighted.frame_count() / step;
    std::vector<double> sub(subblocks, 0.0);
    for (int c = 0; c < weighted.channel_count(); ++c) {
        const auto& x = weighted.channel(c);
        for (std::size_t s = 0; s < subblocks; ++s) {
            double e = 0.0;
            for (std::size_t i = s * step; i < (s + 1) * step; ++i) {
                e += x[i] * x[i];
            }
            sub[s] += e;
        }
    }

    std::vector<double> blocks;
    for (std::size_t j = 0; j + 4 <= subblocks; ++j) {
        blocks.push_back((sub[j] + sub[j + 1] + sub[j + 2] + sub[j + 3]) / static_cast<double>(block));
    }

    const double absolute_power = std::pow(10.0, (kLufsFloor - kLoudnessOffset) / 10.0);
    std::vector<double> gated;
    std::copy_if(blocks.begin(), blocks.end(), std::back_inserter(gated), [&](double z) { return z > absolute_power; });
    require(!gated.empty(), ErrorCode::UndefinedLoudness, "every block fell below the absolute gate");

    const double mean_abs = std::accumulate(gated.begin(), gated.end(), 0.0) / static_cast<double>(gated.size());
    const double relative_power = mean_abs * std::pow(10.0, -10.0 / 10.0);
    double sum = 0.0;
    std::size_t n = 0;
    for (const double z : gated) {
        if (z > relative_power) {
            sum += z;
            ++n;
        }
    }
    require(n > 0, ErrorCode::UndefinedLoudness, "every block fell below the relative gate");
    return loudness_of_power(sum / static_cast<double>(n));
}

double clip_normalize(double lufs)
{
    if (std::isnan(lufs)) {
        return 0.0;
    }
    return (std::clamp(lufs, kLufsFloor, kLufsCeiling) - kLufsFloor) / (kLufsCeiling - kLufsFloor);
}

NormalizedSeries clip_normalize(const LufsSeries& series)
{
    NormalizedSeries out{series.channel, {}};
    out.values.reserve(series.values.size());
    for (const double v : series.values) {
        out.values.push_back(clip_normalize(v));
    }
    return out;
}

double denormalize_lufs(double normalized)
{
    return kLufsFloor + std::clamp(normalized, 0.0, 1.0) * (kLufsCeiling - kLufsFloor);
}

} // namespace loudgen
