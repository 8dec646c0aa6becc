#pragma once

#include <cstddef>
#include <cstdint>

#include "loudgen/audio_io.hpp"
#include "loudgen/autodiff.hpp"
#include "loudgen/optim.hpp"

namespace loudgen {

enum class LatentLayout : std::uint32_t { Stacked = 1, Learned = 2 };

/// Latent code: `channels` rows by `frames` columns plus the metadata needed
/// to invert it. frames * downsample covers the (zero-padded) source length.
struct Latent {
    LatentLayout layout = LatentLayout::Stacked;
    Eigen::Index channels = 0;
    Eigen::Index frames = 0;
    int downsample = 0;
    int source_rate = 0;
    std::size_t unpadded_length = 0;
    Matrix data; // channels x frames

    bool operator==(const Latent&) const = default;
};

class LatentCodec {
public:
    virtual ~LatentCodec() = default;
    virtual Latent encode(const AudioBuffer& buffer) const = 0;
    virtual AudioBuffer decode(const Latent& latent) const = 0;
    virtual Eigen::Index latent_channels() const = 0;
    virtual int downsample() const = 0;
};

/// Lossless codec: each latent frame stacks r consecutive samples of the left
/// channel over r samples of the right, so C = 2r and the raw-to-latent value
/// ratio 2r / C is exactly 1.
class StackingCodec final : public LatentCodec {
public:
    explicit StackingCodec(int downsample);

    Latent encode(const AudioBuffer& buffer) const override;
    AudioBuffer decode(const Latent& latent) const override;
    Eigen::Index latent_channels() const override { return 2 * static_cast<Eigen::Index>(r_); }
    int downsample() const override { return r_; }

    double compression_ratio() const noexcept { return 2.0 * r_ / static_cast<double>(latent_channels()); }

private:
    int r_;
};

/// Frames needed to cover `samples` at downsample factor r.
Eigen::Index latent_frames(std::size_t samples, int downsample);

/// Small lossy autoencoder: a kernel=stride=r convolution (frame-wise dense
/// layer) with one tanh hidden layer on each side, trained on L2
/// reconstruction only.
class LearnedCodec final : public LatentCodec {
public:
    LearnedCodec(int downsample, Eigen::Index latent_channels, Eigen::Index hidden, std::uint64_t seed);

    Latent encode(const AudioBuffer& buffer) const override;
    AudioBuffer decode(const Latent& latent) const override;
    Eigen::Index latent_channels() const override { return channels_; }
    int downsample() const override { return r_; }

    /// One optimizer step of mean squared reconstruction error over the
    /// stacked frames of `batch`; returns the pre-step loss.
    double train_step(const AudioBuffer& batch, Optimizer& optimizer);
    double reconstruction_error(const AudioBuffer& buffer) const;

    ParameterSet& parameters() noexcept { return params_; }
    const ParameterSet& parameters() const noexcept { return params_; }

private:
    ad::Var encode_frames(ad::Tape& tape, const ad::Var& frames) const;
    ad::Var decode_frames(ad::Tape& tape, const ad::Var& codes) const;

    int r_;
    Eigen::Index channels_;
    ParameterSet params_;
    std::size_t enc_in_w_, enc_in_b_, enc_out_w_, enc_out_b_;
    std::size_t dec_in_w_, dec_in_b_, dec_out_w_, dec_out_b_;
};

} // namespace loudgen
