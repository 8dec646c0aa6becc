#include "loudgen/latent_codec.hpp"

#include <cmath>
#include <string>

#include "loudgen/error.hpp"
#include "loudgen/rng.hpp"

namespace loudgen {

namespace {

void require_stereo(const AudioBuffer& buffer)
{
    require(buffer.channel_count() == 2, ErrorCode::ChannelCount,
            "latent codecs need stereo input, got " + std::to_string(buffer.channel_count()) + " channel(s)");
}

/// frames x 2r matrix; row f holds left then right samples of frame f.
Matrix stack_frames(const AudioBuffer& buffer, int r)
{
    const Eigen::Index frames = latent_frames(buffer.frame_count(), r);
    Matrix out = Matrix::Zero(frames, 2 * r);
    for (int c = 0; c < 2; ++c) {
        const auto& x = buffer.channel(c);
        for (std::size_t i = 0; i < x.size(); ++i) {
            out(static_cast<Eigen::Index>(i / r), c * r + static_cast<Eigen::Index>(i % r)) = x[i];
        }
    }
    return out;
}

AudioBuffer unstack_frames(const Matrix& stacked, int r, int rate, std::size_t length)
{
    std::vector<std::vector<double>> channels(2, std::vector<double>(length));
    for (int c = 0; c < 2; ++c) {
        for (std::size_t i = 0; i < length; ++i) {
            channels[c][i] = stacked(static_cast<Eigen::Index>(i / r), c * r + static_cast<Eigen::Index>(i % r));
        }
    }
    return AudioBuffer(rate, std::move(channels));
}

void check_metadata(const Latent& z, LatentLayout layout, Eigen::Index channels, int r)
{
    require(z.layout == layout, ErrorCode::Format, "latent layout does not match the codec");
    require(z.downsample == r, ErrorCode::Format, "latent downsample factor does not match the codec");
    require(z.channels == channels && z.data.rows() == channels, ErrorCode::Format, "latent channel count mismatch");
    require(z.frames == z.data.cols(), ErrorCode::Format, "latent frame count mismatch");
    require(z.source_rate > 0, ErrorCode::Format, "latent lacks a source rate");
    require(z.unpadded_length <= static_cast<std::size_t>(z.frames) * static_cast<std::size_t>(r) &&
                latent_frames(z.unpadded_length, r) == z.frames,
            ErrorCode::Format, "latent unpadded length inconsistent with its frame count");
}

} // namespace

Eigen::Index latent_frames(std::size_t samples, int downsample)
{
    return static_cast<Eigen::Index>((samples + static_cast<std::size_t>(downsample) - 1) /
                                     static_cast<std::size_t>(downsample));
}

StackingCodec::StackingCodec(int downsample) : r_(downsample)
{
    require(downsample > 0 && downsample % 2 == 0, ErrorCode::Configuration,
            "downsample factor must be a positive even integer");
}

Latent StackingCodec::encode(const AudioBuffer& buffer) const
{
    require_stereo(buffer);
    Matrix stacked = stack_frames(buffer, r_);
    return Latent{LatentLayout::Stacked,     latent_channels(),   stacked.rows(),        r_,
                  buffer.sample_rate(),      buffer.frame_count(), stacked.transpose()};
}

AudioBuffer StackingCodec::decode(const Latent& latent) const
{
    check_metadata(latent, LatentLayout::Stacked, latent_channels(), r_);
    return unstack_frames(latent.data.transpose(), r_, latent.source_rate, latent.unpadded_length);
}

LearnedCodec::LearnedCodec(int downsample, Eigen::Index latent_channels, Eigen::Index hidden, std::uint64_t seed)
    : r_(downsample), channels_(latent_channels)
{
    require(downsample > 0 && downsample % 2 == 0, ErrorCode::Configuration,
            "downsample factor must be a positive even integer");
    require(latent_channels >= 1 && hidden >= 1, ErrorCode::Configuration, "codec widths must be positive");
    Rng rng(seed);
    const Eigen::Index in = 2 * static_cast<Eigen::Index>(r_);
    const auto normal = [&](Eigen::Index rows, Eigen::Index cols) {
        return Matrix(standard_normal_matrix(rng, rows, cols) / std::sqrt(static_cast<double>(rows)));
    };
    enc_in_w_ = params_.add("encoder.in.weight", normal(in, hidden));
    enc_in_b_ = params_.add("encoder.in.bias", Matrix::Zero(1, hidden));
    enc_out_w_ = params_.add("encoder.out.weight", normal(hidden, latent_channels));
    enc_out_b_ = params_.add("encoder.out.bias", Matrix::Zero(1, latent_channels));
    dec_in_w_ = params_.add("decoder.in.weight", normal(latent_channels, hidden));
    dec_in_b_ = params_.add("decoder.in.bias", Matrix::Zero(1, hidden));
    dec_out_w_ = params_.add("decoder.out.weight", normal(hidden, in));
    dec_out_b_ = params_.add("decoder.out.bias", Matrix::Zero(1, in));
}

ad::Var LearnedCodec::encode_frames(ad::Tape& tape, const ad::Var& frames) const
{
    const auto p = [&](std::size_t i) { return tape.parameter(params_, i); };
    const ad::Var h = ad::tanh(ad::add_row(ad::matmul(frames, p(enc_in_w_)), p(enc_in_b_)));
    return ad::add_row(ad::matmul(h, p(enc_out_w_)), p(enc_out_b_));
}

ad::Var LearnedCodec::decode_frames(ad::Tape& tape, const ad::Var& codes) const
{
    const auto p = [&](std::size_t i) { return tape.parameter(params_, i); };
    const ad::Var h = ad::tanh(ad::add_row(ad::matmul(codes, p(dec_in_w_)), p(dec_in_b_)));
    return ad::add_row(ad::matmul(h, p(dec_out_w_)), p(dec_out_b_));
}

Latent LearnedCodec::encode(const AudioBuffer& buffer) const
{
    require_stereo(buffer);
    ad::Tape tape(false);
    const ad::Var codes = encode_frames(tape, tape.constant(stack_frames(buffer, r_)));
    return Latent{LatentLayout::Learned, channels_,          codes.rows(), r_, buffer.sample_rate(),
                  buffer.frame_count(),  codes.value().transpose()};
}

AudioBuffer LearnedCodec::decode(const Latent& latent) const
{
    check_metadata(latent, LatentLayout::Learned, channels_, r_);
    ad::Tape tape(false);
    const ad::Var frames = decode_frames(tape, tape.constant(latent.data.transpose()));
    return unstack_frames(frames.value(), r_, latent.source_rate, latent.unpadded_length);
}

double LearnedCodec::train_step(const AudioBuffer& batch, Optimizer& optimizer)
{
    require_stereo(batch);
    const Matrix frames = stack_frames(batch, r_);
    ad::Tape tape;
    const ad::Var recon = decode_frames(tape, encode_frames(tape, tape.constant(frames)));
    const ad::Var loss = ad::mse(recon, frames);
    const double value = loss.value()(0, 0);
    require(std::isfinite(value), ErrorCode::NumericalDivergence, "codec reconstruction loss is not finite");
    tape.backward(loss);
    optimizer.step(params_, tape.parameter_gradients(params_));
    return value;
}

double LearnedCodec::reconstruction_error(const AudioBuffer& buffer) const
{
    const AudioBuffer recon = decode(encode(buffer));
    double s = 0.0;
    std::size_t n = 0;
    for (int c = 0; c < 2; ++c) {
        for (std::size_t i = 0; i < buffer.frame_count(); ++i) {
            const double d = recon.channel(c)[i] - buffer.channel(c)[i];
            s += d * d;
            ++n;
        }
    }
    return n == 0 ? 0.0 : s / static_cast<double>(n);
}

} // namespace loudgen
