#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "loudgen/lufs_meter.hpp"
#include "loudgen/nn.hpp"
#include "loudgen/optim.hpp"

namespace loudgen {

inline constexpr double kFeatureFps = 6.0;
inline constexpr Eigen::Index kMaxFeatureFrames = 360;

/// A grayscale frame; the synthetic path only looks at mean brightness.
struct Frame {
    std::vector<double> pixels;
};

class FrameSource {
public:
    virtual ~FrameSource() = default;
    virtual double duration_seconds() const = 0;
    virtual Frame frame_at(double seconds) const = 0;
};

/// Per-frame image encoder standing in for a pretrained vision backbone.
class VisualBackbone {
public:
    virtual ~VisualBackbone() = default;
    virtual Eigen::Index width() const = 0;
    virtual RowVector embed(const Frame& frame) const = 0;
};

/// Frames of uniform brightness from a track sampled at `track_fps`.
class SyntheticFrameSource final : public FrameSource {
public:
    SyntheticFrameSource(std::vector<double> brightness, double track_fps = kFeatureFps, std::size_t pixels = 16);

    double duration_seconds() const override;
    Frame frame_at(double seconds) const override;
    const std::vector<double>& brightness() const noexcept { return brightness_; }

private:
    std::vector<double> brightness_;
    double fps_;
    std::size_t pixels_;
};

/// Maps mean brightness b to [b, sin(k pi b), cos(k pi b), ...] of the given width.
class SyntheticBackbone final : public VisualBackbone {
public:
    explicit SyntheticBackbone(Eigen::Index width = 16);
    Eigen::Index width() const override { return width_; }
    RowVector embed(const Frame& frame) const override;

private:
    Eigen::Index width_;
};

enum class FeatureOrigin { Synthetic, External };

struct FrameFeatureSeq {
    double fps = kFeatureFps;
    Matrix features; // T x d_f
    FeatureOrigin origin = FeatureOrigin::Synthetic;
};

/// T = floor(duration * fps) rows, row i taken from the frame at i / fps.
FrameFeatureSeq extract_features(const FrameSource& source, const VisualBackbone& backbone, double fps = kFeatureFps);

struct RegressorConfig {
    int layers = 2;
    int heads = 4;
    Eigen::Index dim = 128;
    int mlp_ratio = 4;
    Eigen::Index feature_dim = 16;
    Eigen::Index max_frames = kMaxFeatureFrames;

    // Large-scale reference shape; informational only.
    int reference_layers = 12;
    int reference_heads = 8;
    Eigen::Index reference_dim = 768;

    void validate() const;
};

/// Transformer encoder over frame features with learned absolute positions and
/// a zero-initialized two-channel sigmoid head.
class LufsRegressor {
public:
    static LufsRegressor init(const RegressorConfig& config, std::uint64_t seed);
    static LufsRegressor from_parameters(const RegressorConfig& config, ParameterSet params);

    const RegressorConfig& config() const noexcept { return config_; }
    ParameterSet& parameters() noexcept { return params_; }
    const ParameterSet& parameters() const noexcept { return params_; }

    /// T x 2 in [0, 1]: column 0 left, column 1 right.
    ad::Var forward(ad::Tape& tape, const Matrix& features) const;

private:
    struct Layer {
        nn::LayerNorm norm_attn, norm_mlp;
        nn::Attention attention;
        nn::FeedForward mlp;
    };

    explicit LufsRegressor(const RegressorConfig& config) : config_(config) {}

    RegressorConfig config_;
    ParameterSet params_;
    nn::Linear input_, head_;
    std::size_t positions_ = 0;
    std::vector<Layer> layers_;
    nn::LayerNorm final_norm_;
};

std::pair<NormalizedSeries, NormalizedSeries> predict(const LufsRegressor& model, const FrameFeatureSeq& feats);

struct RegressionExample {
    FrameFeatureSeq features;
    NormalizedSeries left;
    NormalizedSeries right;
};

struct RegressorTraining {
    int epochs = 30;
    /// 0 trains on the full dataset every step.
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
    OptimizerConfig optimizer{OptimizerKind::Adam, 2e-3};
    /// Called with (epoch, mean training loss) after every epoch.
    std::function<void(int, double)> on_epoch;
};

struct TrainedRegressor {
    LufsRegressor model;
    std::vector<double> loss_curve;
};

/// Mean squared error over all (frame, channel) entries of a set of examples.
double regression_loss(const LufsRegressor& model, const std::vector<RegressionExample>& examples);

TrainedRegressor train_regressor(const RegressorConfig& config, const std::vector<RegressionExample>& dataset,
                                 const RegressorTraining& training);

/// Mean absolute error over all entries.
double regression_mae(const LufsRegressor& model, const std::vector<RegressionExample>& examples);

} // namespace loudgen
