#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "loudgen/condition.hpp"
#include "loudgen/config.hpp"
#include "loudgen/containers.hpp"
#include "loudgen/denoiser.hpp"
#include "loudgen/latent_codec.hpp"
#include "loudgen/lufs_predictor.hpp"

// The loudness-conditioned synthetic task: band-pass noise whose per-window
// gain realizes a target loudness curve, stacked into latents, conditioned
// on the measured curve.
namespace loudgen {

using ChannelPair = std::pair<NormalizedSeries, NormalizedSeries>;

struct Prompts {
    std::optional<std::string> language;
    std::optional<std::string> audio;
    std::optional<std::string> video;
};

class ToyWorld {
public:
    explicit ToyWorld(const ToyConfig& config);
    /// Restores the embedder tables from a checkpoint.
    ToyWorld(const ToyConfig& config, ParameterSet embedder_tables);

    const ToyConfig& config() const noexcept { return config_; }
    const ConditionEmbedder& embedder() const noexcept { return embedder_; }
    const StackingCodec& codec() const noexcept { return codec_; }
    DenoiserConfig denoiser_config() const;

    std::size_t samples(double seconds) const;
    /// Whole 1/6 s windows in a clip of this length.
    std::size_t windows(double seconds) const;

    /// A smooth random curve of normalized loudness inside the data range.
    std::vector<double> random_curve(Rng& rng, std::size_t points) const;

    /// Stereo band-pass noise; each channel's windows are scaled toward the
    /// target normalized loudness (resampled to the window count).
    AudioBuffer render(const std::vector<double>& left, const std::vector<double>& right, double seconds,
                       std::uint64_t seed) const;
    ChannelPair measure(const AudioBuffer& audio) const;

    Matrix encode(const AudioBuffer& audio) const;
    AudioBuffer decode(const Matrix& latent, std::size_t samples) const;

    /// Missing prompts and a missing curve become zero blocks; timing is (0, seconds).
    ConditionSet condition(const Prompts& prompts, const std::optional<ChannelPair>& lufs, double seconds) const;

    std::vector<TrainingExample> dataset(std::uint64_t seed, int count) const;

private:
    std::vector<double> periodic_carrier(std::uint64_t seed, std::size_t n) const;

    ToyConfig config_;
    ConditionEmbedder embedder_;
    SyntheticEncoder encoder_;
    StackingCodec codec_;
};

struct LossPoint {
    int step = 0;
    /// Mean minibatch loss since the previous point (NaN at step 0).
    double train_loss = 0.0;
    double eval_loss = 0.0;
};

struct ToyTrainOutcome {
    std::vector<LossPoint> curve;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    int steps_done = 0;
    /// Set when training stopped on a numerical error; the model then holds
    /// the last finite parameters.
    std::optional<std::string> divergence;
};

/// Mean squared error of the prediction target over fixed draws of
/// (example, t, noise); t is stratified over (0, 1). No condition dropout.
class EvalLoss {
public:
    EvalLoss(const std::vector<TrainingExample>& data, int draws, Objective objective, std::uint64_t seed);
    double operator()(const Denoiser& model) const;

private:
    struct Draw {
        std::size_t example;
        double t;
        Matrix z_t;
        Matrix target;
    };
    const std::vector<TrainingExample>* data_;
    std::vector<Draw> draws_;
};

ToyTrainOutcome train_toy(Denoiser& model, const ToyWorld& world, const std::vector<TrainingExample>& data,
                          const std::function<void(const LossPoint&)>& on_log = {});

Checkpoint make_toy_checkpoint(const ToyWorld& world, const Denoiser& model,
                               const std::map<std::string, std::string>& extra = {});

struct ToyCheckpoint {
    ToyConfig config;
    ToyWorld world;
    Denoiser model;
};

ToyCheckpoint load_toy_checkpoint(const std::filesystem::path& path);

SamplerConfig sampler_config(const ToyConfig& config, std::uint64_t seed);

inline constexpr double kMaxDurationSeconds = 60.0;

/// Samples a latent for `seconds` of audio and decodes it, trimmed to
/// exactly round(seconds * rate) frames.
AudioBuffer generate_audio(const Denoiser& model, const ToyWorld& world, const ConditionSet& cond,
                           const SamplerConfig& sampler, double seconds);

struct FidelityReport {
    double pearson = 0.0;
    std::vector<double> conditioned;
    std::vector<double> measured;
};

/// Left rises and right falls linearly across the data loudness range.
ChannelPair ramp_curves(const ToyWorld& world, double seconds);

/// Pearson correlation between conditioned and measured normalized loudness,
/// pooled over windows, channels and `generations` seeded samples.
FidelityReport ramp_fidelity(const Denoiser& model, const ToyWorld& world, int generations);

// Synthetic video task: a brightness track at 6 fps with loudness a fixed
// function of brightness.
std::vector<double> random_brightness(Rng& rng, std::size_t frames);
ChannelPair brightness_to_loudness(const ToyConfig& config, const std::vector<double>& brightness);
FrameFeatureSeq brightness_features(const ToyConfig& config, const std::vector<double>& brightness);

RegressorConfig regressor_config(const ToyConfig& config);
RegressorTraining regressor_training(const ToyConfig& config);

struct PredictorData {
    std::vector<RegressionExample> train;
    std::vector<RegressionExample> held_out;
};

PredictorData predictor_dataset(const ToyConfig& config);

struct AblationRow {
    std::string combination;
    bool language = false;
    bool audio = false;
    bool video = true;
    bool lufs = false;
    double fd = 0.0;
    double kl = 0.0;
    double av_align = 0.0;
};

/// Video always present; language, audio and the loudness condition toggled.
/// The loudness rows use the ground-truth curve, or the predictor's output
/// from the brightness track when `predictor` is given.
std::vector<AblationRow> run_ablation(const Denoiser& model, const ToyWorld& world, int clips,
                                      const LufsRegressor* predictor = nullptr);

} // namespace loudgen
