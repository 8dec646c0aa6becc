#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace loudgen {

/// Everything a toy run depends on. Every random stream is derived from
/// `seed` with derive_seed and a fixed subsystem tag.
struct ToyConfig {
    std::uint64_t seed = 1;

    struct Data {
        int sample_rate = 9600;
        double clip_seconds = 1.0;
        int downsample = 32;
        /// Band-pass noise source.
        double band_center = 600.0;
        double band_q = 4.0;
        /// Number of cascaded band-pass sections.
        int band_order = 1;
        /// "noise": fresh band-pass noise per clip. "periodic": one random-phase
        /// multitone per channel, periodic in the token length, with the
        /// band-pass magnitude response as its spectrum.
        std::string carrier = "periodic";
        /// Range of target normalized loudness.
        double loudness_low = 0.45;
        double loudness_high = 0.9;
        /// Latent = stacked samples times this factor.
        double latent_scale = 12.0;
        int examples = 256;
    } data;

    struct Condition {
        int m = 6;
        int width = 32;
    } condition;

    struct Model {
        int blocks = 2;
        int heads = 4;
        int embed_dim = 64;
        int mlp_ratio = 2;
        int time_features = 16;
        int position_features = 16;
    } model;

    struct Diffusion {
        std::string objective = "v";
        int steps = 100;
        double guidance = 7.0;
        double modality_dropout = 0.3;
        double whole_dropout = 0.1;
    } diffusion;

    struct Training {
        int steps = 3000;
        int batch = 8;
        double learning_rate = 1e-3;
        std::string optimizer = "adam";
        double clip_norm = 1.0;
        int warmup = 100;
        int log_every = 100;
        /// Fixed (example, t, noise) draws used for the reported loss.
        int eval_draws = 64;
    } training;

    struct Predictor {
        int layers = 2;
        int heads = 4;
        int dim = 128;
        int mlp_ratio = 4;
        int feature_dim = 16;
        int examples = 96;
        int held_out = 32;
        double max_seconds = 10.0;
        int epochs = 30;
        int batch = 8;
        double learning_rate = 2e-3;
    } predictor;

    struct Evaluation {
        int generations = 20;
        int ablation_clips = 4;
    } evaluation;

    void validate() const;
};

/// Parses INI text (sections as above, `seed` at top level), then applies
/// `section.key=value` overrides in order. Unknown keys are configuration
/// errors.
ToyConfig parse_toy_config(const std::string& ini_text, const std::vector<std::string>& overrides = {});
ToyConfig load_toy_config(const std::optional<std::filesystem::path>& path,
                          const std::vector<std::string>& overrides = {});

/// Canonical INI rendering; parse_toy_config(to_ini(c)) == c.
std::string to_ini(const ToyConfig& config);

} // namespace loudgen
