#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "loudgen/diffusion.hpp"
#include "loudgen/nn.hpp"
#include "loudgen/optim.hpp"

namespace loudgen {

struct DenoiserConfig {
    int blocks = 4;
    int heads = 4;
    Eigen::Index embed_dim = 64;
    Eigen::Index latent_channels = 64;
    Eigen::Index max_frames = 512;
    /// 8M
    Eigen::Index cond_rows = 8;
    /// d_tau
    Eigen::Index cond_dim = 64;
    int mlp_ratio = 4;
    /// Sinusoid count for diffusion time and for relative positions.
    Eigen::Index time_features = 16;
    Eigen::Index position_features = 16;

    // Large-scale reference shape; informational only.
    int reference_blocks = 20;
    int reference_heads = 24;

    void validate() const;
    Eigen::Index cond_m() const noexcept { return cond_rows / ConditionSet::kBlocks; }
};

/// Closed-form parameter count. With E = embed_dim, C = latent_channels,
/// d = cond_dim, H = mlp_ratio E, P = position_features, Q = time_features:
///   top    = (C E + E) + P E + (Q E + E) + (8 + P) d + 2 E + (E C + C)
///   block  = 6 E + (4 E^2 + 4 E) + (2 E^2 + 2 d E + 4 E) + (2 E H + H + E)
///   total  = top + blocks * block
std::size_t denoiser_parameter_count(const DenoiserConfig& config);

/// Latent frames are tokens. Each block is pre-norm self-attention, then
/// cross-attention over the condition rows, then a GELU MLP. Diffusion time is
/// a learned embedding of sinusoid features added to every token; tokens also
/// receive a learned embedding of their relative position in the clip, and
/// condition rows a learned embedding of (block, relative row).
class Denoiser final : public TrainableDenoiser {
public:
    static Denoiser init(const DenoiserConfig& config, std::uint64_t seed);

    const DenoiserConfig& config() const noexcept { return config_; }
    ParameterSet& parameters() override { return params_; }
    const ParameterSet& parameters() const override { return params_; }

    ad::Var forward(ad::Tape& tape, const Matrix& z_t, double t, const ConditionSet& cond) const override;
    /// Same on a raw context matrix (8M x d).
    ad::Var forward(ad::Tape& tape, const Matrix& z_t, double t, const Matrix& context) const;

    /// Rebuilds a model around stored parameters; names and shapes must match
    /// a fresh init of `config`.
    static Denoiser from_parameters(const DenoiserConfig& config, ParameterSet params);

private:
    struct Block {
        nn::LayerNorm norm_self, norm_cross, norm_mlp;
        nn::Attention self_attention, cross_attention;
        nn::FeedForward mlp;
    };

    explicit Denoiser(const DenoiserConfig& config) : config_(config) {}
    void build(Rng& rng);

    DenoiserConfig config_;
    ParameterSet params_;
    nn::Linear input_, position_, time_, cond_position_, output_;
    nn::LayerNorm final_norm_;
    std::vector<Block> blocks_;
};

struct TrainStepOptions {
    Objective objective = Objective::V;
    DropoutPolicy dropout;
    /// Loss above this (or non-finite) halts training.
    double divergence_threshold = 1e6;
};

/// One optimizer step on the batch mean loss; returns the pre-step loss.
double train_step(Denoiser& model, std::span<const TrainingExample> batch, Optimizer& optimizer, Rng& rng,
                  const TrainStepOptions& options = {});

} // namespace loudgen
