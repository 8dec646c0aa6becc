#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "loudgen/autodiff.hpp"
#include "loudgen/rng.hpp"

// Transformer building blocks shared by the denoiser and the LUFS regressor.
namespace loudgen::nn {

enum class Init { ScaledNormal, Zero };

struct Linear {
    std::size_t weight = 0; // in x out
    std::optional<std::size_t> bias; // 1 x out
    Eigen::Index in = 0;
    Eigen::Index out = 0;
};

/// Weights ~ N(0, 1/in) unless zero-initialized; biases start at zero.
Linear make_linear(ParameterSet& params, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng,
                   Init init = Init::ScaledNormal, bool bias = true);
ad::Var apply(ad::Tape& tape, const ParameterSet& params, const Linear& layer, const ad::Var& x);

struct LayerNorm {
    std::size_t gain = 0;
    std::size_t bias = 0;
};

LayerNorm make_layer_norm(ParameterSet& params, const std::string& name, Eigen::Index dim);
ad::Var apply(ad::Tape& tape, const ParameterSet& params, const LayerNorm& norm, const ad::Var& x);

struct Attention {
    Linear query, key, value, output;
    int heads = 1;
};

/// key_dim is the width of the key/value source (differs for cross-attention).
Attention make_attention(ParameterSet& params, const std::string& name, Eigen::Index dim, Eigen::Index key_dim,
                         int heads, Rng& rng);
/// Scaled dot-product multi-head attention of `queries` over `keys` rows.
ad::Var apply(ad::Tape& tape, const ParameterSet& params, const Attention& attn, const ad::Var& queries,
              const ad::Var& keys);

struct FeedForward {
    Linear up, down;
};

FeedForward make_feed_forward(ParameterSet& params, const std::string& name, Eigen::Index dim, Eigen::Index hidden,
                              Rng& rng);
ad::Var apply(ad::Tape& tape, const ParameterSet& params, const FeedForward& ff, const ad::Var& x);

/// Rows of [sin(k pi u), cos(k pi u)] for k = 1..count/2, one row per value.
/// Suited to values on [0, 1] (relative positions, diffusion time).
Matrix unit_interval_features(const Eigen::VectorXd& values, Eigen::Index count);

} // namespace loudgen::nn
