#include "loudgen/nn.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "loudgen/error.hpp"

namespace loudgen::nn {

Linear make_linear(ParameterSet& params, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng,
                   Init init, bool bias)
{
    Linear layer;
    layer.in = in;
    layer.out = out;
    Matrix w = Matrix::Zero(in, out);
    if (init == Init::ScaledNormal) {
        w = standard_normal_matrix(rng, in, out) / std::sqrt(static_cast<double>(in));
    }
    layer.weight = params.add(name + ".weight", std::move(w));
    if (bias) {
        layer.bias = params.add(name + ".bias", Matrix::Zero(1, out));
    }
    return layer;
}

ad::Var apply(ad::Tape& tape, const ParameterSet& params, const Linear& layer, const ad::Var& x)
{
    ad::Var y = ad::matmul(x, tape.parameter(params, layer.weight));
    if (layer.bias) {
        y = ad::add_row(y, tape.parameter(params, *layer.bias));
    }
    return y;
}

LayerNorm make_layer_norm(ParameterSet& params, const std::string& name, Eigen::Index dim)
{
    return LayerNorm{params.add(name + ".gain", Matrix::Ones(1, dim)), params.add(name + ".bias", Matrix::Zero(1, dim))};
}

ad::Var apply(ad::Tape& tape, const ParameterSet& params, const LayerNorm& norm, const ad::Var& x)
{
    return ad::layer_norm(x, tape.parameter(params, norm.gain), tape.parameter(params, norm.bias));
}

Attention make_attention(ParameterSet& params, const std::string& name, Eigen::Index dim, Eigen::Index key_dim,
                         int heads, Rng& rng)
{
    require(heads >= 1 && dim % heads == 0, ErrorCode::Configuration,
            "attention width " + std::to_string(dim) + " not divisible by " + std::to_string(heads) + " heads");
    Attention a;
    a.heads = heads;
    a.query = make_linear(params, name + ".query", dim, dim, rng);
    a.key = make_linear(params, name + ".key", key_dim, dim, rng);
    a.value = make_linear(params, name + ".value", key_dim, dim, rng);
    a.output = make_linear(params, name + ".output", dim, dim, rng);
    return a;
}

ad::Var apply(ad::Tape& tape, const ParameterSet& params, const Attention& attn, const ad::Var& queries,
              const ad::Var& keys)
{
    const ad::Var q = apply(tape, params, attn.query, queries);
    const ad::Var k = apply(tape, params, attn.key, keys);
    const ad::Var v = apply(tape, params, attn.value, keys);
    const Eigen::Index width = q.cols() / attn.heads;
    const double temperature = 1.0 / std::sqrt(static_cast<double>(width));

    std::vector<ad::Var> heads;
    heads.reserve(static_cast<std::size_t>(attn.heads));
    for (int h = 0; h < attn.heads; ++h) {
        const Eigen::Index at = h * width;
        const ad::Var qh = attn.heads == 1 ? q : ad::slice_cols(q, at, width);
        const ad::Var kh = attn.heads == 1 ? k : ad::slice_cols(k, at, width);
        const ad::Var vh = attn.heads == 1 ? v : ad::slice_cols(v, at, width);
        const ad::Var weights = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), temperature));
        heads.push_back(ad::matmul(weights, vh));
    }
    const ad::Var merged = attn.heads == 1 ? heads.front() : ad::concat_cols(heads);
    return apply(tape, params, attn.output, merged);
}

FeedForward make_feed_forward(ParameterSet& params, const std::string& name, Eigen::Index dim, Eigen::Index hidden,
                              Rng& rng)
{
    return FeedForward{make_linear(params, name + ".up", dim, hidden, rng),
                       make_linear(params, name + ".down", hidden, dim, rng)};
}

ad::Var apply(ad::Tape& tape, const ParameterSet& params, const FeedForward& ff, const ad::Var& x)
{
    return apply(tape, params, ff.down, ad::gelu(apply(tape, params, ff.up, x)));
}

Matrix unit_interval_features(const Eigen::VectorXd& values, Eigen::Index count)
{
    require(count >= 2 && count % 2 == 0, ErrorCode::Configuration, "feature count must be even and positive");
    Matrix out(values.size(), count);
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        for (Eigen::Index k = 0; k < count / 2; ++k) {
            const double phase = static_cast<double>(k + 1) * std::numbers::pi * values(i);
            out(i, 2 * k) = std::sin(phase);
            out(i, 2 * k + 1) = std::cos(phase);
        }
    }
    return out;
}

} // namespace loudgen::nn
