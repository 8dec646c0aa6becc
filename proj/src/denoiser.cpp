#include "loudgen/denoiser.hpp"

#include <cmath>
#include <string>

#include "loudgen/error.hpp"

namespace loudgen {

void DenoiserConfig::validate() const
{
    const auto positive = [](auto v, const char* what) {
        require(v >= 1, ErrorCode::Configuration, std::string("denoiser ") + what + " must be at least 1");
    };
    positive(blocks, "blocks");
    positive(heads, "heads");
    positive(embed_dim, "embed_dim");
    positive(latent_channels, "latent_channels");
    positive(max_frames, "max_frames");
    positive(cond_rows, "cond_rows");
    positive(cond_dim, "cond_dim");
    positive(mlp_ratio, "mlp_ratio");
    require(embed_dim % heads == 0, ErrorCode::Configuration, "embed_dim must be divisible by heads");
    require(cond_rows % ConditionSet::kBlocks == 0, ErrorCode::Configuration, "cond_rows must be a multiple of 8");
    require(time_features >= 2 && time_features % 2 == 0 && position_features >= 2 && position_features % 2 == 0,
            ErrorCode::Configuration, "feature counts must be even and positive");
}

std::size_t denoiser_parameter_count(const DenoiserConfig& c)
{
    const auto E = static_cast<std::size_t>(c.embed_dim);
    const auto C = static_cast<std::size_t>(c.latent_channels);
    const auto d = static_cast<std::size_t>(c.cond_dim);
    const auto P = static_cast<std::size_t>(c.position_features);
    const auto Q = static_cast<std::size_t>(c.time_features);
    const std::size_t H = static_cast<std::size_t>(c.mlp_ratio) * E;
    const std::size_t top = (C * E + E) + P * E + (Q * E + E) + (8 + P) * d + 2 * E + (E * C + C);
    const std::size_t block = 6 * E + (4 * E * E + 4 * E) + (2 * E * E + 2 * d * E + 4 * E) + (2 * E * H + H + E);
    return top + static_cast<std::size_t>(c.blocks) * block;
}

void Denoiser::build(Rng& rng)
{
    const DenoiserConfig& c = config_;
    const Eigen::Index E = c.embed_dim;
    input_ = nn::make_linear(params_, "input", c.latent_channels, E, rng);
    position_ = nn::make_linear(params_, "position", c.position_features, E, rng, nn::Init::ScaledNormal, false);
    time_ = nn::make_linear(params_, "time", c.time_features, E, rng);
    cond_position_ = nn::make_linear(params_, "cond_position", ConditionSet::kBlocks + c.position_features, c.cond_dim,
                                     rng, nn::Init::ScaledNormal, false);
    for (int b = 0; b < c.blocks; ++b) {
        const std::string name = "block" + std::to_string(b);
        Block block;
        block.norm_self = nn::make_layer_norm(params_, name + ".norm_self", E);
        block.self_attention = nn::make_attention(params_, name + ".self", E, E, c.heads, rng);
        block.norm_cross = nn::make_layer_norm(params_, name + ".norm_cross", E);
        block.cross_attention = nn::make_attention(params_, name + ".cross", E, c.cond_dim, c.heads, rng);
        block.norm_mlp = nn::make_layer_norm(params_, name + ".norm_mlp", E);
        block.mlp = nn::make_feed_forward(params_, name + ".mlp", E, c.mlp_ratio * E, rng);
        blocks_.push_back(block);
    }
    final_norm_ = nn::make_layer_norm(params_, "final_norm", E);
    output_ = nn::make_linear(params_, "output", E, c.latent_channels, rng, nn::Init::Zero);
}

Denoiser Denoiser::init(const DenoiserConfig& config, std::uint64_t seed)
{
    config.validate();
    Denoiser model(config);
    Rng rng(seed);
    model.build(rng);
    return model;
}

Denoiser Denoiser::from_parameters(const DenoiserConfig& config, ParameterSet params)
{
    Denoiser model = init(config, 0);
    require(params.size() == model.params_.size(), ErrorCode::Format, "checkpoint parameter count does not match");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Matrix& expected = model.params_.value(i);
        require(params.name(i) == model.params_.name(i), ErrorCode::Format,
                "checkpoint parameter '" + params.name(i) + "' where '" + model.params_.name(i) + "' was expected");
        require(params.value(i).rows() == expected.rows() && params.value(i).cols() == expected.cols(),
                ErrorCode::Format, "checkpoint parameter '" + params.name(i) + "' has the wrong shape");
    }
    model.params_ = std::move(params);
    return model;
}

namespace {

Eigen::VectorXd centers(Eigen::Index count)
{
    Eigen::VectorXd u(count);
    for (Eigen::Index i = 0; i < count; ++i) {
        u(i) = (static_cast<double>(i) + 0.5) / static_cast<double>(count);
    }
    return u;
}

} // namespace

ad::Var Denoiser::forward(ad::Tape& tape, const Matrix& z_t, double t, const ConditionSet& cond) const
{
    return forward(tape, z_t, t, cond.assembled);
}

ad::Var Denoiser::forward(ad::Tape& tape, const Matrix& z_t, double t, const Matrix& context) const
{
    const DenoiserConfig& c = config_;
    require(z_t.rows() == c.latent_channels, ErrorCode::Dimension,
            "latent has " + std::to_string(z_t.rows()) + " channels, model expects " +
                std::to_string(c.latent_channels));
    require(z_t.cols() >= 1 && z_t.cols() <= c.max_frames, ErrorCode::Dimension,
            "latent frame count " + std::to_string(z_t.cols()) + " outside [1, " + std::to_string(c.max_frames) + "]");
    require(context.rows() == c.cond_rows && context.cols() == c.cond_dim, ErrorCode::Dimension,
            "condition must be " + std::to_string(c.cond_rows) + " x " + std::to_string(c.cond_dim));
    require(t >= 0.0 && t <= 1.0, ErrorCode::Domain, "diffusion time outside [0, 1]");
    require(z_t.allFinite() && context.allFinite(), ErrorCode::NumericalDivergence, "non-finite denoiser input");

    const Eigen::Index frames = z_t.cols();
    const Eigen::Index m = c.cond_m();

    ad::Var h = nn::apply(tape, params_, input_, tape.constant(z_t.transpose()));
    h = ad::add(h, nn::apply(tape, params_, position_,
                             tape.constant(nn::unit_interval_features(centers(frames), c.position_features))));
    Eigen::VectorXd tv(1);
    tv(0) = t;
    h = ad::add_row(h, nn::apply(tape, params_, time_, tape.constant(nn::unit_interval_features(tv, c.time_features))));

    Matrix row_features = Matrix::Zero(c.cond_rows, ConditionSet::kBlocks + c.position_features);
    const Matrix within = nn::unit_interval_features(centers(m), c.position_features);
    for (Eigen::Index b = 0; b < ConditionSet::kBlocks; ++b) {
        row_features.block(b * m, b, m, 1).setOnes();
        row_features.block(b * m, ConditionSet::kBlocks, m, c.position_features) = within;
    }
    const ad::Var ctx = ad::add(tape.constant(context), nn::apply(tape, params_, cond_position_,
                                                                  tape.constant(std::move(row_features))));

    for (const Block& block : blocks_) {
        const ad::Var a = nn::apply(tape, params_, block.norm_self, h);
        h = ad::add(h, nn::apply(tape, params_, block.self_attention, a, a));
        const ad::Var q = nn::apply(tape, params_, block.norm_cross, h);
        h = ad::add(h, nn::apply(tape, params_, block.cross_attention, q, ctx));
        h = ad::add(h, nn::apply(tape, params_, block.mlp, nn::apply(tape, params_, block.norm_mlp, h)));
    }
    const ad::Var out = nn::apply(tape, params_, output_, nn::apply(tape, params_, final_norm_, h));
    return ad::transpose(out);
}

double train_step(Denoiser& model, std::span<const TrainingExample> batch, Optimizer& optimizer, Rng& rng,
                  const TrainStepOptions& options)
{
    LossResult result = training_loss(model, batch, rng, options.objective, options.dropout);
    if (!(result.loss <= options.divergence_threshold)) {
        fail(ErrorCode::NumericalDivergence, "training diverged at optimizer step " +
                                                 std::to_string(optimizer.steps_taken()) + ": loss " +
                                                 std::to_string(result.loss) + ", gradient norm " +
                                                 std::to_string(global_norm(result.grads)));
    }
    optimizer.step(model.parameters(), std::move(result.grads));
    for (std::size_t i = 0; i < model.parameters().size(); ++i) {
        require(model.parameters().value(i).allFinite(), ErrorCode::NumericalDivergence,
                "parameter '" + model.parameters().name(i) + "' became non-finite");
    }
    return result.loss;
}

} // namespace loudgen
