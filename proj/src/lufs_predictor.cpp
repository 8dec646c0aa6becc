#include "loudgen/lufs_predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "loudgen/error.hpp"

namespace loudgen {

SyntheticFrameSource::SyntheticFrameSource(std::vector<double> brightness, double track_fps, std::size_t pixels)
    : brightness_(std::move(brightness)), fps_(track_fps), pixels_(pixels)
{
    require(track_fps > 0.0, ErrorCode::Domain, "frame rate must be positive");
    require(pixels >= 1, ErrorCode::Domain, "frames need at least one pixel");
}

double SyntheticFrameSource::duration_seconds() const
{
    return static_cast<double>(brightness_.size()) / fps_;
}

Frame SyntheticFrameSource::frame_at(double seconds) const
{
    require(!brightness_.empty(), ErrorCode::NoFrames, "frame source is empty");
    const auto index = std::min(brightness_.size() - 1,
                                static_cast<std::size_t>(std::max(0.0, std::floor(seconds * fps_ + 1e-9))));
    return Frame{std::vector<double>(pixels_, brightness_[index])};
}

SyntheticBackbone::SyntheticBackbone(Eigen::Index width) : width_(width)
{
    require(width >= 1, ErrorCode::Configuration, "backbone width must be positive");
}

RowVector SyntheticBackbone::embed(const Frame& frame) const
{
    require(!frame.pixels.empty(), ErrorCode::NoFrames, "frame has no pixels");
    const double b =
        std::accumulate(frame.pixels.begin(), frame.pixels.end(), 0.0) / static_cast<double>(frame.pixels.size());
    RowVector out(width_);
    out(0) = b;
    for (Eigen::Index i = 1; i < width_; ++i) {
        const double k = static_cast<double>((i + 1) / 2);
        out(i) = (i % 2 == 1) ? std::sin(k * std::numbers::pi * b) : std::cos(k * std::numbers::pi * b);
    }
    return out;
}

FrameFeatureSeq extract_features(const FrameSource& source, const VisualBackbone& backbone, double fps)
{
    require(fps > 0.0, ErrorCode::Domain, "feature rate must be positive");
    const auto frames = static_cast<Eigen::Index>(std::floor(source.duration_seconds() * fps + 1e-9));
    require(frames >= 1, ErrorCode::NoFrames, "frame source yields no frames at " + std::to_string(fps) + " fps");
    FrameFeatureSeq out{fps, Matrix(frames, backbone.width()), FeatureOrigin::Synthetic};
    for (Eigen::Index i = 0; i < frames; ++i) {
        out.features.row(i) = backbone.embed(source.frame_at(static_cast<double>(i) / fps));
    }
    return out;
}

void RegressorConfig::validate() const
{
    require(layers >= 1 && heads >= 1 && dim >= 1 && mlp_ratio >= 1 && feature_dim >= 1 && max_frames >= 1,
            ErrorCode::Configuration, "regressor sizes must be positive");
    require(dim % heads == 0, ErrorCode::Configuration, "regressor dim must be divisible by heads");
}

LufsRegressor LufsRegressor::init(const RegressorConfig& config, std::uint64_t seed)
{
    config.validate();
    LufsRegressor m(config);
    Rng rng(seed);
    m.input_ = nn::make_linear(m.params_, "input", config.feature_dim, config.dim, rng);
    m.positions_ = m.params_.add("positions", standard_normal_matrix(rng, config.max_frames, config.dim) * 0.02);
    for (int l = 0; l < config.layers; ++l) {
        const std::string name = "layer" + std::to_string(l);
        Layer layer;
        layer.norm_attn = nn::make_layer_norm(m.params_, name + ".norm_attn", config.dim);
        layer.attention = nn::make_attention(m.params_, name + ".attn", config.dim, config.dim, config.heads, rng);
        layer.norm_mlp = nn::make_layer_norm(m.params_, name + ".norm_mlp", config.dim);
        layer.mlp = nn::make_feed_forward(m.params_, name + ".mlp", config.dim, config.mlp_ratio * config.dim, rng);
        m.layers_.push_back(layer);
    }
    m.final_norm_ = nn::make_layer_norm(m.params_, "final_norm", config.dim);
    m.head_ = nn::make_linear(m.params_, "head", config.dim, 2, rng, nn::Init::Zero);
    return m;
}

LufsRegressor LufsRegressor::from_parameters(const RegressorConfig& config, ParameterSet params)
{
    LufsRegressor m = init(config, 0);
    require(params.size() == m.params_.size(), ErrorCode::Format, "regressor parameter count does not match");
    for (std::size_t i = 0; i < params.size(); ++i) {
        require(params.name(i) == m.params_.name(i) && params.value(i).rows() == m.params_.value(i).rows() &&
                    params.value(i).cols() == m.params_.value(i).cols(),
                ErrorCode::Format, "regressor parameter '" + params.name(i) + "' does not match the config");
    }
    m.params_ = std::move(params);
    return m;
}

ad::Var LufsRegressor::forward(ad::Tape& tape, const Matrix& features) const
{
    const Eigen::Index frames = features.rows();
    require(frames >= 1, ErrorCode::NoFrames, "feature sequence is empty");
    require(frames <= config_.max_frames, ErrorCode::Length,
            "feature sequence of " + std::to_string(frames) + " frames exceeds the limit of " +
                std::to_string(config_.max_frames));
    require(features.cols() == config_.feature_dim, ErrorCode::Dimension,
            "feature width " + std::to_string(features.cols()) + ", expected " + std::to_string(config_.feature_dim));
    ad::Var h = nn::apply(tape, params_, input_, tape.constant(features));
    h = ad::add(h, ad::slice_rows(tape.parameter(params_, positions_), 0, frames));
    for (const Layer& layer : layers_) {
        const ad::Var a = nn::apply(tape, params_, layer.norm_attn, h);
        h = ad::add(h, nn::apply(tape, params_, layer.attention, a, a));
        h = ad::add(h, nn::apply(tape, params_, layer.mlp, nn::apply(tape, params_, layer.norm_mlp, h)));
    }
    return ad::sigmoid(nn::apply(tape, params_, head_, nn::apply(tape, params_, final_norm_, h)));
}

std::pair<NormalizedSeries, NormalizedSeries> predict(const LufsRegressor& model, const FrameFeatureSeq& feats)
{
    ad::Tape tape(false);
    const Matrix out = model.forward(tape, feats.features).value();
    NormalizedSeries left{ChannelRole::Left, std::vector<double>(out.rows())};
    NormalizedSeries right{ChannelRole::Right, std::vector<double>(out.rows())};
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        left.values[static_cast<std::size_t>(i)] = out(i, 0);
        right.values[static_cast<std::size_t>(i)] = out(i, 1);
    }
    return {left, right};
}

namespace {

Matrix target_matrix(const RegressionExample& e)
{
    const auto frames = e.features.features.rows();
    require(static_cast<Eigen::Index>(e.left.values.size()) == frames &&
                static_cast<Eigen::Index>(e.right.values.size()) == frames,
            ErrorCode::Dimension, "target length differs from the feature length");
    Matrix t(frames, 2);
    for (Eigen::Index i = 0; i < frames; ++i) {
        t(i, 0) = e.left.values[static_cast<std::size_t>(i)];
        t(i, 1) = e.right.values[static_cast<std::size_t>(i)];
    }
    require((t.array() >= 0.0).all() && (t.array() <= 1.0).all(), ErrorCode::Domain, "targets must lie in [0, 1]");
    return t;
}

/// Element-weighted mean squared error over the listed examples.
struct BatchLoss {
    double loss = 0.0;
    std::vector<Matrix> grads;
};

BatchLoss batch_loss(const LufsRegressor& model, const std::vector<RegressionExample>& data,
                     const std::vector<std::size_t>& indices, bool gradients)
{
    double elements = 0.0;
    for (const std::size_t i : indices) {
        elements += 2.0 * static_cast<double>(data[i].features.features.rows());
    }
    BatchLoss out{0.0, gradients ? model.parameters().zeros_like() : std::vector<Matrix>{}};
    for (const std::size_t i : indices) {
        ad::Tape tape(gradients);
        const Matrix target = target_matrix(data[i]);
        const ad::Var loss =
            ad::scale(ad::mse(model.forward(tape, data[i].features.features), target),
                      static_cast<double>(target.size()) / elements);
        out.loss += loss.value()(0, 0);
        if (gradients) {
            tape.backward(loss);
            const auto g = tape.parameter_gradients(model.parameters());
            for (std::size_t k = 0; k < g.size(); ++k) {
                out.grads[k] += g[k];
            }
        }
    }
    return out;
}

} // namespace

double regression_loss(const LufsRegressor& model, const std::vector<RegressionExample>& examples)
{
    std::vector<std::size_t> all(examples.size());
    std::iota(all.begin(), all.end(), 0);
    return batch_loss(model, examples, all, false).loss;
}

double regression_mae(const LufsRegressor& model, const std::vector<RegressionExample>& examples)
{
    double total = 0.0, count = 0.0;
    for (const auto& e : examples) {
        ad::Tape tape(false);
        const Matrix diff = model.forward(tape, e.features.features).value() - target_matrix(e);
        total += diff.cwiseAbs().sum();
        count += static_cast<double>(diff.size());
    }
    return count == 0.0 ? 0.0 : total / count;
}

TrainedRegressor train_regressor(const RegressorConfig& config, const std::vector<RegressionExample>& dataset,
                                 const RegressorTraining& training)
{
    require(!dataset.empty(), ErrorCode::InsufficientData, "regressor dataset is empty");
    require(training.epochs >= 0, ErrorCode::Configuration, "epochs must be non-negative");
    TrainedRegressor out{LufsRegressor::init(config, derive_seed(training.seed, "regressor.init")), {}};
    Optimizer optimizer(out.model.parameters(), training.optimizer);
    Rng rng(derive_seed(training.seed, "regressor.shuffle"));
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batch = training.batch_size == 0 ? dataset.size() : training.batch_size;

    for (int epoch = 0; epoch < training.epochs; ++epoch) {
        if (training.batch_size != 0) {
            // Fisher-Yates with our own uniform draws for portability.
            for (std::size_t i = order.size(); i > 1; --i) {
                const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
                std::swap(order[i - 1], order[std::min(j, i - 1)]);
            }
        }
        double epoch_loss = 0.0;
        double weight = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::vector<std::size_t> indices(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                   order.begin() + static_cast<std::ptrdiff_t>(
                                                                       std::min(order.size(), start + batch)));
            BatchLoss step = batch_loss(out.model, dataset, indices, true);
            require(std::isfinite(step.loss), ErrorCode::NumericalDivergence,
                    "regressor loss became non-finite in epoch " + std::to_string(epoch));
            epoch_loss += step.loss * static_cast<double>(indices.size());
            weight += static_cast<double>(indices.size());
            optimizer.step(out.model.parameters(), std::move(step.grads));
        }
        out.loss_curve.push_back(epoch_loss / weight);
        if (training.on_epoch) {
            training.on_epoch(epoch, out.loss_curve.back());
        }
    }
    return out;
}

} // namespace loudgen
