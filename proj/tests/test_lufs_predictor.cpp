#include <algorithm>
#include <cmath>
#include <numbers>

#include "loudgen/error.hpp"
#include "loudgen/lufs_predictor.hpp"
#include "test_support.hpp"

using namespace loudgen;
using Catch::Matchers::WithinAbs;

namespace {

RegressorConfig small_config()
{
    RegressorConfig c;
    c.layers = 1;
    c.heads = 2;
    c.dim = 16;
    c.mlp_ratio = 2;
    c.feature_dim = 8;
    c.max_frames = 64;
    return c;
}

std::vector<double> ramp(std::size_t n, double lo, double hi)
{
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(1, n - 1));
    }
    return out;
}

RegressionExample example(const std::vector<double>& brightness, Eigen::Index width)
{
    RegressionExample e;
    e.features = extract_features(SyntheticFrameSource(brightness), SyntheticBackbone(width));
    e.left.channel = ChannelRole::Left;
    e.right.channel = ChannelRole::Right;
    for (double b : brightness) {
        e.left.values.push_back(0.2 + 0.6 * b);
        e.right.values.push_back(0.8 - 0.5 * b * b);
    }
    return e;
}

std::vector<RegressionExample> small_dataset(int count, std::size_t frames)
{
    std::vector<RegressionExample> out;
    for (int i = 0; i < count; ++i) {
        auto b = ramp(frames, 0.1 * i, 1.0 - 0.05 * i);
        if (i % 2 == 1) {
            std::reverse(b.begin(), b.end());
        }
        out.push_back(example(b, 8));
    }
    return out;
}

} // namespace

TEST_CASE("ten seconds at six frames per second gives sixty feature rows")
{
    const SyntheticFrameSource source(std::vector<double>(60, 0.3));
    CHECK(source.duration_seconds() == 10.0);
    const auto feats = extract_features(source, SyntheticBackbone(16));
    CHECK(feats.features.rows() == 60);
    CHECK(feats.features.cols() == 16);
    CHECK(feats.fps == 6.0);
    CHECK(feats.origin == FeatureOrigin::Synthetic);
}

TEST_CASE("feature row count is floor(duration * fps)")
{
    // A 6 fps track of 25 frames lasts 25/6 s; at 4 fps that is floor(16.67) rows.
    const SyntheticFrameSource source(ramp(25, 0.0, 1.0));
    CHECK(extract_features(source, SyntheticBackbone(4), 4.0).features.rows() == 16);
    CHECK(extract_features(source, SyntheticBackbone(4), 12.0).features.rows() == 50);
}

TEST_CASE("constant brightness gives identical rows")
{
    const auto feats = extract_features(SyntheticFrameSource(std::vector<double>(30, 0.42)), SyntheticBackbone(16));
    for (Eigen::Index i = 1; i < feats.features.rows(); ++i) {
        CHECK(feats.features.row(i) == feats.features.row(0));
    }
}

TEST_CASE("changing one frame changes exactly one feature row")
{
    auto b = ramp(24, 0.0, 1.0);
    const auto before = extract_features(SyntheticFrameSource(b), SyntheticBackbone(16)).features;
    b[7] = 0.99;
    const auto after = extract_features(SyntheticFrameSource(b), SyntheticBackbone(16)).features;
    int differing = 0;
    for (Eigen::Index i = 0; i < before.rows(); ++i) {
        if (before.row(i) != after.row(i)) {
            ++differing;
            CHECK(i == 7);
        }
    }
    CHECK(differing == 1);
}

TEST_CASE("synthetic backbone layout")
{
    const SyntheticBackbone backbone(5);
    const RowVector e = backbone.embed(Frame{{0.25, 0.25, 0.25}});
    CHECK_THAT(e(0), WithinAbs(0.25, 1e-15));
    CHECK_THAT(e(1), WithinAbs(std::sin(std::numbers::pi * 0.25), 1e-15));
    CHECK_THAT(e(2), WithinAbs(std::cos(std::numbers::pi * 0.25), 1e-15));
    CHECK_THAT(e(3), WithinAbs(std::sin(2.0 * std::numbers::pi * 0.25), 1e-15));
    CHECK_THAT(e(4), WithinAbs(std::cos(2.0 * std::numbers::pi * 0.25), 1e-15));
}

TEST_CASE("an empty source raises a no-frames error")
{
    try {
        extract_features(SyntheticFrameSource({}), SyntheticBackbone(4));
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NoFrames);
    }
}

TEST_CASE("untrained regressor outputs exactly one half")
{
    const auto model = LufsRegressor::init(small_config(), 3);
    const auto [left, right] = predict(model, example(ramp(20, 0.0, 1.0), 8).features);
    for (double v : left.values) {
        CHECK(v == 0.5);
    }
    for (double v : right.values) {
        CHECK(v == 0.5);
    }
    CHECK(left.channel == ChannelRole::Left);
    CHECK(right.channel == ChannelRole::Right);
}

TEST_CASE("prediction length equals input length up to 360 frames")
{
    RegressorConfig c = small_config();
    c.max_frames = kMaxFeatureFrames;
    auto model = LufsRegressor::init(c, 4);
    // Randomize the head so outputs are not constant.
    Rng rng(5);
    for (std::size_t i = 0; i < model.parameters().size(); ++i) {
        if (model.parameters().name(i).rfind("head", 0) == 0) {
            auto& p = model.parameters().value(i);
            p = standard_normal_matrix(rng, p.rows(), p.cols()) * 3.0;
        }
    }
    for (std::size_t t = 1; t <= static_cast<std::size_t>(kMaxFeatureFrames); t += (t < 10 ? 1 : 37)) {
        const auto [left, right] = predict(model, example(ramp(t, 0.0, 1.0), 8).features);
        CHECK(left.values.size() == t);
        CHECK(right.values.size() == t);
        for (const auto* s : {&left.values, &right.values}) {
            for (double v : *s) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        }
    }
    const auto [left, right] = predict(model, example(ramp(360, 0.0, 1.0), 8).features);
    CHECK(left.values.size() == 360);
}

TEST_CASE("sequences longer than sixty seconds raise a length error")
{
    RegressorConfig c = small_config();
    c.max_frames = kMaxFeatureFrames;
    const auto model = LufsRegressor::init(c, 4);
    try {
        predict(model, example(ramp(361, 0.0, 1.0), 8).features);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Length);
    }
}

TEST_CASE("regression loss equals independently computed mean squared residuals")
{
    auto model = LufsRegressor::init(small_config(), 6);
    Rng rng(7);
    for (std::size_t i = 0; i < model.parameters().size(); ++i) {
        auto& p = model.parameters().value(i);
        p += standard_normal_matrix(rng, p.rows(), p.cols()) * 0.3;
    }
    std::vector<RegressionExample> mixed = small_dataset(3, 10);
    mixed.push_back(example(ramp(17, 0.9, 0.2), 8));

    double sum = 0.0;
    double count = 0.0;
    for (const auto& e : mixed) {
        const auto [left, right] = predict(model, e.features);
        for (std::size_t i = 0; i < left.values.size(); ++i) {
            sum += std::pow(left.values[i] - e.left.values[i], 2) + std::pow(right.values[i] - e.right.values[i], 2);
            count += 2.0;
        }
    }
    CHECK_THAT(regression_loss(model, mixed), WithinAbs(sum / count, 1e-9));
}

TEST_CASE("zero epochs returns the initialization")
{
    RegressorTraining training;
    training.epochs = 0;
    training.seed = 8;
    const auto trained = train_regressor(small_config(), small_dataset(4, 12), training);
    const auto fresh = LufsRegressor::init(small_config(), derive_seed(8, "regressor.init"));
    CHECK(trained.model.parameters() == fresh.parameters());
    CHECK(trained.loss_curve.empty());
}

TEST_CASE("a single pair is fitted to MSE below 1e-4")
{
    RegressorTraining training;
    training.epochs = 400;
    training.batch_size = 0;
    training.seed = 9;
    training.optimizer.learning_rate = 3e-3;
    const std::vector<RegressionExample> one{example(ramp(12, 0.1, 0.9), 8)};
    const auto trained = train_regressor(small_config(), one, training);
    CHECK(regression_loss(trained.model, one) < 1e-4);
}

TEST_CASE("full-batch training is invariant to dataset order")
{
    RegressorTraining training;
    training.epochs = 15;
    training.batch_size = 0;
    training.seed = 10;
    auto data = small_dataset(5, 9);
    const auto a = train_regressor(small_config(), data, training);
    std::reverse(data.begin(), data.end());
    std::rotate(data.begin(), data.begin() + 2, data.end());
    const auto b = train_regressor(small_config(), data, training);
    CHECK_THAT(a.loss_curve.back(), WithinAbs(b.loss_curve.back(), 1e-6));
    CHECK_THAT(regression_loss(a.model, data), WithinAbs(regression_loss(b.model, data), 1e-6));
}

TEST_CASE("training is deterministic and reports one loss per epoch")
{
    RegressorTraining training;
    training.epochs = 5;
    training.batch_size = 2;
    training.seed = 11;
    int calls = 0;
    training.on_epoch = [&](int, double) { ++calls; };
    const auto data = small_dataset(5, 7);
    const auto a = train_regressor(small_config(), data, training);
    const auto b = train_regressor(small_config(), data, training);
    CHECK(a.loss_curve == b.loss_curve);
    CHECK(a.model.parameters() == b.model.parameters());
    CHECK(a.loss_curve.size() == 5);
    CHECK(calls == 10);
    CHECK(a.loss_curve.back() < a.loss_curve.front());
}

TEST_CASE("from_parameters round trips and rejects mismatched shapes")
{
    const auto model = LufsRegressor::init(small_config(), 12);
    const auto copy = LufsRegressor::from_parameters(small_config(), model.parameters());
    CHECK(copy.parameters() == model.parameters());
    RegressorConfig other = small_config();
    other.dim = 8;
    try {
        LufsRegressor::from_parameters(other, model.parameters());
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Format);
    }
}
