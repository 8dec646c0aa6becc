#include <algorithm>
#include <cmath>
#include <numbers>

#include "loudgen/error.hpp"
#include "loudgen/toy.hpp"
#include "test_support.hpp"

using namespace loudgen;
using Catch::Matchers::WithinAbs;

namespace {

ToyConfig tiny_config()
{
    ToyConfig c;
    c.seed = 21;
    c.data.examples = 6;
    c.condition.m = 3;
    c.condition.width = 8;
    c.model.blocks = 1;
    c.model.heads = 2;
    c.model.embed_dim = 16;
    c.model.time_features = 8;
    c.model.position_features = 8;
    c.diffusion.steps = 4;
    c.training.steps = 6;
    c.training.batch = 2;
    c.training.log_every = 3;
    c.training.warmup = 0;
    c.training.eval_draws = 4;
    return c;
}

template <typename Fn>
ErrorCode code_of(Fn&& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return ErrorCode::Format;
}

} // namespace

TEST_CASE("rendered clips hit their target loudness per window")
{
    ToyConfig config = tiny_config();
    config.data.carrier = GENERATE(std::string("noise"), std::string("periodic"));
    const ToyWorld world(config);
    const std::size_t windows = world.windows(2.0);
    REQUIRE(windows == 12);
    std::vector<double> left(windows), right(windows);
    for (std::size_t i = 0; i < windows; ++i) {
        left[i] = 0.45 + 0.45 * static_cast<double>(i) / 11.0;
        right[i] = 0.9 - 0.45 * static_cast<double>(i) / 11.0;
    }
    const AudioBuffer audio = world.render(left, right, 2.0, 5);
    CHECK(audio.channel_count() == 2);
    CHECK(audio.frame_count() == world.samples(2.0));
    const auto [l, r] = world.measure(audio);
    REQUIRE(l.values.size() == windows);
    for (std::size_t i = 0; i < windows; ++i) {
        CHECK_THAT(l.values[i], WithinAbs(left[i], 0.01));
        CHECK_THAT(r.values[i], WithinAbs(right[i], 0.01));
    }
    CHECK(l.channel == ChannelRole::Left);
    CHECK(r.channel == ChannelRole::Right);
}

TEST_CASE("the periodic carrier repeats every token and ignores the clip seed")
{
    ToyConfig config = tiny_config();
    config.data.carrier = "periodic";
    const ToyWorld world(config);
    const std::vector<double> flat(6, 0.7);
    const AudioBuffer a = world.render(flat, flat, 1.0, 5);
    const AudioBuffer b = world.render(flat, flat, 1.0, 6);
    const auto period = static_cast<std::size_t>(config.data.downsample);
    const std::size_t win = world.samples(1.0) / 6;
    for (int c = 0; c < 2; ++c) {
        CHECK(a.channel(c) == b.channel(c));
        double peak = 0.0;
        for (std::size_t i = 0; i + period < win; ++i) {
            CHECK_THAT(a.channel(c)[i + period], WithinAbs(a.channel(c)[i], 1e-9));
            peak = std::max(peak, std::abs(a.channel(c)[i]));
        }
        CHECK(peak > 0.01);
    }
    CHECK(a.channel(0) != a.channel(1));

    config.data.carrier = "tone";
    CHECK(code_of([&] { config.validate(); }) == ErrorCode::Configuration);
}

TEST_CASE("random curves stay inside the configured loudness range")
{
    const ToyWorld world(tiny_config());
    Rng rng(3);
    for (int k = 0; k < 50; ++k) {
        for (double v : world.random_curve(rng, 6)) {
            CHECK(v >= 0.45);
            CHECK(v <= 0.9);
        }
    }
}

TEST_CASE("toy latents decode back to the rendered audio")
{
    const ToyWorld world(tiny_config());
    const AudioBuffer audio = world.render({0.6}, {0.8}, 1.0, 9);
    const Matrix z = world.encode(audio);
    CHECK(z.rows() == 64);
    CHECK(z.cols() == static_cast<Eigen::Index>(std::ceil(9600.0 / 32.0)));
    const AudioBuffer back = world.decode(z, audio.frame_count());
    for (int c = 0; c < 2; ++c) {
        for (std::size_t i = 0; i < audio.frame_count(); ++i) {
            REQUIRE_THAT(back.channel(c)[i], WithinAbs(audio.channel(c)[i], 1e-12));
        }
    }
}

TEST_CASE("a missing loudness curve becomes a zero block")
{
    const ToyWorld world(tiny_config());
    const ConditionSet with = world.condition(Prompts{"hum", std::nullopt, "video"}, ramp_curves(world, 1.0), 1.0);
    const ConditionSet without = world.condition(Prompts{"hum", std::nullopt, "video"}, std::nullopt, 1.0);
    for (auto b : {ConditionSet::LufsLeft, ConditionSet::LufsRight}) {
        CHECK(without.block(b).isZero(0.0));
        CHECK(!with.block(b).isZero(0.0));
    }
    for (auto b : {ConditionSet::Task, ConditionSet::Language, ConditionSet::Video, ConditionSet::TimingTotal}) {
        CHECK(with.block(b) == without.block(b));
    }
}

TEST_CASE("the toy dataset is a pure function of its seed")
{
    const ToyWorld world(tiny_config());
    const auto a = world.dataset(4, 3);
    const auto b = world.dataset(4, 3);
    const auto c = world.dataset(5, 3);
    REQUIRE(a.size() == 3);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].z0 == b[i].z0);
        CHECK(a[i].cond == b[i].cond);
    }
    CHECK(a[0].z0 != c[0].z0);
}

TEST_CASE("ramp curves span the data range in opposite directions")
{
    const ToyWorld world(tiny_config());
    const auto [left, right] = ramp_curves(world, 1.0);
    REQUIRE(left.values.size() == 6);
    CHECK_THAT(left.values.front(), WithinAbs(0.45, 1e-12));
    CHECK_THAT(left.values.back(), WithinAbs(0.9, 1e-12));
    CHECK_THAT(right.values.front(), WithinAbs(0.9, 1e-12));
    CHECK_THAT(right.values.back(), WithinAbs(0.45, 1e-12));
    CHECK(std::is_sorted(left.values.begin(), left.values.end()));
    CHECK(std::is_sorted(right.values.rbegin(), right.values.rend()));
}

TEST_CASE("toy training logs a deterministic curve")
{
    const ToyConfig config = tiny_config();
    const ToyWorld world(config);
    const auto data = world.dataset(derive_seed(config.seed, "data"), config.data.examples);
    Denoiser a = Denoiser::init(world.denoiser_config(), 1);
    Denoiser b = Denoiser::init(world.denoiser_config(), 1);
    int logged = 0;
    const auto out_a = train_toy(a, world, data, [&](const LossPoint&) { ++logged; });
    const auto out_b = train_toy(b, world, data);
    CHECK(logged == 3);
    REQUIRE(out_a.curve.size() == 3);
    CHECK(out_a.curve[0].step == 0);
    CHECK(std::isnan(out_a.curve[0].train_loss));
    CHECK(out_a.curve[2].step == 6);
    CHECK(out_a.steps_done == 6);
    CHECK(!out_a.divergence);
    CHECK(out_a.final_loss == out_b.final_loss);
    CHECK(a.parameters() == b.parameters());
}

TEST_CASE("a zero learning rate leaves the parameters unchanged")
{
    ToyConfig config = tiny_config();
    config.training.learning_rate = 0.0;
    const ToyWorld world(config);
    const auto data = world.dataset(2, 3);
    Denoiser model = Denoiser::init(world.denoiser_config(), 2);
    const ParameterSet before = model.parameters();
    const auto out = train_toy(model, world, data);
    CHECK(model.parameters() == before);
    CHECK(out.final_loss == out.initial_loss);
}

TEST_CASE("the zero-initialized denoiser starts at the mean squared target")
{
    // With a zero output layer the v prediction is 0, so the loss is E[v^2].
    const ToyConfig config = tiny_config();
    const ToyWorld world(config);
    const auto data = world.dataset(3, 4);
    const Denoiser model = Denoiser::init(world.denoiser_config(), 3);
    const EvalLoss eval(data, 32, Objective::V, 7);
    Rng rng(7);
    double total = 0.0;
    for (int k = 0; k < 32; ++k) {
        const auto idx = std::min(data.size() - 1, static_cast<std::size_t>(uniform01(rng) * data.size()));
        const double t = (k + 0.5) / 32.0;
        const Matrix& z0 = data[idx].z0;
        const Matrix eps = standard_normal_matrix(rng, z0.rows(), z0.cols());
        const double a = std::cos(0.5 * std::numbers::pi * t), s = std::sin(0.5 * std::numbers::pi * t);
        total += (a * eps - s * z0).squaredNorm() / static_cast<double>(z0.size());
    }
    CHECK_THAT(eval(model), WithinAbs(total / 32.0, 1e-9));
}

TEST_CASE("toy checkpoints restore the model and the embedder")
{
    const ToyConfig config = tiny_config();
    const ToyWorld world(config);
    Denoiser model = Denoiser::init(world.denoiser_config(), 4);
    Rng rng(4);
    for (std::size_t i = 0; i < model.parameters().size(); ++i) {
        auto& p = model.parameters().value(i);
        p += standard_normal_matrix(rng, p.rows(), p.cols()) * 0.1;
    }
    const auto path = testing::scratch_dir("toy_checkpoint") / "toy.lgck";
    write_checkpoint(path, make_toy_checkpoint(world, model, {{"note", "x"}}));
    const ToyCheckpoint back = load_toy_checkpoint(path);
    CHECK(to_ini(back.config) == to_ini(config));
    CHECK(back.world.embedder().parameters().size() == world.embedder().parameters().size());

    const ConditionSet cond = world.condition(Prompts{"a", "b", "c"}, ramp_curves(world, 1.0), 1.0);
    const ConditionSet cond_back = back.world.condition(Prompts{"a", "b", "c"}, ramp_curves(back.world, 1.0), 1.0);
    CHECK((cond.assembled - cond_back.assembled).cwiseAbs().maxCoeff() < 1e-6);
    const Matrix z = standard_normal_matrix(rng, 64, 20);
    const Matrix p0 = model.predict(z, 0.3, cond);
    const Matrix p1 = back.model.predict(z, 0.3, cond);
    CHECK((p0 - p1).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("loading a foreign checkpoint is a format error")
{
    const auto path = testing::scratch_dir("toy_foreign") / "other.lgck";
    Checkpoint ck;
    ck.metadata["format"] = "something-else";
    write_checkpoint(path, ck);
    CHECK(code_of([&] { load_toy_checkpoint(path); }) == ErrorCode::Format);
}

TEST_CASE("generation returns exactly round(seconds * rate) frames")
{
    ToyConfig config = tiny_config();
    config.data.sample_rate = 44100;
    config.data.downsample = 4096;
    config.diffusion.steps = 1;
    const ToyWorld world(config);
    const Denoiser model = Denoiser::init(world.denoiser_config(), 5);
    const ConditionSet cond = world.condition(Prompts{}, std::nullopt, 7.5);
    const AudioBuffer audio = generate_audio(model, world, cond, sampler_config(config, 1), 7.5);
    CHECK(audio.frame_count() == 330750);
    CHECK(audio.channel_count() == 2);
    CHECK(audio.sample_rate() == 44100);
    const AudioBuffer odd = generate_audio(model, world, cond, sampler_config(config, 1), 0.3);
    CHECK(odd.frame_count() == 13230);
}

TEST_CASE("durations outside (0, 60] seconds raise a length error")
{
    ToyConfig config = tiny_config();
    config.diffusion.steps = 1;
    const ToyWorld world(config);
    const Denoiser model = Denoiser::init(world.denoiser_config(), 6);
    const ConditionSet cond = world.condition(Prompts{}, std::nullopt, 1.0);
    for (double seconds : {60.5, 0.0, -1.0}) {
        CHECK(code_of([&] { generate_audio(model, world, cond, sampler_config(config, 1), seconds); }) ==
              ErrorCode::Length);
    }
}

TEST_CASE("brightness maps into the loudness range")
{
    const ToyConfig config = tiny_config();
    Rng rng(8);
    const auto b = random_brightness(rng, 120);
    const auto [left, right] = brightness_to_loudness(config, b);
    for (std::size_t i = 0; i < b.size(); ++i) {
        CHECK(b[i] >= 0.0);
        CHECK(b[i] <= 1.0);
        CHECK_THAT(left.values[i], WithinAbs(0.45 + 0.45 * b[i], 1e-12));
        CHECK_THAT(right.values[i], WithinAbs(0.45 + 0.45 * (1.0 - b[i]) * (1.0 - b[i]), 1e-12));
    }
    CHECK(brightness_features(config, b).features.rows() == 120);
}

TEST_CASE("predictor data splits by count and respects the length cap")
{
    ToyConfig config = tiny_config();
    config.predictor.examples = 7;
    config.predictor.held_out = 3;
    const auto data = predictor_dataset(config);
    CHECK(data.train.size() == 7);
    CHECK(data.held_out.size() == 3);
    for (const auto* set : {&data.train, &data.held_out}) {
        for (const auto& e : *set) {
            const auto rows = static_cast<std::size_t>(e.features.features.rows());
            CHECK(rows >= 6);
            CHECK(rows <= 60);
            CHECK(e.left.values.size() == rows);
            CHECK(e.right.values.size() == rows);
        }
    }
}

TEST_CASE("the ablation grid has eight rows with video always present")
{
    ToyConfig config = tiny_config();
    config.diffusion.steps = 1;
    const ToyWorld world(config);
    const Denoiser model = Denoiser::init(world.denoiser_config(), 7);
    const auto rows = run_ablation(model, world, 2);
    REQUIRE(rows.size() == 8);
    CHECK(rows[0].combination == "V");
    CHECK(rows[1].combination == "V+LUFS-GT");
    CHECK(rows[7].combination == "L+A+V+LUFS-GT");
    for (const auto& row : rows) {
        CHECK(row.video);
        CHECK(std::isfinite(row.fd));
        CHECK(row.fd >= 0.0);
        CHECK(row.kl >= 0.0);
        CHECK(row.av_align >= 0.0);
        CHECK(row.av_align <= 1.0);
    }
    CHECK(code_of([&] { run_ablation(model, world, 1); }) == ErrorCode::InsufficientData);
}
