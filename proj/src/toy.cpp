#include "loudgen/toy.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

#include "loudgen/error.hpp"
#include "loudgen/metrics.hpp"

namespace loudgen {

namespace {

constexpr const char* kCheckpointFormat = "loudgen-toy";
constexpr std::size_t kPreroll = 1024;
constexpr int kGainPasses = 2;
constexpr int kLabelBins = 5;

/// Constant 0 dB peak band-pass (RBJ cookbook).
std::vector<double> band_pass(std::vector<double> x, double center, double q, int rate)
{
    const double w0 = 2.0 * std::numbers::pi * center / rate;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    const double b0 = alpha / a0, b2 = -alpha / a0;
    const double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;
    double x1 = 0.0, x2 = 0.0, y1 = 0.0, y2 = 0.0;
    for (double& v : x) {
        const double y = b0 * v + b2 * x2 - a1 * y1 - a2 * y2;
        x2 = x1;
        x1 = v;
        y2 = y1;
        y1 = y;
        v = y;
    }
    return x;
}

ChannelPair normalized_pair(const std::vector<LufsSeries>& series)
{
    NormalizedSeries left = clip_normalize(series.at(0));
    NormalizedSeries right = clip_normalize(series.at(1));
    left.channel = ChannelRole::Left;
    right.channel = ChannelRole::Right;
    return {std::move(left), std::move(right)};
}

RowVector stacked_values(const ChannelPair& pair)
{
    const auto& l = pair.first.values;
    const auto& r = pair.second.values;
    RowVector row(static_cast<Eigen::Index>(l.size() + r.size()));
    for (std::size_t i = 0; i < l.size(); ++i) {
        row(static_cast<Eigen::Index>(i)) = l[i];
    }
    for (std::size_t i = 0; i < r.size(); ++i) {
        row(static_cast<Eigen::Index>(l.size() + i)) = r[i];
    }
    return row;
}

RowVector loudness_labels(const ChannelPair& pair)
{
    RowVector counts = RowVector::Constant(kLabelBins, 0.5);
    for (const auto* s : {&pair.first.values, &pair.second.values}) {
        for (double v : *s) {
            const int bin = std::clamp(static_cast<int>(std::floor(v * kLabelBins)), 0, kLabelBins - 1);
            counts(bin) += 1.0;
        }
    }
    return counts / counts.sum();
}

} // namespace

ToyWorld::ToyWorld(const ToyConfig& config)
    : ToyWorld(config, ConditionEmbedder(config.condition.m, config.condition.width,
                                         derive_seed(config.seed, "embedder"))
                           .parameters())
{
}

ToyWorld::ToyWorld(const ToyConfig& config, ParameterSet embedder_tables)
    : config_(config),
      embedder_(config.condition.m, config.condition.width, std::move(embedder_tables)),
      encoder_(config.condition.m, config.condition.width, derive_seed(config.seed, "encoder")),
      codec_(config.data.downsample)
{
    config_.validate();
}

DenoiserConfig ToyWorld::denoiser_config() const
{
    DenoiserConfig c;
    c.blocks = config_.model.blocks;
    c.heads = config_.model.heads;
    c.embed_dim = config_.model.embed_dim;
    c.latent_channels = codec_.latent_channels();
    c.max_frames = latent_frames(samples(kMaxDurationSeconds), config_.data.downsample);
    c.cond_rows = ConditionSet::kBlocks * config_.condition.m;
    c.cond_dim = config_.condition.width;
    c.mlp_ratio = config_.model.mlp_ratio;
    c.time_features = config_.model.time_features;
    c.position_features = config_.model.position_features;
    return c;
}

std::size_t ToyWorld::samples(double seconds) const
{
    return static_cast<std::size_t>(std::llround(seconds * config_.data.sample_rate));
}

std::size_t ToyWorld::windows(double seconds) const
{
    return samples(seconds) / window_length_samples(kMomentaryWindow, config_.data.sample_rate);
}

std::vector<double> ToyWorld::random_curve(Rng& rng, std::size_t points) const
{
    const double lo = config_.data.loudness_low, hi = config_.data.loudness_high;
    const double a = lo + (hi - lo) * uniform01(rng);
    const double b = lo + (hi - lo) * uniform01(rng);
    const double bump = 0.25 * (hi - lo) * (2.0 * uniform01(rng) - 1.0);
    std::vector<double> out(points);
    for (std::size_t i = 0; i < points; ++i) {
        const double x = points > 1 ? static_cast<double>(i) / static_cast<double>(points - 1) : 0.0;
        out[i] = std::clamp(a + (b - a) * x + bump * std::sin(std::numbers::pi * x), lo, hi);
    }
    return out;
}

AudioBuffer ToyWorld::render(const std::vector<double>& left, const std::vector<double>& right, double seconds,
                             std::uint64_t seed) const
{
    const int rate = config_.data.sample_rate;
    const std::size_t n = samples(seconds);
    const std::size_t count = windows(seconds);
    const std::size_t win = window_length_samples(kMomentaryWindow, rate);
    require(count >= 1, ErrorCode::InsufficientAudio, "toy clips need at least one loudness window");
    require(!left.empty() && !right.empty(), ErrorCode::InsufficientData, "empty target curve");

    std::vector<std::vector<double>> channels;
    const std::vector<double>* targets[2] = {&left, &right};
    for (int c = 0; c < 2; ++c) {
        const char* side = c == 0 ? "left" : "right";
        std::vector<double> base;
        if (config_.data.carrier == "periodic") {
            base = periodic_carrier(derive_seed(derive_seed(config_.seed, "carrier"), side), n);
        } else {
            Rng rng(derive_seed(seed, side));
            std::vector<double> noise(kPreroll + n);
            for (double& v : noise) {
                v = standard_normal(rng);
            }
            for (int k = 0; k < config_.data.band_order; ++k) {
                noise = band_pass(std::move(noise), config_.data.band_center, config_.data.band_q, rate);
            }
            base.assign(noise.begin() + static_cast<std::ptrdiff_t>(kPreroll), noise.end());
        }

        const std::vector<double> target = resample_linear(*targets[c], count);
        std::vector<double> gain(count, 1.0);
        std::vector<double> shaped(n);
        const auto shape = [&] {
            for (std::size_t i = 0; i < n; ++i) {
                shaped[i] = base[i] * gain[std::min(i / win, count - 1)];
            }
        };
        for (int pass = 0; pass < kGainPasses; ++pass) {
            shape();
            const auto measured = momentary_lufs(AudioBuffer(rate, {shaped})).front().values;
            for (std::size_t w = 0; w < count; ++w) {
                gain[w] *= std::pow(10.0, (denormalize_lufs(target[w]) - measured[w]) / 20.0);
            }
        }
        shape();
        channels.push_back(shaped);
    }
    return AudioBuffer(rate, std::move(channels));
}

std::vector<double> ToyWorld::periodic_carrier(std::uint64_t seed, std::size_t n) const
{
    const int period = config_.data.downsample;
    const double rate = config_.data.sample_rate;
    const double w0 = 2.0 * std::numbers::pi * config_.data.band_center / rate;
    const double alpha = std::sin(w0) / (2.0 * config_.data.band_q);
    const double a0 = 1.0 + alpha;
    Rng rng(seed);
    std::vector<double> out(n, 0.0);
    for (int k = 1; 2 * k < period; ++k) {
        const double w = 2.0 * std::numbers::pi * k / period;
        const std::complex<double> z1 = std::polar(1.0, -w), z2 = std::polar(1.0, -2.0 * w);
        const std::complex<double> h = (alpha / a0) * (1.0 - z2) / (1.0 - 2.0 * std::cos(w0) / a0 * z1 + (1.0 - alpha) / a0 * z2);
        const double amplitude = std::pow(std::abs(h), config_.data.band_order);
        const double phase = 2.0 * std::numbers::pi * uniform01(rng);
        for (std::size_t i = 0; i < n; ++i) {
            out[i] += amplitude * std::cos(w * static_cast<double>(i % static_cast<std::size_t>(period)) + phase);
        }
    }
    return out;
}

ChannelPair ToyWorld::measure(const AudioBuffer& audio) const
{
    require(audio.channel_count() == 2, ErrorCode::ChannelCount, "toy audio is stereo");
    return normalized_pair(momentary_lufs(audio));
}

Matrix ToyWorld::encode(const AudioBuffer& audio) const
{
    return codec_.encode(audio).data * config_.data.latent_scale;
}

AudioBuffer ToyWorld::decode(const Matrix& latent, std::size_t sample_count) const
{
    Latent z{LatentLayout::Stacked,
             codec_.latent_channels(),
             latent.cols(),
             config_.data.downsample,
             config_.data.sample_rate,
             sample_count,
             latent / config_.data.latent_scale};
    return codec_.decode(z);
}

ConditionSet ToyWorld::condition(const Prompts& prompts, const std::optional<ChannelPair>& lufs, double seconds) const
{
    const auto embed = [&](const std::optional<std::string>& text, Modality modality) -> std::optional<ModalEmbedding> {
        if (!text) {
            return std::nullopt;
        }
        return encode_prompt(encoder_, ModalPayload{modality, *text});
    };
    const MultimodalBlock mm = embedder_.build_multimodal(embed(prompts.language, Modality::Language),
                                                          embed(prompts.audio, Modality::Audio),
                                                          embed(prompts.video, Modality::Video));
    const Matrix l = lufs ? embedder_.build_lufs(lufs->first, lufs->second)
                          : Matrix::Zero(2 * embedder_.m(), embedder_.width());
    return assemble(mm, l, embedder_.build_timing(TimingPair{0.0, seconds}));
}

std::vector<TrainingExample> ToyWorld::dataset(std::uint64_t seed, int count) const
{
    Rng rng(seed);
    const double clip = config_.data.clip_seconds;
    const std::size_t points = windows(clip);
    std::vector<TrainingExample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const auto left = random_curve(rng, points);
        const auto right = random_curve(rng, points);
        const AudioBuffer audio = render(left, right, clip, rng());
        const std::string tag = std::to_string(i);
        const Prompts prompts{"synthetic hum " + tag, "reference " + tag, "video " + tag};
        out.push_back(TrainingExample{encode(audio), condition(prompts, measure(audio), clip)});
    }
    return out;
}

EvalLoss::EvalLoss(const std::vector<TrainingExample>& data, int draws, Objective objective, std::uint64_t seed)
    : data_(&data)
{
    require(!data.empty() && draws >= 1, ErrorCode::InsufficientData, "evaluation needs data and draws");
    Rng rng(seed);
    for (int k = 0; k < draws; ++k) {
        const auto idx = std::min(data.size() - 1, static_cast<std::size_t>(uniform01(rng) * data.size()));
        const double t = (k + 0.5) / draws;
        const Matrix& z0 = data[idx].z0;
        const Matrix eps = standard_normal_matrix(rng, z0.rows(), z0.cols());
        draws_.push_back(Draw{idx, t, forward_sample(z0, t, eps), training_target(objective, z0, eps, t)});
    }
}

double EvalLoss::operator()(const Denoiser& model) const
{
    double total = 0.0;
    for (const Draw& d : draws_) {
        const Matrix pred = model.predict(d.z_t, d.t, (*data_)[d.example].cond);
        total += (pred - d.target).squaredNorm() / static_cast<double>(pred.size());
    }
    return total / static_cast<double>(draws_.size());
}

ToyTrainOutcome train_toy(Denoiser& model, const ToyWorld& world, const std::vector<TrainingExample>& data,
                          const std::function<void(const LossPoint&)>& on_log)
{
    const ToyConfig& config = world.config();
    const auto& tc = config.training;
    require(!data.empty(), ErrorCode::InsufficientData, "toy training needs data");

    const Objective objective = parse_objective(config.diffusion.objective);
    OptimizerConfig oc;
    oc.kind = parse_optimizer(tc.optimizer);
    oc.learning_rate = tc.learning_rate;
    oc.clip_norm = tc.clip_norm;
    oc.warmup_steps = tc.warmup;
    Optimizer optimizer(model.parameters(), oc);
    TrainStepOptions options{objective,
                             DropoutPolicy{config.diffusion.modality_dropout, config.diffusion.whole_dropout,
                                           &world.embedder()}};
    const EvalLoss eval(data, tc.eval_draws, objective, derive_seed(config.seed, "eval-loss"));
    Rng rng(derive_seed(config.seed, "train"));

    ToyTrainOutcome outcome;
    const auto log = [&](const LossPoint& p) {
        outcome.curve.push_back(p);
        if (on_log) {
            on_log(p);
        }
    };
    outcome.initial_loss = eval(model);
    log(LossPoint{0, std::numeric_limits<double>::quiet_NaN(), outcome.initial_loss});

    ParameterSet last_good = model.parameters();
    double running = 0.0;
    int since = 0;
    std::vector<TrainingExample> batch;
    for (int step = 1; step <= tc.steps; ++step) {
        batch.clear();
        for (int j = 0; j < tc.batch; ++j) {
            batch.push_back(data[std::min(data.size() - 1, static_cast<std::size_t>(uniform01(rng) * data.size()))]);
        }
        double loss = 0.0;
        try {
            loss = train_step(model, batch, optimizer, rng, options);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NumericalDivergence) {
                throw;
            }
            model.parameters() = last_good;
            outcome.divergence = e.what();
            break;
        }
        last_good = model.parameters();
        outcome.steps_done = step;
        running += loss;
        ++since;
        if (step % tc.log_every == 0 || step == tc.steps) {
            log(LossPoint{step, running / since, eval(model)});
            running = 0.0;
            since = 0;
        }
    }
    outcome.final_loss = outcome.divergence ? eval(model) : outcome.curve.back().eval_loss;
    return outcome;
}

Checkpoint make_toy_checkpoint(const ToyWorld& world, const Denoiser& model,
                               const std::map<std::string, std::string>& extra)
{
    Checkpoint ck;
    ck.metadata = extra;
    ck.metadata["format"] = kCheckpointFormat;
    ck.metadata["config"] = to_ini(world.config());
    merge_parameters(ck.tensors, model.parameters(), "denoiser.");
    merge_parameters(ck.tensors, world.embedder().parameters(), "embedder.");
    return ck;
}

ToyCheckpoint load_toy_checkpoint(const std::filesystem::path& path)
{
    Checkpoint ck = read_checkpoint(path);
    const auto format = ck.metadata.find("format");
    require(format != ck.metadata.end() && format->second == kCheckpointFormat, ErrorCode::Format,
            path.string() + " is not a toy denoiser checkpoint");
    const auto text = ck.metadata.find("config");
    require(text != ck.metadata.end(), ErrorCode::Format, "checkpoint lacks its configuration");
    const ToyConfig config = parse_toy_config(text->second);
    ToyWorld world(config, extract_parameters(ck.tensors, "embedder."));
    Denoiser model = Denoiser::from_parameters(world.denoiser_config(), extract_parameters(ck.tensors, "denoiser."));
    return ToyCheckpoint{config, std::move(world), std::move(model)};
}

SamplerConfig sampler_config(const ToyConfig& config, std::uint64_t seed)
{
    return SamplerConfig{config.diffusion.steps, config.diffusion.guidance, seed,
                         parse_objective(config.diffusion.objective)};
}

AudioBuffer generate_audio(const Denoiser& model, const ToyWorld& world, const ConditionSet& cond,
                           const SamplerConfig& sampler, double seconds)
{
    require(std::isfinite(seconds) && seconds > 0.0, ErrorCode::Length, "duration must be positive");
    require(seconds <= kMaxDurationSeconds, ErrorCode::Length,
            "duration " + std::to_string(seconds) + " s exceeds the 60 s maximum");
    const std::size_t n = world.samples(seconds);
    require(n >= 1, ErrorCode::Length, "duration is shorter than one sample");
    const Eigen::Index frames = latent_frames(n, world.config().data.downsample);
    const Matrix z = sample(model, cond, sampler, world.codec().latent_channels(), frames);
    return world.decode(z, n);
}

ChannelPair ramp_curves(const ToyWorld& world, double seconds)
{
    const std::size_t count = world.windows(seconds);
    require(count >= 1, ErrorCode::InsufficientAudio, "ramp needs at least one window");
    const double lo = world.config().data.loudness_low, hi = world.config().data.loudness_high;
    ChannelPair out{NormalizedSeries{ChannelRole::Left, {}}, NormalizedSeries{ChannelRole::Right, {}}};
    for (std::size_t i = 0; i < count; ++i) {
        const double x = count > 1 ? static_cast<double>(i) / static_cast<double>(count - 1) : 0.5;
        out.first.values.push_back(lo + (hi - lo) * x);
        out.second.values.push_back(hi - (hi - lo) * x);
    }
    return out;
}

FidelityReport ramp_fidelity(const Denoiser& model, const ToyWorld& world, int generations)
{
    const ToyConfig& config = world.config();
    const double clip = config.data.clip_seconds;
    const ChannelPair ramp = ramp_curves(world, clip);
    const ConditionSet cond = world.condition(Prompts{}, ramp, clip);
    FidelityReport report;
    for (int g = 0; g < generations; ++g) {
        const auto sampler = sampler_config(config, derive_seed(config.seed, "ramp." + std::to_string(g)));
        const ChannelPair measured = world.measure(generate_audio(model, world, cond, sampler, clip));
        for (const auto& [want, got] : {std::pair{&ramp.first, &measured.first}, std::pair{&ramp.second, &measured.second}}) {
            report.conditioned.insert(report.conditioned.end(), want->values.begin(), want->values.end());
            report.measured.insert(report.measured.end(), got->values.begin(), got->values.end());
        }
    }
    report.pearson = pearson_correlation(report.conditioned, report.measured);
    return report;
}

std::vector<double> random_brightness(Rng& rng, std::size_t frames)
{
    constexpr int kPartials = 3;
    double amp[kPartials], freq[kPartials], phase[kPartials];
    double total = 0.0;
    for (int k = 0; k < kPartials; ++k) {
        amp[k] = 0.3 + 0.7 * uniform01(rng);
        freq[k] = 0.05 + 0.95 * uniform01(rng);
        phase[k] = 2.0 * std::numbers::pi * uniform01(rng);
        total += amp[k];
    }
    std::vector<double> out(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        const double time = static_cast<double>(i) / kFeatureFps;
        double s = 0.0;
        for (int k = 0; k < kPartials; ++k) {
            s += amp[k] * std::sin(2.0 * std::numbers::pi * freq[k] * time + phase[k]);
        }
        out[i] = 0.5 + 0.5 * s / total;
    }
    return out;
}

ChannelPair brightness_to_loudness(const ToyConfig& config, const std::vector<double>& brightness)
{
    const double lo = config.data.loudness_low, hi = config.data.loudness_high;
    ChannelPair out{NormalizedSeries{ChannelRole::Left, {}}, NormalizedSeries{ChannelRole::Right, {}}};
    for (double b : brightness) {
        out.first.values.push_back(lo + (hi - lo) * b);
        out.second.values.push_back(lo + (hi - lo) * (1.0 - b) * (1.0 - b));
    }
    return out;
}

FrameFeatureSeq brightness_features(const ToyConfig& config, const std::vector<double>& brightness)
{
    return extract_features(SyntheticFrameSource(brightness, kFeatureFps),
                            SyntheticBackbone(config.predictor.feature_dim), kFeatureFps);
}

RegressorConfig regressor_config(const ToyConfig& config)
{
    RegressorConfig c;
    c.layers = config.predictor.layers;
    c.heads = config.predictor.heads;
    c.dim = config.predictor.dim;
    c.mlp_ratio = config.predictor.mlp_ratio;
    c.feature_dim = config.predictor.feature_dim;
    return c;
}

RegressorTraining regressor_training(const ToyConfig& config)
{
    RegressorTraining t;
    t.epochs = config.predictor.epochs;
    t.batch_size = static_cast<std::size_t>(config.predictor.batch);
    t.seed = derive_seed(config.seed, "predictor.train");
    t.optimizer.learning_rate = config.predictor.learning_rate;
    return t;
}

PredictorData predictor_dataset(const ToyConfig& config)
{
    Rng rng(derive_seed(config.seed, "predictor.data"));
    PredictorData out;
    const int total = config.predictor.examples + config.predictor.held_out;
    for (int i = 0; i < total; ++i) {
        const double seconds = 1.0 + (config.predictor.max_seconds - 1.0) * uniform01(rng);
        const auto frames = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(seconds * kFeatureFps)));
        const auto brightness = random_brightness(rng, frames);
        auto [left, right] = brightness_to_loudness(config, brightness);
        RegressionExample ex{brightness_features(config, brightness), std::move(left), std::move(right)};
        (i < config.predictor.examples ? out.train : out.held_out).push_back(std::move(ex));
    }
    return out;
}

std::vector<AblationRow> run_ablation(const Denoiser& model, const ToyWorld& world, int clips,
                                      const LufsRegressor* predictor)
{
    require(clips >= 2, ErrorCode::InsufficientData, "the ablation needs at least two clips");
    const ToyConfig& config = world.config();
    const double clip = config.data.clip_seconds;
    const std::size_t points = world.windows(clip);

    struct Reference {
        std::vector<double> brightness;
        ChannelPair lufs;
        PeakList video_peaks;
    };
    std::vector<Reference> refs;
    Matrix ref_features(clips, static_cast<Eigen::Index>(2 * points));
    Matrix ref_labels(clips, kLabelBins);
    Rng rng(derive_seed(config.seed, "ablate.reference"));
    for (int c = 0; c < clips; ++c) {
        Reference ref;
        ref.brightness = random_brightness(rng, points);
        const auto targets = brightness_to_loudness(config, ref.brightness);
        const ChannelPair truth = world.measure(world.render(targets.first.values, targets.second.values, clip, rng()));
        ref_features.row(c) = stacked_values(truth);
        ref_labels.row(c) = loudness_labels(truth);
        ref.lufs = predictor ? predict(*predictor, brightness_features(config, ref.brightness)) : truth;
        ref.video_peaks = energy_peaks(ref.brightness, kFeatureFps, kMomentaryWindow);
        refs.push_back(std::move(ref));
    }

    std::vector<AblationRow> rows;
    for (int mask = 0; mask < 8; ++mask) {
        AblationRow row;
        row.language = (mask & 4) != 0;
        row.audio = (mask & 2) != 0;
        row.lufs = (mask & 1) != 0;
        row.combination = std::string(row.language ? "L+" : "") + (row.audio ? "A+" : "") + "V" +
                          (row.lufs ? (predictor ? "+LUFS-Pred" : "+LUFS-GT") : "");
        Matrix features(clips, ref_features.cols());
        Matrix labels(clips, kLabelBins);
        double align = 0.0;
        for (int c = 0; c < clips; ++c) {
            const std::string tag = std::to_string(c);
            Prompts prompts;
            prompts.video = "ablation video " + tag;
            if (row.language) {
                prompts.language = "ablation hum " + tag;
            }
            if (row.audio) {
                prompts.audio = "ablation reference " + tag;
            }
            const auto& ref = refs[static_cast<std::size_t>(c)];
            const ConditionSet cond =
                world.condition(prompts, row.lufs ? std::optional<ChannelPair>(ref.lufs) : std::nullopt, clip);
            const auto sampler = sampler_config(config, derive_seed(config.seed, "ablate.sample." + tag));
            const AudioBuffer audio = generate_audio(model, world, cond, sampler, clip);
            const ChannelPair measured = world.measure(audio);
            features.row(c) = stacked_values(measured);
            labels.row(c) = loudness_labels(measured);
            align += av_align(energy_peaks(audio, kMomentaryWindow), ref.video_peaks, kMomentaryWindow);
        }
        row.fd = frechet_distance(features, ref_features);
        row.kl = kl_label_divergence(ref_labels, labels);
        row.av_align = align / clips;
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace loudgen
