#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "loudgen/audio_io.hpp"
#include "loudgen/config.hpp"
#include "loudgen/containers.hpp"
#include "loudgen/error.hpp"
#include "loudgen/lufs_meter.hpp"
#include "loudgen/lufs_predictor.hpp"
#include "loudgen/metrics.hpp"
#include "loudgen/toy.hpp"

namespace fs = std::filesystem;
using namespace loudgen;

namespace {

constexpr const char* kPredictorFormat = "loudgen-predictor";

enum Exit { Ok = 0, Failure = 1, Diverged = 3 };

void setup_logging()
{
    auto logger = spdlog::stderr_logger_st("loudgen");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* level = std::getenv("LOUDGEN_LOG")) {
        spdlog::set_level(spdlog::level::from_str(level));
    }
}

std::string num(double v)
{
    return fmt::format("{:.6f}", v);
}

/// Writes `text` to stdout and, when a path is given, to that file.
void emit(const std::string& text, const std::optional<fs::path>& file = std::nullopt)
{
    std::cout << text;
    if (file) {
        std::ofstream out(*file);
        require(out.good(), ErrorCode::Io, "cannot write " + file->string());
        out << text;
    }
}

std::vector<std::string> split(const std::string& line, char sep)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(line);
    while (std::getline(in, item, sep)) {
        out.push_back(item);
    }
    return out;
}

std::optional<double> parse_double(const std::string& s)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) {
            return v;
        }
    } catch (const std::exception&) {
    }
    return std::nullopt;
}

/// Numeric rows of a comma- or tab-separated file; a non-numeric first line is a header.
std::vector<std::vector<double>> read_table(const fs::path& path)
{
    std::ifstream in(path);
    require(in.good(), ErrorCode::Io, "cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const char sep = line.find('\t') != std::string::npos ? '\t' : ',';
        std::vector<double> row;
        bool numeric = true;
        for (const auto& cell : split(line, sep)) {
            const auto v = parse_double(cell);
            numeric = numeric && v.has_value();
            row.push_back(v.value_or(0.0));
        }
        if (!numeric) {
            require(first, ErrorCode::Format, path.string() + ": non-numeric row '" + line + "'");
            first = false;
            continue;
        }
        first = false;
        rows.push_back(std::move(row));
    }
    require(!rows.empty(), ErrorCode::Format, path.string() + " has no data rows");
    return rows;
}

/// Normalized loudness curves from a table whose last two columns are left and right.
ChannelPair read_lufs_csv(const fs::path& path)
{
    ChannelPair out{NormalizedSeries{ChannelRole::Left, {}}, NormalizedSeries{ChannelRole::Right, {}}};
    for (const auto& row : read_table(path)) {
        require(row.size() >= 2, ErrorCode::Format, path.string() + ": need left and right columns");
        const double l = row[row.size() - 2], r = row[row.size() - 1];
        require(l >= 0.0 && l <= 1.0 && r >= 0.0 && r <= 1.0, ErrorCode::Domain,
                path.string() + ": normalized loudness must lie in [0, 1]");
        out.first.values.push_back(l);
        out.second.values.push_back(r);
    }
    return out;
}

std::vector<double> read_column(const fs::path& path)
{
    std::vector<double> out;
    for (const auto& row : read_table(path)) {
        out.push_back(row.back());
    }
    return out;
}

std::string lufs_table(const ChannelPair& pair, char sep = '\t')
{
    std::string text = fmt::format("time{0}left{0}right\n", sep);
    for (std::size_t i = 0; i < pair.first.values.size(); ++i) {
        text += fmt::format("{1}{0}{2}{0}{3}\n", sep, num(i * kMomentaryWindow), num(pair.first.values[i]),
                            num(pair.second.values[i]));
    }
    return text;
}

struct ConfigArgs {
    std::optional<fs::path> path;
    std::vector<std::string> overrides;

    void attach(CLI::App* cmd)
    {
        cmd->add_option("--config", path, "INI configuration file")->check(CLI::ExistingFile);
        cmd->add_option("--set", overrides, "Override, section.key=value (repeatable)");
    }
    ToyConfig load() const { return load_toy_config(path, overrides); }
};

struct PromptArgs {
    std::optional<std::string> language, audio, video;

    void attach(CLI::App* cmd)
    {
        cmd->add_option("--language", language, "Language prompt text");
        cmd->add_option("--audio", audio, "Audio prompt payload");
        cmd->add_option("--video", video, "Video prompt payload");
    }
    Prompts prompts() const { return Prompts{language, audio, video}; }
};

// ---- lufs ----

struct LufsMeasureArgs {
    fs::path input;
    double window = kMomentaryWindow;
    double hop = kMomentaryWindow;
    bool clip = false;
    bool normalized = false;
    bool integrated = false;
    std::optional<fs::path> csv;
};

int run_lufs_measure(const LufsMeasureArgs& a)
{
    const AudioBuffer audio = read_wav(a.input);
    const auto series = momentary_lufs(audio, a.window, a.hop);
    spdlog::info("{}: {} channel(s), {} windows", a.input.string(), series.size(),
                 series.empty() ? 0 : series.front().values.size());
    const auto label = [](ChannelRole r) {
        return r == ChannelRole::Left ? "left" : r == ChannelRole::Right ? "right" : "mono";
    };
    std::string text = "time";
    for (const auto& s : series) {
        text += std::string("\t") + label(s.channel);
    }
    text += "\n";
    const std::size_t rows = series.empty() ? 0 : series.front().values.size();
    for (std::size_t i = 0; i < rows; ++i) {
        text += num(i * a.hop);
        for (const auto& s : series) {
            double v = s.values[i];
            if (a.normalized) {
                v = clip_normalize(v);
            } else if (a.clip) {
                v = std::clamp(v, kLufsFloor, kLufsCeiling);
            }
            text += "\t" + num(v);
        }
        text += "\n";
    }
    if (a.integrated) {
        text += "integrated\t" + num(integrated_lufs(audio)) + "\n";
    }
    std::cout << text;
    if (a.csv) {
        std::string csv = text;
        std::replace(csv.begin(), csv.end(), '\t', ',');
        std::ofstream out(*a.csv);
        require(out.good(), ErrorCode::Io, "cannot write " + a.csv->string());
        out << csv;
    }
    return Ok;
}

int run_lufs_embed(const fs::path& input, const ConfigArgs& cfg, const fs::path& out)
{
    const ToyWorld world(cfg.load());
    const AudioBuffer audio = read_wav(input);
    require(audio.channel_count() == 2, ErrorCode::ChannelCount, "the loudness embedding needs stereo input");
    const ChannelPair curves = world.measure(audio);
    const Matrix e = world.embedder().build_lufs(curves.first, curves.second);
    write_matrix(out, e);
    emit(fmt::format("rows\t{}\ncols\t{}\n", e.rows(), e.cols()));
    return Ok;
}

// ---- condition ----

struct ConditionArgs {
    ConfigArgs cfg;
    PromptArgs prompts;
    std::optional<fs::path> lufs_wav, lufs_csv;
    double seconds = 10.0;
    fs::path out;
};

int run_condition_build(const ConditionArgs& a)
{
    const ToyWorld world(a.cfg.load());
    std::optional<ChannelPair> lufs;
    if (a.lufs_wav) {
        lufs = world.measure(read_wav(*a.lufs_wav));
    } else if (a.lufs_csv) {
        lufs = read_lufs_csv(*a.lufs_csv);
    }
    const ConditionSet cond = world.condition(a.prompts.prompts(), lufs, a.seconds);
    write_condition(a.out, cond);
    emit(fmt::format("task_id\t{}\nrows\t{}\ncols\t{}\n", cond.presence.id, cond.assembled.rows(),
                     cond.assembled.cols()));
    return Ok;
}

// ---- train-toy ----

int run_train_toy(const ConfigArgs& cfg, const fs::path& out_dir)
{
    const ToyConfig config = cfg.load();
    fs::create_directories(out_dir);
    {
        std::ofstream ini(out_dir / "config.ini");
        ini << to_ini(config);
    }
    const ToyWorld world(config);
    spdlog::info("rendering {} training clips", config.data.examples);
    const auto data = world.dataset(derive_seed(config.seed, "data"), config.data.examples);
    Denoiser model = Denoiser::init(world.denoiser_config(), derive_seed(config.seed, "model.init"));
    spdlog::info("denoiser with {} parameters", model.parameters().scalar_count());

    std::ofstream curve(out_dir / "loss.tsv");
    curve << "step\ttrain_loss\teval_loss\n";
    std::cout << "step\ttrain_loss\teval_loss\n";
    const auto outcome = train_toy(model, world, data, [&](const LossPoint& p) {
        const std::string line = fmt::format("{}\t{}\t{}\n", p.step, num(p.train_loss), num(p.eval_loss));
        curve << line << std::flush;
        std::cout << line << std::flush;
    });

    std::map<std::string, std::string> meta{{"steps_done", std::to_string(outcome.steps_done)},
                                            {"initial_loss", num(outcome.initial_loss)},
                                            {"final_loss", num(outcome.final_loss)}};
    if (outcome.divergence) {
        meta["diverged"] = *outcome.divergence;
    }
    write_checkpoint(out_dir / "checkpoint.lgck", make_toy_checkpoint(world, model, meta));
    std::cout << "initial_loss\t" << num(outcome.initial_loss) << "\nfinal_loss\t" << num(outcome.final_loss)
              << "\nratio\t" << num(outcome.initial_loss / outcome.final_loss) << "\n";
    if (outcome.divergence) {
        spdlog::error("training diverged: {}; wrote the last finite checkpoint", *outcome.divergence);
        return Diverged;
    }
    return Ok;
}

// ---- generate ----

struct GenerateArgs {
    fs::path checkpoint;
    double seconds = 10.0;
    std::optional<fs::path> lufs_csv;
    bool ramp = false;
    std::optional<fs::path> predictor;
    std::optional<fs::path> brightness;
    PromptArgs prompts;
    double guidance = 7.0;
    int steps = 100;
    std::optional<std::uint64_t> seed;
    std::string encoding = "float32";
    fs::path out;
};

LufsRegressor load_predictor(const fs::path& path, const ToyConfig* expect = nullptr)
{
    Checkpoint ck = read_checkpoint(path);
    const auto format = ck.metadata.find("format");
    require(format != ck.metadata.end() && format->second == kPredictorFormat, ErrorCode::Format,
            path.string() + " is not a loudness predictor checkpoint");
    const ToyConfig config = parse_toy_config(ck.metadata.at("config"));
    if (expect != nullptr) {
        require(config.predictor.feature_dim == expect->predictor.feature_dim, ErrorCode::Configuration,
                "predictor feature width differs from the generator config");
    }
    return LufsRegressor::from_parameters(regressor_config(config), std::move(ck.tensors));
}

int run_generate(const GenerateArgs& a)
{
    require(a.seconds <= kMaxDurationSeconds, ErrorCode::Length,
            "duration " + num(a.seconds) + " s exceeds the 60 s maximum");
    const ToyCheckpoint ck = load_toy_checkpoint(a.checkpoint);
    const ToyWorld& world = ck.world;
    std::optional<ChannelPair> lufs;
    if (a.lufs_csv) {
        lufs = read_lufs_csv(*a.lufs_csv);
    } else if (a.ramp) {
        lufs = ramp_curves(world, a.seconds);
    } else if (a.predictor) {
        require(a.brightness.has_value(), ErrorCode::Configuration, "--predictor needs --brightness");
        const LufsRegressor model = load_predictor(*a.predictor, &ck.config);
        lufs = predict(model, brightness_features(ck.config, read_column(*a.brightness)));
    }
    const ConditionSet cond = world.condition(a.prompts.prompts(), lufs, a.seconds);
    SamplerConfig sampler = sampler_config(ck.config, a.seed.value_or(derive_seed(ck.config.seed, "generate")));
    sampler.guidance_scale = a.guidance;
    sampler.steps = a.steps;
    spdlog::info("sampling {} s with {} steps, guidance {}", a.seconds, sampler.steps, sampler.guidance_scale);
    const AudioBuffer audio = generate_audio(ck.model, world, cond, sampler, a.seconds);
    const auto report = write_wav(a.out, audio, a.encoding == "pcm16" ? WavEncoding::Pcm16 : WavEncoding::Float32);
    if (report.clipped_samples > 0) {
        spdlog::warn("{} samples clipped on write", report.clipped_samples);
    }

    std::string text = fmt::format("frames\t{}\nsample_rate\t{}\n", audio.frame_count(), audio.sample_rate());
    const std::size_t windows = world.windows(a.seconds);
    if (windows >= 1) {
        const ChannelPair measured = world.measure(audio);
        text += "time\tcond_left\tcond_right\tmeasured_left\tmeasured_right\n";
        std::vector<double> conditioned, got;
        std::vector<double> cl, cr;
        if (lufs) {
            cl = resample_linear(lufs->first.values, windows);
            cr = resample_linear(lufs->second.values, windows);
        }
        for (std::size_t i = 0; i < windows; ++i) {
            text += num(i * kMomentaryWindow) + "\t" + (lufs ? num(cl[i]) : "nan") + "\t" +
                    (lufs ? num(cr[i]) : "nan") + "\t" + num(measured.first.values[i]) + "\t" +
                    num(measured.second.values[i]) + "\n";
        }
        if (lufs && windows >= 2) {
            conditioned = cl;
            conditioned.insert(conditioned.end(), cr.begin(), cr.end());
            got = measured.first.values;
            got.insert(got.end(), measured.second.values.begin(), measured.second.values.end());
            text += "pearson\t" + num(pearson_correlation(conditioned, got)) + "\n";
        }
    }
    std::cout << text;
    return Ok;
}

// ---- evaluate ----

int run_evaluate(const fs::path& checkpoint, std::optional<int> generations, std::optional<int> steps)
{
    ToyCheckpoint ck = load_toy_checkpoint(checkpoint);
    ToyConfig config = ck.config;
    if (steps) {
        config.diffusion.steps = *steps;
    }
    const ToyWorld world(config, ck.world.embedder().parameters());
    const int count = generations.value_or(config.evaluation.generations);
    const FidelityReport report = ramp_fidelity(ck.model, world, count);
    std::string text = "conditioned\tmeasured\n";
    for (std::size_t i = 0; i < report.conditioned.size(); ++i) {
        text += num(report.conditioned[i]) + "\t" + num(report.measured[i]) + "\n";
    }
    text += fmt::format("generations\t{}\npearson\t{}\n", count, num(report.pearson));
    std::cout << text;
    return Ok;
}

// ---- predict-lufs ----

int run_predict_train(const ConfigArgs& cfg, const fs::path& out)
{
    const ToyConfig config = cfg.load();
    const PredictorData data = predictor_dataset(config);
    RegressorTraining training = regressor_training(config);
    std::cout << "epoch\tloss\n";
    training.on_epoch = [](int epoch, double loss) { std::cout << epoch + 1 << "\t" << num(loss) << "\n"; };
    const TrainedRegressor trained = train_regressor(regressor_config(config), data.train, training);
    Checkpoint ck;
    ck.metadata["format"] = kPredictorFormat;
    ck.metadata["config"] = to_ini(config);
    ck.tensors = trained.model.parameters();
    write_checkpoint(out, ck);
    std::cout << "train_mae\t" << num(regression_mae(trained.model, data.train)) << "\n";
    if (!data.held_out.empty()) {
        std::cout << "held_out_mae\t" << num(regression_mae(trained.model, data.held_out)) << "\n";
    }
    return Ok;
}

int run_predict(const fs::path& checkpoint, const std::optional<fs::path>& brightness,
                const std::optional<fs::path>& features, const std::optional<fs::path>& out)
{
    Checkpoint ck = read_checkpoint(checkpoint);
    const ToyConfig config = parse_toy_config(ck.metadata.at("config"));
    const LufsRegressor model = load_predictor(checkpoint);
    FrameFeatureSeq feats;
    if (brightness) {
        feats = brightness_features(config, read_column(*brightness));
    } else {
        require(features.has_value(), ErrorCode::Configuration, "need --brightness or --features");
        feats = FrameFeatureSeq{kFeatureFps, read_matrix(*features), FeatureOrigin::External};
    }
    const ChannelPair pred = predict(model, feats);
    std::cout << lufs_table(pred);
    if (out) {
        std::ofstream f(*out);
        require(f.good(), ErrorCode::Io, "cannot write " + out->string());
        f << lufs_table(pred, ',');
    }
    return Ok;
}

// ---- ablate ----

int run_ablate(const fs::path& checkpoint, const std::optional<fs::path>& predictor, std::optional<int> clips,
               std::optional<int> steps, const std::optional<fs::path>& out)
{
    ToyCheckpoint ck = load_toy_checkpoint(checkpoint);
    ToyConfig config = ck.config;
    if (steps) {
        config.diffusion.steps = *steps;
    }
    const ToyWorld world(config, ck.world.embedder().parameters());
    std::optional<LufsRegressor> regressor;
    if (predictor) {
        regressor = load_predictor(*predictor, &config);
    }
    const auto rows = run_ablation(ck.model, world, clips.value_or(config.evaluation.ablation_clips),
                                   regressor ? &*regressor : nullptr);
    std::string text = "combination\tlanguage\taudio\tvideo\tlufs\tfd\tkl\tav_align\n";
    for (const auto& r : rows) {
        text += fmt::format("{}\t{:d}\t{:d}\t{:d}\t{:d}\t{}\t{}\t{}\n", r.combination, r.language, r.audio, r.video,
                            r.lufs, num(r.fd), num(r.kl), num(r.av_align));
    }
    emit(text, out);
    return Ok;
}

// ---- metrics ----

PeakList load_peaks(const fs::path& path, double window)
{
    if (path.extension() == ".wav") {
        return energy_peaks(read_wav(path), window);
    }
    PeakList out = read_column(path);
    for (std::size_t i = 1; i < out.size(); ++i) {
        require(out[i] > out[i - 1], ErrorCode::Format, path.string() + ": peak times must increase");
    }
    return out;
}

// ---- synth ----

struct SynthArgs {
    std::string kind = "sine";
    double frequency = 997.0;
    double amplitude = 1.0;
    double seconds = 1.0;
    int rate = 48000;
    int channels = 1;
    std::uint64_t seed = 0;
    std::string encoding = "float32";
    fs::path out;
};

int run_synth(const SynthArgs& a)
{
    SignalSpec spec;
    spec.kind = a.kind == "sine"      ? SignalKind::Sine
                : a.kind == "silence" ? SignalKind::Silence
                                      : SignalKind::WhiteNoise;
    spec.frequency = a.frequency;
    spec.amplitude = a.amplitude;
    spec.duration = a.seconds;
    spec.seed = a.seed;
    const AudioBuffer audio = synth_signal(spec, a.rate, a.channels);
    write_wav(a.out, audio, a.encoding == "pcm16" ? WavEncoding::Pcm16 : WavEncoding::Float32);
    std::cout << "frames\t" << audio.frame_count() << "\n";
    return Ok;
}

} // namespace

int main(int argc, char** argv)
{
    setup_logging();
    CLI::App app{"Loudness-conditioned latent diffusion toolkit"};
    app.require_subcommand(1);
    int status = Ok;
    std::function<int()> action;

    // lufs
    auto* lufs = app.add_subcommand("lufs", "Loudness metering");
    lufs->require_subcommand(1);
    LufsMeasureArgs measure;
    auto* measure_cmd = lufs->add_subcommand("measure", "Momentary loudness per channel");
    measure_cmd->add_option("input", measure.input, "WAV file")->required();
    measure_cmd->add_option("--window", measure.window, "Window length in seconds");
    measure_cmd->add_option("--hop", measure.hop, "Hop in seconds");
    measure_cmd->add_flag("--clip", measure.clip, "Clip values to [-70, 0]");
    measure_cmd->add_flag("--normalized", measure.normalized, "Print clip-normalized values in [0, 1]");
    measure_cmd->add_flag("--integrated", measure.integrated, "Also print gated integrated loudness");
    measure_cmd->add_option("--csv", measure.csv, "Also write the table as CSV");
    measure_cmd->callback([&] { action = [&] { return run_lufs_measure(measure); }; });

    fs::path embed_input, embed_out;
    ConfigArgs embed_cfg;
    auto* embed_cmd = lufs->add_subcommand("embed", "Loudness embedding of a stereo WAV");
    embed_cmd->add_option("input", embed_input, "WAV file")->required();
    embed_cmd->add_option("--out", embed_out, "Output matrix container")->required();
    embed_cfg.attach(embed_cmd);
    embed_cmd->callback([&] { action = [&] { return run_lufs_embed(embed_input, embed_cfg, embed_out); }; });

    // condition
    auto* condition = app.add_subcommand("condition", "Condition assembly");
    condition->require_subcommand(1);
    ConditionArgs cond;
    auto* build_cmd = condition->add_subcommand("build", "Assemble the cross-attention context");
    cond.cfg.attach(build_cmd);
    cond.prompts.attach(build_cmd);
    auto* lw = build_cmd->add_option("--lufs-wav", cond.lufs_wav, "Measure loudness curves from this WAV");
    build_cmd->add_option("--lufs-csv", cond.lufs_csv, "Normalized loudness table (time,left,right)")->excludes(lw);
    build_cmd->add_option("--seconds", cond.seconds, "Clip duration for the timing block");
    build_cmd->add_option("--out", cond.out, "Output condition container")->required();
    build_cmd->callback([&] { action = [&] { return run_condition_build(cond); }; });

    // train-toy
    ConfigArgs train_cfg;
    fs::path train_out;
    auto* train_cmd = app.add_subcommand("train-toy", "Train the toy denoiser");
    train_cfg.attach(train_cmd);
    train_cmd->add_option("--out", train_out, "Output directory")->required();
    train_cmd->callback([&] { action = [&] { return run_train_toy(train_cfg, train_out); }; });

    // generate
    GenerateArgs gen;
    auto* gen_cmd = app.add_subcommand("generate", "Sample audio from a toy checkpoint");
    gen_cmd->add_option("--checkpoint", gen.checkpoint, "Toy checkpoint")->required();
    gen_cmd->add_option("--seconds", gen.seconds, "Output duration (at most 60)");
    auto* lc = gen_cmd->add_option("--lufs-csv", gen.lufs_csv, "Normalized loudness table");
    auto* rf = gen_cmd->add_flag("--ramp", gen.ramp, "Condition on a rising-left, falling-right ramp")->excludes(lc);
    auto* pf = gen_cmd->add_option("--predictor", gen.predictor, "Predictor checkpoint")->excludes(lc)->excludes(rf);
    gen_cmd->add_option("--brightness", gen.brightness, "Brightness track at 6 fps, for --predictor")->needs(pf);
    gen.prompts.attach(gen_cmd);
    gen_cmd->add_option("--guidance", gen.guidance, "Classifier-free guidance scale")->capture_default_str();
    gen_cmd->add_option("--steps", gen.steps, "Sampler steps")->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed, "Noise seed");
    gen_cmd->add_option("--encoding", gen.encoding, "float32 or pcm16")->check(CLI::IsMember({"float32", "pcm16"}));
    gen_cmd->add_option("--out", gen.out, "Output WAV")->required();
    gen_cmd->callback([&] { action = [&] { return run_generate(gen); }; });

    // evaluate
    fs::path eval_ck;
    std::optional<int> eval_generations, eval_steps;
    auto* eval_cmd = app.add_subcommand("evaluate", "Ramp-conditioning fidelity of a toy checkpoint");
    eval_cmd->add_option("--checkpoint", eval_ck, "Toy checkpoint")->required();
    eval_cmd->add_option("--generations", eval_generations, "Seeded generations");
    eval_cmd->add_option("--steps", eval_steps, "Sampler steps");
    eval_cmd->callback([&] { action = [&] { return run_evaluate(eval_ck, eval_generations, eval_steps); }; });

    // predict-lufs
    auto* pred = app.add_subcommand("predict-lufs", "Loudness prediction from frame features");
    pred->require_subcommand(1);
    ConfigArgs pred_cfg;
    fs::path pred_train_out;
    auto* pt = pred->add_subcommand("train", "Train on the synthetic brightness task");
    pred_cfg.attach(pt);
    pt->add_option("--out", pred_train_out, "Output checkpoint")->required();
    pt->callback([&] { action = [&] { return run_predict_train(pred_cfg, pred_train_out); }; });
    fs::path pred_ck;
    std::optional<fs::path> pred_brightness, pred_features, pred_out;
    auto* pr = pred->add_subcommand("run", "Predict normalized loudness curves");
    pr->add_option("--checkpoint", pred_ck, "Predictor checkpoint")->required();
    auto* pb = pr->add_option("--brightness", pred_brightness, "Brightness track at 6 fps");
    pr->add_option("--features", pred_features, "Frame feature matrix container")->excludes(pb);
    pr->add_option("--out", pred_out, "Also write CSV");
    pr->callback([&] { action = [&] { return run_predict(pred_ck, pred_brightness, pred_features, pred_out); }; });

    // ablate
    fs::path ab_ck;
    std::optional<fs::path> ab_pred, ab_out;
    std::optional<int> ab_clips, ab_steps;
    auto* ab = app.add_subcommand("ablate", "Condition-combination grid on the toy task");
    ab->add_option("--checkpoint", ab_ck, "Toy checkpoint")->required();
    ab->add_option("--predictor", ab_pred, "Use predicted instead of ground-truth loudness");
    ab->add_option("--clips", ab_clips, "Clips per combination");
    ab->add_option("--steps", ab_steps, "Sampler steps");
    ab->add_option("--out", ab_out, "Also write the TSV table here");
    ab->callback([&] { action = [&] { return run_ablate(ab_ck, ab_pred, ab_clips, ab_steps, ab_out); }; });

    // metrics
    auto* metrics = app.add_subcommand("metrics", "Evaluation metrics");
    metrics->require_subcommand(1);
    fs::path ma, mb;
    auto* fd = metrics->add_subcommand("fd", "Frechet distance between feature sets");
    fd->add_option("a", ma, "Feature matrix container")->required();
    fd->add_option("b", mb, "Feature matrix container")->required();
    fd->callback([&] {
        action = [&] {
            std::cout << "fd\t" << num(frechet_distance(read_matrix(ma), read_matrix(mb))) << "\n";
            return int(Ok);
        };
    });
    auto* kl = metrics->add_subcommand("kl", "KL divergence between label probabilities");
    kl->add_option("p", ma, "Probability matrix container")->required();
    kl->add_option("q", mb, "Probability matrix container")->required();
    kl->callback([&] {
        action = [&] {
            std::cout << "kl\t" << num(kl_label_divergence(read_matrix(ma), read_matrix(mb))) << "\n";
            return int(Ok);
        };
    });
    double tolerance = 0.1, window = 0.1;
    auto* av = metrics->add_subcommand("avalign", "Energy-peak alignment (WAV or peak-time list inputs)");
    av->add_option("audio", ma, "WAV or peak times")->required();
    av->add_option("video", mb, "WAV or peak times")->required();
    av->add_option("--tolerance", tolerance, "Matching tolerance in seconds")->capture_default_str();
    av->add_option("--window", window, "Peak detector window for WAV inputs")->capture_default_str();
    av->callback([&] {
        action = [&] {
            std::cout << "av_align\t" << num(av_align(load_peaks(ma, window), load_peaks(mb, window), tolerance))
                      << "\n";
            return int(Ok);
        };
    });

    // synth
    SynthArgs synth;
    auto* sy = app.add_subcommand("synth", "Write a test signal");
    sy->add_option("--kind", synth.kind, "sine, silence or noise")->check(CLI::IsMember({"sine", "silence", "noise"}));
    sy->add_option("--frequency", synth.frequency, "Sine frequency in Hz");
    sy->add_option("--amplitude", synth.amplitude, "Peak amplitude");
    sy->add_option("--seconds", synth.seconds, "Duration");
    sy->add_option("--rate", synth.rate, "Sample rate");
    sy->add_option("--channels", synth.channels, "1 or 2");
    sy->add_option("--seed", synth.seed, "Noise seed");
    sy->add_option("--encoding", synth.encoding, "float32 or pcm16")->check(CLI::IsMember({"float32", "pcm16"}));
    sy->add_option("--out", synth.out, "Output WAV")->required();
    sy->callback([&] { action = [&] { return run_synth(synth); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    try {
        status = action();
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
        return Failure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return Failure;
    }
    return status;
}
