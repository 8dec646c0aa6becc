#include "loudgen/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <system_error>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "loudgen/error.hpp"

namespace loudgen {

namespace {

std::string render(int v) { return std::to_string(v); }
std::string render(std::uint64_t v) { return std::to_string(v); }
std::string render(const std::string& v) { return v; }
std::string render(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

template <typename T>
void parse_number(const std::string& key, const std::string& text, T& out)
{
    T value{};
    const char* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, value);
    require(res.ec == std::errc() && res.ptr == end, ErrorCode::Configuration,
            "bad value '" + text + "' for " + key);
    out = value;
}

void parse_value(const std::string& key, const std::string& text, int& out) { parse_number(key, text, out); }
void parse_value(const std::string& key, const std::string& text, double& out) { parse_number(key, text, out); }
void parse_value(const std::string& key, const std::string& text, std::uint64_t& out) { parse_number(key, text, out); }
void parse_value(const std::string&, const std::string& text, std::string& out) { out = text; }

struct Field {
    std::function<std::string(const ToyConfig&)> get;
    std::function<void(ToyConfig&, const std::string&)> set;
};

template <typename Access>
Field field(const std::string& key, Access access)
{
    return Field{[access](const ToyConfig& c) { return render(access(c)); },
                 [access, key](ToyConfig& c, const std::string& text) { parse_value(key, text, access(c)); }};
}

#define LOUDGEN_FIELD(key, member) {key, field(key, [](auto& c) -> auto& { return c.member; })}

const std::map<std::string, Field>& fields()
{
    static const std::map<std::string, Field> table = {
        LOUDGEN_FIELD("seed", seed),
        LOUDGEN_FIELD("data.sample_rate", data.sample_rate),
        LOUDGEN_FIELD("data.clip_seconds", data.clip_seconds),
        LOUDGEN_FIELD("data.downsample", data.downsample),
        LOUDGEN_FIELD("data.band_center", data.band_center),
        LOUDGEN_FIELD("data.band_q", data.band_q),
        LOUDGEN_FIELD("data.band_order", data.band_order),
        LOUDGEN_FIELD("data.carrier", data.carrier),
        LOUDGEN_FIELD("data.loudness_low", data.loudness_low),
        LOUDGEN_FIELD("data.loudness_high", data.loudness_high),
        LOUDGEN_FIELD("data.latent_scale", data.latent_scale),
        LOUDGEN_FIELD("data.examples", data.examples),
        LOUDGEN_FIELD("condition.m", condition.m),
        LOUDGEN_FIELD("condition.width", condition.width),
        LOUDGEN_FIELD("model.blocks", model.blocks),
        LOUDGEN_FIELD("model.heads", model.heads),
        LOUDGEN_FIELD("model.embed_dim", model.embed_dim),
        LOUDGEN_FIELD("model.mlp_ratio", model.mlp_ratio),
        LOUDGEN_FIELD("model.time_features", model.time_features),
        LOUDGEN_FIELD("model.position_features", model.position_features),
        LOUDGEN_FIELD("diffusion.objective", diffusion.objective),
        LOUDGEN_FIELD("diffusion.steps", diffusion.steps),
        LOUDGEN_FIELD("diffusion.guidance", diffusion.guidance),
        LOUDGEN_FIELD("diffusion.modality_dropout", diffusion.modality_dropout),
        LOUDGEN_FIELD("diffusion.whole_dropout", diffusion.whole_dropout),
        LOUDGEN_FIELD("training.steps", training.steps),
        LOUDGEN_FIELD("training.batch", training.batch),
        LOUDGEN_FIELD("training.learning_rate", training.learning_rate),
        LOUDGEN_FIELD("training.optimizer", training.optimizer),
        LOUDGEN_FIELD("training.clip_norm", training.clip_norm),
        LOUDGEN_FIELD("training.warmup", training.warmup),
        LOUDGEN_FIELD("training.log_every", training.log_every),
        LOUDGEN_FIELD("training.eval_draws", training.eval_draws),
        LOUDGEN_FIELD("predictor.layers", predictor.layers),
        LOUDGEN_FIELD("predictor.heads", predictor.heads),
        LOUDGEN_FIELD("predictor.dim", predictor.dim),
        LOUDGEN_FIELD("predictor.mlp_ratio", predictor.mlp_ratio),
        LOUDGEN_FIELD("predictor.feature_dim", predictor.feature_dim),
        LOUDGEN_FIELD("predictor.examples", predictor.examples),
        LOUDGEN_FIELD("predictor.held_out", predictor.held_out),
        LOUDGEN_FIELD("predictor.max_seconds", predictor.max_seconds),
        LOUDGEN_FIELD("predictor.epochs", predictor.epochs),
        LOUDGEN_FIELD("predictor.batch", predictor.batch),
        LOUDGEN_FIELD("predictor.learning_rate", predictor.learning_rate),
        LOUDGEN_FIELD("evaluation.generations", evaluation.generations),
        LOUDGEN_FIELD("evaluation.ablation_clips", evaluation.ablation_clips),
    };
    return table;
}

#undef LOUDGEN_FIELD

void assign(ToyConfig& config, const std::string& key, const std::string& value)
{
    const auto it = fields().find(key);
    require(it != fields().end(), ErrorCode::Configuration, "unknown configuration key '" + key + "'");
    it->second.set(config, value);
}

} // namespace

void ToyConfig::validate() const
{
    const auto check = [](bool ok, const std::string& what) { require(ok, ErrorCode::Configuration, what); };
    check(data.sample_rate >= 1000, "data.sample_rate must be at least 1000");
    check(data.clip_seconds >= 1.0 / 6.0 && data.clip_seconds <= 60.0, "data.clip_seconds must lie in [1/6, 60]");
    check(data.downsample >= 2 && data.downsample % 2 == 0, "data.downsample must be a positive even integer");
    check(data.band_center > 0.0 && data.band_center < 0.5 * data.sample_rate, "data.band_center must be below Nyquist");
    check(data.band_q > 0.0, "data.band_q must be positive");
    check(data.band_order >= 1, "data.band_order must be at least 1");
    check(data.carrier == "noise" || data.carrier == "periodic", "data.carrier must be noise or periodic");
    check(data.loudness_low >= 0.0 && data.loudness_low < data.loudness_high && data.loudness_high <= 1.0,
          "need 0 <= data.loudness_low < data.loudness_high <= 1");
    check(data.latent_scale > 0.0, "data.latent_scale must be positive");
    check(data.examples >= 1, "data.examples must be positive");
    check(condition.m >= 1 && condition.width >= 1, "condition sizes must be positive");
    check(diffusion.steps >= 1, "diffusion.steps must be positive");
    check(diffusion.guidance >= 0.0, "diffusion.guidance must be non-negative");
    check(diffusion.modality_dropout >= 0.0 && diffusion.modality_dropout <= 1.0 && diffusion.whole_dropout >= 0.0 &&
              diffusion.whole_dropout <= 1.0,
          "dropout probabilities must lie in [0, 1]");
    check(diffusion.objective == "v" || diffusion.objective == "epsilon" || diffusion.objective == "eps",
          "diffusion.objective must be v or epsilon");
    check(training.steps >= 0 && training.batch >= 1 && training.log_every >= 1 && training.eval_draws >= 1,
          "training counts out of range");
    check(training.learning_rate >= 0.0, "training.learning_rate must be non-negative");
    check(training.optimizer == "adam" || training.optimizer == "momentum", "training.optimizer must be adam or momentum");
    check(predictor.examples >= 1 && predictor.held_out >= 0 && predictor.epochs >= 0 && predictor.batch >= 0,
          "predictor counts out of range");
    check(predictor.max_seconds >= 1.0 / 6.0 && predictor.max_seconds <= 60.0,
          "predictor.max_seconds must lie in [1/6, 60]");
    check(evaluation.generations >= 1 && evaluation.ablation_clips >= 2, "evaluation counts out of range");
}

ToyConfig parse_toy_config(const std::string& ini_text, const std::vector<std::string>& overrides)
{
    ToyConfig config;
    boost::property_tree::ptree tree;
    std::istringstream in(ini_text);
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        fail(ErrorCode::Configuration, std::string("config parse error: ") + e.what());
    }
    for (const auto& [name, node] : tree) {
        if (node.empty()) {
            assign(config, name, node.data());
            continue;
        }
        for (const auto& [key, leaf] : node) {
            assign(config, name + "." + key, leaf.data());
        }
    }
    for (const auto& item : overrides) {
        const auto eq = item.find('=');
        require(eq != std::string::npos && eq > 0, ErrorCode::Configuration,
                "override '" + item + "' is not of the form section.key=value");
        assign(config, item.substr(0, eq), item.substr(eq + 1));
    }
    config.validate();
    return config;
}

ToyConfig load_toy_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides)
{
    std::string text;
    if (path) {
        std::ifstream in(*path);
        require(in.good(), ErrorCode::Io, "cannot open config " + path->string());
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    }
    return parse_toy_config(text, overrides);
}

std::string to_ini(const ToyConfig& config)
{
    std::ostringstream out;
    std::string section;
    out << "seed = " << render(config.seed) << "\n";
    for (const auto& [key, f] : fields()) {
        const auto dot = key.find('.');
        if (dot == std::string::npos) {
            continue;
        }
        const std::string s = key.substr(0, dot);
        if (s != section) {
            section = s;
            out << "\n[" << section << "]\n";
        }
        out << key.substr(dot + 1) << " = " << f.get(config) << "\n";
    }
    return out.str();
}

} // namespace loudgen
