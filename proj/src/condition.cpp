#include "loudgen/condition.hpp"

#include <cmath>
#include <numbers>

#include "loudgen/error.hpp"

namespace loudgen {

std::string_view to_string(Modality modality) noexcept
{
    switch (modality) {
    case Modality::Language: return "language";
    case Modality::Audio: return "audio";
    case Modality::Video: return "video";
    }
    return "unknown";
}

SyntheticEncoder::SyntheticEncoder(Eigen::Index rows, Eigen::Index width, std::uint64_t seed)
    : rows_(rows), width_(width), seed_(seed)
{
    require(rows >= 1 && width >= 1, ErrorCode::Configuration, "encoder shape must be positive");
}

ModalEmbedding SyntheticEncoder::encode(const ModalPayload& payload) const
{
    const std::string tag = std::string(to_string(payload.modality)) + '\0' + payload.bytes;
    Rng rng(derive_seed(seed_, tag));
    Matrix m = standard_normal_matrix(rng, rows_, width_);
    for (Eigen::Index r = 0; r < rows_; ++r) {
        m.row(r).normalize();
    }
    return ModalEmbedding{payload.modality, std::move(m)};
}

ModalEmbedding encode_prompt(const ModalEncoder& encoder, const ModalPayload& payload)
{
    ModalEmbedding e;
    try {
        e = encoder.encode(payload);
    } catch (const Error& err) {
        if (err.code() == ErrorCode::Encoder) {
            throw;
        }
        fail(ErrorCode::Encoder, std::string(to_string(payload.modality)) + ": " + err.what());
    } catch (const std::exception& err) {
        fail(ErrorCode::Encoder, std::string(to_string(payload.modality)) + ": " + err.what());
    }
    const std::string tag(to_string(payload.modality));
    require(e.modality == payload.modality, ErrorCode::Encoder, tag + ": encoder returned a different modality");
    require(e.matrix.rows() == encoder.rows() && e.matrix.cols() == encoder.width(), ErrorCode::Encoder,
            tag + ": encoder returned a wrongly shaped embedding");
    require(e.matrix.allFinite(), ErrorCode::Encoder, tag + ": encoder returned non-finite values");
    return e;
}

TaskId build_task_id(bool language, bool audio, bool video) noexcept
{
    return TaskId{4 * int(language) + 2 * int(audio) + int(video), language, audio, video};
}

TaskId task_from_id(int id)
{
    require(id >= 0 && id <= 7, ErrorCode::Domain, "task id must lie in [0, 7]");
    return build_task_id((id & 4) != 0, (id & 2) != 0, (id & 1) != 0);
}

ConditionSet null_condition(Eigen::Index m, Eigen::Index width)
{
    return ConditionSet{m, width, TaskId{}, Matrix::Zero(ConditionSet::kBlocks * m, width)};
}

ConditionEmbedder::ConditionEmbedder(Eigen::Index m, Eigen::Index width, std::uint64_t seed) : m_(m), width_(width)
{
    require(m >= 1 && width >= 1, ErrorCode::Configuration, "condition shape must be positive");
    Rng rng(seed);
    const double s = 1.0 / std::sqrt(static_cast<double>(width));
    params_.add("task_table", standard_normal_matrix(rng, 8 * m, width) * s);
    params_.add("lufs_lift.weight", standard_normal_matrix(rng, 1, width));
    params_.add("lufs_lift.bias", standard_normal_matrix(rng, 1, width) * s);
    params_.add("timing.weight",
                standard_normal_matrix(rng, 2 * kTimingPeriods, width) / std::sqrt(double(2 * kTimingPeriods)));
    params_.add("timing.bias", Matrix::Zero(1, width));
}

ConditionEmbedder::ConditionEmbedder(Eigen::Index m, Eigen::Index width, ParameterSet tables)
    : m_(m), width_(width), params_(std::move(tables))
{
    check_tables();
}

void ConditionEmbedder::check_tables() const
{
    const auto expect = [&](const char* name, Eigen::Index rows, Eigen::Index cols) {
        const auto i = params_.find(name);
        require(i.has_value(), ErrorCode::Format, std::string("condition tables lack ") + name);
        require(params_.value(*i).rows() == rows && params_.value(*i).cols() == cols, ErrorCode::Format,
                std::string("condition table ") + name + " has the wrong shape");
    };
    expect("task_table", 8 * m_, width_);
    expect("lufs_lift.weight", 1, width_);
    expect("lufs_lift.bias", 1, width_);
    expect("timing.weight", 2 * kTimingPeriods, width_);
    expect("timing.bias", 1, width_);
}

Matrix ConditionEmbedder::task_embedding(const TaskId& task) const
{
    return params_.value(0).middleRows(task.id * m_, m_);
}

MultimodalBlock ConditionEmbedder::build_multimodal(const std::optional<ModalEmbedding>& language,
                                                    const std::optional<ModalEmbedding>& audio,
                                                    const std::optional<ModalEmbedding>& video) const
{
    const TaskId task = build_task_id(language.has_value(), audio.has_value(), video.has_value());
    Matrix rows = Matrix::Zero(4 * m_, width_);
    rows.topRows(m_) = task_embedding(task);
    const std::array<const std::optional<ModalEmbedding>*, 3> slots{&language, &audio, &video};
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const auto& e = *slots[i];
        if (!e) {
            continue;
        }
        require(e->matrix.rows() == m_ && e->matrix.cols() == width_, ErrorCode::Dimension,
                std::string(to_string(e->modality)) + " embedding is " + std::to_string(e->matrix.rows()) + "x" +
                    std::to_string(e->matrix.cols()) + ", expected " + std::to_string(m_) + "x" +
                    std::to_string(width_));
        rows.middleRows(static_cast<Eigen::Index>(i + 1) * m_, m_) = e->matrix;
    }
    return MultimodalBlock{std::move(rows), task};
}

std::vector<double> resample_linear(std::span<const double> values, std::size_t points)
{
    require(!values.empty(), ErrorCode::InsufficientData, "cannot resample an empty series");
    require(points >= 1, ErrorCode::Domain, "resampling needs at least one output point");
    std::vector<double> out(points);
    const std::size_t n = values.size();
    if (points == 1 || n == 1) {
        std::fill(out.begin(), out.end(), values.front());
        if (n > 1) {
            out.back() = values.back();
        }
        return out;
    }
    for (std::size_t i = 0; i < points; ++i) {
        if (i == points - 1) {
            out[i] = values.back();
            continue;
        }
        const double x = static_cast<double>(i) * static_cast<double>(n - 1) / static_cast<double>(points - 1);
        const auto lo = static_cast<std::size_t>(std::floor(x));
        const double w = x - static_cast<double>(lo);
        out[i] = w == 0.0 ? values[lo] : values[lo] + w * (values[lo + 1] - values[lo]);
    }
    return out;
}

Matrix ConditionEmbedder::lift_scalar(double normalized) const
{
    return normalized * params_.value(1) + params_.value(2);
}

Matrix ConditionEmbedder::build_lufs(const NormalizedSeries& left, const NormalizedSeries& right) const
{
    Matrix out(2 * m_, width_);
    const std::array<const NormalizedSeries*, 2> channels{&left, &right};
    for (std::size_t c = 0; c < 2; ++c) {
        const auto& values = channels[c]->values;
        require(!values.empty(), ErrorCode::InsufficientData, "LUFS series is empty");
        for (const double v : values) {
            require(v >= 0.0 && v <= 1.0, ErrorCode::Domain, "normalized LUFS values must lie in [0, 1]");
        }
        const auto points = resample_linear(values, static_cast<std::size_t>(m_));
        for (Eigen::Index i = 0; i < m_; ++i) {
            out.row(static_cast<Eigen::Index>(c) * m_ + i) = lift_scalar(points[static_cast<std::size_t>(i)]);
        }
    }
    return out;
}

Matrix timing_features(double seconds)
{
    constexpr Eigen::Index periods = ConditionEmbedder::kTimingPeriods;
    Matrix f(1, 2 * periods);
    for (Eigen::Index k = 0; k < periods; ++k) {
        // Periods 1 s .. 256 s cover fractional starts and hour-scale totals.
        const double phase = 2.0 * std::numbers::pi * seconds / std::ldexp(1.0, static_cast<int>(k));
        f(0, 2 * k) = std::sin(phase);
        f(0, 2 * k + 1) = std::cos(phase);
    }
    return f;
}

Matrix ConditionEmbedder::embed_seconds(double seconds) const
{
    return timing_features(seconds) * params_.value(3) + params_.value(4);
}

Matrix ConditionEmbedder::build_timing(const TimingPair& timing) const
{
    require(timing.start >= 0.0, ErrorCode::Domain, "timing start must be non-negative");
    require(timing.total > 0.0, ErrorCode::Domain, "timing total must be positive");
    require(timing.start <= timing.total, ErrorCode::Domain, "timing start lies beyond the total duration");
    Matrix out(2 * m_, width_);
    out.topRows(m_) = embed_seconds(timing.start).replicate(m_, 1);
    out.bottomRows(m_) = embed_seconds(timing.total).replicate(m_, 1);
    return out;
}

ConditionSet assemble(const MultimodalBlock& multimodal, const Matrix& lufs, const Matrix& timing)
{
    const Eigen::Index m = multimodal.rows.rows() / 4;
    const Eigen::Index width = multimodal.rows.cols();
    require(multimodal.rows.rows() == 4 * m && m >= 1, ErrorCode::Dimension, "multimodal block must have 4M rows");
    require(lufs.rows() == 2 * m && lufs.cols() == width, ErrorCode::Dimension, "LUFS block must be 2M x d");
    require(timing.rows() == 2 * m && timing.cols() == width, ErrorCode::Dimension, "timing block must be 2M x d");
    ConditionSet out{m, width, multimodal.task, Matrix(8 * m, width)};
    out.assembled << multimodal.rows, lufs, timing;
    return out;
}

ConditionSet ConditionEmbedder::drop_modalities(const ConditionSet& cond, const std::array<bool, 3>& keep) const
{
    require(cond.m == m_ && cond.width == width_, ErrorCode::Dimension, "condition shape differs from the embedder");
    ConditionSet out = cond;
    const std::array<bool, 3> present{cond.presence.language, cond.presence.audio, cond.presence.video};
    std::array<bool, 3> now{};
    for (std::size_t i = 0; i < 3; ++i) {
        now[i] = present[i] && keep[i];
        if (!now[i]) {
            out.block(static_cast<ConditionSet::Block>(ConditionSet::Language + static_cast<int>(i))).setZero();
        }
    }
    out.presence = build_task_id(now[0], now[1], now[2]);
    out.block(ConditionSet::Task) = task_embedding(out.presence);
    return out;
}

ConditionSet ConditionEmbedder::apply_modality_dropout(const ConditionSet& cond, Rng& rng, double p) const
{
    std::array<bool, 3> keep{};
    for (auto& k : keep) {
        k = !bernoulli(rng, p);
    }
    return drop_modalities(cond, keep);
}

std::array<std::optional<ModalEmbedding>, 3> mask_for_training(const std::array<ModalEmbedding, 3>& embeddings,
                                                               Rng& rng, double p)
{
    std::array<std::optional<ModalEmbedding>, 3> out;
    for (std::size_t i = 0; i < 3; ++i) {
        if (!bernoulli(rng, p)) {
            out[i] = embeddings[i];
        }
    }
    return out;
}

ConditionSet drop_all_for_cfg(const ConditionSet& cond, Rng& rng, double p)
{
    if (bernoulli(rng, p)) {
        return null_condition(cond.m, cond.width);
    }
    return cond;
}

} // namespace loudgen
