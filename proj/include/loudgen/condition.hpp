#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "loudgen/autodiff.hpp"
#include "loudgen/lufs_meter.hpp"
#include "loudgen/rng.hpp"

namespace loudgen {

enum class Modality { Language, Audio, Video };

std::string_view to_string(Modality modality) noexcept;

/// One prompt embedding: M rows of width d_tau.
struct ModalEmbedding {
    Modality modality = Modality::Language;
    Matrix matrix;
};

struct ModalPayload {
    Modality modality = Modality::Language;
    std::string bytes;
};

/// Pluggable prompt encoder. Implementations report failures as
/// ErrorCode::Encoder with the modality in the message.
class ModalEncoder {
public:
    virtual ~ModalEncoder() = default;
    virtual ModalEmbedding encode(const ModalPayload& payload) const = 0;
    virtual Eigen::Index rows() const = 0;
    virtual Eigen::Index width() const = 0;
};

/// Deterministic stand-in encoder: the payload bytes seed a generator that
/// fills an M x d matrix with unit-norm rows.
class SyntheticEncoder final : public ModalEncoder {
public:
    SyntheticEncoder(Eigen::Index rows, Eigen::Index width, std::uint64_t seed = 0);

    ModalEmbedding encode(const ModalPayload& payload) const override;
    Eigen::Index rows() const override { return rows_; }
    Eigen::Index width() const override { return width_; }

private:
    Eigen::Index rows_;
    Eigen::Index width_;
    std::uint64_t seed_;
};

ModalEmbedding encode_prompt(const ModalEncoder& encoder, const ModalPayload& payload);

/// Presence of (language, audio, video) prompts; id = 4 lang + 2 audio + video.
struct TaskId {
    int id = 0;
    bool language = false;
    bool audio = false;
    bool video = false;

    bool operator==(const TaskId&) const = default;
};

TaskId build_task_id(bool language, bool audio, bool video) noexcept;
TaskId task_from_id(int id);

struct TimingPair {
    double start = 0.0;
    double total = 1.0;
};

/// Cross-attention context E = [E_M; E_L; E_T], 8M rows of width d.
/// Block order: task, language, audio, video, lufs left, lufs right,
/// timing start, timing total; each block has M rows.
struct ConditionSet {
    Eigen::Index m = 0;
    Eigen::Index width = 0;
    TaskId presence;
    Matrix assembled;

    enum Block { Task = 0, Language, Audio, Video, LufsLeft, LufsRight, TimingStart, TimingTotal };
    static constexpr int kBlocks = 8;

    auto block(Block b) const { return assembled.middleRows(static_cast<Eigen::Index>(b) * m, m); }
    auto block(Block b) { return assembled.middleRows(static_cast<Eigen::Index>(b) * m, m); }

    bool operator==(const ConditionSet& other) const
    {
        return m == other.m && width == other.width && presence == other.presence && assembled == other.assembled;
    }
};

/// The canonical unconditional context: all zeros, task id 0.
ConditionSet null_condition(Eigen::Index m, Eigen::Index width);

struct MultimodalBlock {
    Matrix rows; // 4M x d
    TaskId task;
};

/// Seeded tables that embed task ids, LUFS scalars and timing seconds.
class ConditionEmbedder {
public:
    static constexpr Eigen::Index kTimingPeriods = 9;

    ConditionEmbedder(Eigen::Index m, Eigen::Index width, std::uint64_t seed);
    /// Restores an embedder from stored tables (names as produced by parameters()).
    ConditionEmbedder(Eigen::Index m, Eigen::Index width, ParameterSet tables);

    Eigen::Index m() const noexcept { return m_; }
    Eigen::Index width() const noexcept { return width_; }
    const ParameterSet& parameters() const noexcept { return params_; }

    Matrix task_embedding(const TaskId& task) const;

    /// Rows [task; lang-or-zeros; audio-or-zeros; video-or-zeros].
    MultimodalBlock build_multimodal(const std::optional<ModalEmbedding>& language,
                                     const std::optional<ModalEmbedding>& audio,
                                     const std::optional<ModalEmbedding>& video) const;

    /// Each channel resampled to M points, then lifted row-wise by a shared
    /// affine map; left block first.
    Matrix build_lufs(const NormalizedSeries& left, const NormalizedSeries& right) const;
    Matrix lift_scalar(double normalized) const;

    /// Sinusoidal features of seconds through a linear map, broadcast to M rows;
    /// start block first.
    Matrix build_timing(const TimingPair& timing) const;
    Matrix embed_seconds(double seconds) const;

    /// Zeros the dropped modality slots and rewrites the task block to match.
    ConditionSet drop_modalities(const ConditionSet& cond, const std::array<bool, 3>& keep) const;
    /// Each present modality is dropped independently with probability p.
    ConditionSet apply_modality_dropout(const ConditionSet& cond, Rng& rng, double p = 0.3) const;

private:
    void check_tables() const;

    Eigen::Index m_;
    Eigen::Index width_;
    ParameterSet params_;
};

/// Endpoint-preserving linear resampling to exactly `points` values.
std::vector<double> resample_linear(std::span<const double> values, std::size_t points);

Matrix timing_features(double seconds);

ConditionSet assemble(const MultimodalBlock& multimodal, const Matrix& lufs, const Matrix& timing);

/// Each embedding independently survives with probability 1 - p.
std::array<std::optional<ModalEmbedding>, 3> mask_for_training(const std::array<ModalEmbedding, 3>& embeddings,
                                                               Rng& rng, double p = 0.3);

/// With probability p returns the null condition, otherwise `cond` unchanged.
ConditionSet drop_all_for_cfg(const ConditionSet& cond, Rng& rng, double p = 0.1);

} // namespace loudgen
