#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "loudgen/autodiff.hpp"
#include "loudgen/condition.hpp"
#include "loudgen/rng.hpp"

namespace loudgen {

/// Cosine variance-preserving schedule: alpha = cos(pi t / 2), sigma = sin(pi t / 2).
struct ScheduleValue {
    double alpha = 1.0;
    double sigma = 0.0;
};

ScheduleValue schedule_at(double t);

enum class Objective { V, Epsilon };

Objective parse_objective(const std::string& name);
std::string_view to_string(Objective objective) noexcept;

/// z_t = alpha z0 + sigma eps.
Matrix forward_sample(const Matrix& z0, double t, const Matrix& eps);
/// v = alpha eps - sigma z0.
Matrix v_target(const Matrix& z0, const Matrix& eps, double t);
Matrix training_target(Objective objective, const Matrix& z0, const Matrix& eps, double t);

struct CleanAndNoise {
    Matrix z0;
    Matrix eps;
};

/// z0 = alpha z_t - sigma v and eps = sigma z_t + alpha v.
CleanAndNoise recover_from_v(const Matrix& z_t, const Matrix& v, double t);
/// Converts a model output in the given parameterization to (z0, eps).
CleanAndNoise recover(Objective objective, const Matrix& z_t, const Matrix& prediction, double t);

/// Anything that maps (z_t, t, E) to a prediction shaped like z_t.
class DenoiserModel {
public:
    virtual ~DenoiserModel() = default;
    virtual Matrix predict(const Matrix& z_t, double t, const ConditionSet& cond) const = 0;
};

/// A denoiser whose forward pass can be recorded for gradients.
class TrainableDenoiser : public DenoiserModel {
public:
    virtual ParameterSet& parameters() = 0;
    virtual const ParameterSet& parameters() const = 0;
    virtual ad::Var forward(ad::Tape& tape, const Matrix& z_t, double t, const ConditionSet& cond) const = 0;

    Matrix predict(const Matrix& z_t, double t, const ConditionSet& cond) const override;
};

struct TrainingExample {
    Matrix z0;
    ConditionSet cond;
};

/// Condition dropout applied per example before the model call.
struct DropoutPolicy {
    double modality = 0.3;
    double whole = 0.1;
    /// Needed to rewrite the task block when modalities drop; without it only
    /// whole-set dropout is applied.
    const ConditionEmbedder* embedder = nullptr;

    static DropoutPolicy none() { return DropoutPolicy{0.0, 0.0, nullptr}; }
};

struct LossResult {
    double loss = 0.0;
    std::vector<Matrix> grads;
};

/// Squared error of one example at a fixed (t, eps). Deterministic.
LossResult training_loss_at(const TrainableDenoiser& model, const Matrix& z0, const ConditionSet& cond, double t,
                            const Matrix& eps, Objective objective = Objective::V);

/// Batch mean of the squared error with t ~ U(0, 1), eps ~ N(0, I) and
/// condition dropout drawn from `rng`. Gradients are batch means.
LossResult training_loss(const TrainableDenoiser& model, std::span<const TrainingExample> batch, Rng& rng,
                         Objective objective = Objective::V, const DropoutPolicy& dropout = DropoutPolicy{});

/// g_uncond + omega (g_cond - g_uncond).
Matrix cfg_predict(const DenoiserModel& model, const Matrix& z_t, double t, const ConditionSet& cond,
                   const ConditionSet& null_cond, double omega);

struct SamplerConfig {
    int steps = 100;
    double guidance_scale = 7.0;
    std::uint64_t seed = 0;
    Objective objective = Objective::V;
};

/// Deterministic DDIM-style sampler on the uniform grid t: 1 -> 0. Noise is
/// drawn once for the initial state.
Matrix sample(const DenoiserModel& model, const ConditionSet& cond, const SamplerConfig& config,
              Eigen::Index latent_channels, Eigen::Index frames);

/// Same, starting from a caller-supplied initial state.
Matrix sample_from(const DenoiserModel& model, const ConditionSet& cond, const SamplerConfig& config, Matrix z);

} // namespace loudgen
