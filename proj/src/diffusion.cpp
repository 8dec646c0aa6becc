#include "loudgen/diffusion.hpp"

#include <cmath>
#include <numbers>

#include "loudgen/error.hpp"

namespace loudgen {

ScheduleValue schedule_at(double t)
{
    require(t >= 0.0 && t <= 1.0, ErrorCode::Domain, "diffusion time must lie in [0, 1], got " + std::to_string(t));
    // Exact endpoints; cos(pi/2) is not exactly zero in floating point.
    if (t == 0.0) {
        return {1.0, 0.0};
    }
    if (t == 1.0) {
        return {0.0, 1.0};
    }
    const double angle = 0.5 * std::numbers::pi * t;
    return {std::cos(angle), std::sin(angle)};
}

Objective parse_objective(const std::string& name)
{
    if (name == "v") {
        return Objective::V;
    }
    if (name == "epsilon" || name == "eps") {
        return Objective::Epsilon;
    }
    fail(ErrorCode::Configuration, "unknown diffusion objective '" + name + "'");
}

std::string_view to_string(Objective objective) noexcept
{
    return objective == Objective::V ? "v" : "epsilon";
}

namespace {

void same_shape(const Matrix& a, const Matrix& b, const char* what)
{
    require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCode::Dimension, std::string(what) + ": shape mismatch");
}

} // namespace

Matrix forward_sample(const Matrix& z0, double t, const Matrix& eps)
{
    same_shape(z0, eps, "forward_sample");
    const auto s = schedule_at(t);
    return s.alpha * z0 + s.sigma * eps;
}

Matrix v_target(const Matrix& z0, const Matrix& eps, double t)
{
    same_shape(z0, eps, "v_target");
    const auto s = schedule_at(t);
    return s.alpha * eps - s.sigma * z0;
}

Matrix training_target(Objective objective, const Matrix& z0, const Matrix& eps, double t)
{
    if (objective == Objective::Epsilon) {
        same_shape(z0, eps, "training_target");
        return eps;
    }
    return v_target(z0, eps, t);
}

CleanAndNoise recover_from_v(const Matrix& z_t, const Matrix& v, double t)
{
    same_shape(z_t, v, "recover_from_v");
    const auto s = schedule_at(t);
    return {s.alpha * z_t - s.sigma * v, s.sigma * z_t + s.alpha * v};
}

CleanAndNoise recover(Objective objective, const Matrix& z_t, const Matrix& prediction, double t)
{
    if (objective == Objective::V) {
        return recover_from_v(z_t, prediction, t);
    }
    same_shape(z_t, prediction, "recover");
    const auto s = schedule_at(t);
    // At alpha ~ 0 the state is pure noise and carries no information on z0.
    if (s.alpha < 1e-6) {
        return {Matrix::Zero(z_t.rows(), z_t.cols()), z_t};
    }
    return {(z_t - s.sigma * prediction) / s.alpha, prediction};
}

Matrix TrainableDenoiser::predict(const Matrix& z_t, double t, const ConditionSet& cond) const
{
    ad::Tape tape(false);
    return forward(tape, z_t, t, cond).value();
}

LossResult training_loss_at(const TrainableDenoiser& model, const Matrix& z0, const ConditionSet& cond, double t,
                            const Matrix& eps, Objective objective)
{
    const Matrix z_t = forward_sample(z0, t, eps);
    const Matrix target = training_target(objective, z0, eps, t);
    ad::Tape tape;
    const ad::Var loss = ad::mse(model.forward(tape, z_t, t, cond), target);
    LossResult out;
    out.loss = loss.value()(0, 0);
    require(std::isfinite(out.loss), ErrorCode::NumericalDivergence, "training loss is not finite");
    tape.backward(loss);
    out.grads = tape.parameter_gradients(model.parameters());
    return out;
}

LossResult training_loss(const TrainableDenoiser& model, std::span<const TrainingExample> batch, Rng& rng,
                         Objective objective, const DropoutPolicy& dropout)
{
    require(!batch.empty(), ErrorCode::InsufficientData, "empty training batch");
    LossResult total{0.0, model.parameters().zeros_like()};
    for (const auto& example : batch) {
        ConditionSet cond = example.cond;
        if (dropout.embedder != nullptr) {
            cond = dropout.embedder->apply_modality_dropout(cond, rng, dropout.modality);
        }
        cond = drop_all_for_cfg(cond, rng, dropout.whole);
        const double t = uniform01(rng);
        const Matrix eps = standard_normal_matrix(rng, example.z0.rows(), example.z0.cols());
        const LossResult one = training_loss_at(model, example.z0, cond, t, eps, objective);
        total.loss += one.loss;
        for (std::size_t i = 0; i < total.grads.size(); ++i) {
            total.grads[i] += one.grads[i];
        }
    }
    const double n = static_cast<double>(batch.size());
    total.loss /= n;
    for (auto& g : total.grads) {
        g /= n;
    }
    return total;
}

Matrix cfg_predict(const DenoiserModel& model, const Matrix& z_t, double t, const ConditionSet& cond,
                   const ConditionSet& null_cond, double omega)
{
    const Matrix conditional = model.predict(z_t, t, cond);
    if (omega == 1.0) {
        return conditional;
    }
    const Matrix unconditional = model.predict(z_t, t, null_cond);
    if (omega == 0.0) {
        return unconditional;
    }
    return unconditional + omega * (conditional - unconditional);
}

Matrix sample_from(const DenoiserModel& model, const ConditionSet& cond, const SamplerConfig& config, Matrix z)
{
    require(config.steps >= 1, ErrorCode::Configuration, "sampler needs at least one step");
    require(config.guidance_scale >= 0.0, ErrorCode::Configuration, "guidance scale must be non-negative");
    const ConditionSet null_cond = null_condition(cond.m, cond.width);
    for (int i = 0; i < config.steps; ++i) {
        const double t = 1.0 - static_cast<double>(i) / config.steps;
        const double next = 1.0 - static_cast<double>(i + 1) / config.steps;
        const Matrix prediction = cfg_predict(model, z, t, cond, null_cond, config.guidance_scale);
        const CleanAndNoise est = recover(config.objective, z, prediction, t);
        const auto s = schedule_at(next);
        z = s.alpha * est.z0 + s.sigma * est.eps;
        require(z.allFinite(), ErrorCode::NumericalDivergence,
                "sampler state became non-finite at step " + std::to_string(i));
    }
    return z;
}

Matrix sample(const DenoiserModel& model, const ConditionSet& cond, const SamplerConfig& config,
              Eigen::Index latent_channels, Eigen::Index frames)
{
    Rng rng(config.seed);
    return sample_from(model, cond, config, standard_normal_matrix(rng, latent_channels, frames));
}

} // namespace loudgen
