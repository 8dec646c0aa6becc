#include "loudgen/optim.hpp"

#include <cmath>

#include "loudgen/error.hpp"

namespace loudgen {

OptimizerKind parse_optimizer(const std::string& name)
{
    if (name == "adam") {
        return OptimizerKind::Adam;
    }
    if (name == "momentum" || name == "sgd") {
        return OptimizerKind::Momentum;
    }
    fail(ErrorCode::Configuration, "unknown optimizer '" + name + "'");
}

double global_norm(const std::vector<Matrix>& grads)
{
    double s = 0.0;
    for (const auto& g : grads) {
        s += g.squaredNorm();
    }
    return std::sqrt(s);
}

Optimizer::Optimizer(const ParameterSet& params, OptimizerConfig config)
    : config_(config), first_(params.zeros_like()), second_(params.zeros_like())
{
    require(config_.learning_rate >= 0.0, ErrorCode::Configuration, "learning rate must be non-negative");
}

void Optimizer::step(ParameterSet& params, std::vector<Matrix> grads)
{
    require(grads.size() == params.size(), ErrorCode::Dimension, "gradient count differs from parameter count");
    ++steps_;
    if (config_.clip_norm > 0.0) {
        const double norm = global_norm(grads);
        if (norm > config_.clip_norm) {
            for (auto& g : grads) {
                g *= config_.clip_norm / norm;
            }
        }
    }
    double lr = config_.learning_rate;
    if (config_.warmup_steps > 0 && steps_ <= config_.warmup_steps) {
        lr *= static_cast<double>(steps_) / static_cast<double>(config_.warmup_steps);
    }
    if (lr == 0.0) {
        return;
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& p = params.value(i);
        const Matrix& g = grads[i];
        if (config_.kind == OptimizerKind::Momentum) {
            first_[i] = config_.momentum * first_[i] + g;
            p -= lr * first_[i];
            continue;
        }
        first_[i] = config_.beta1 * first_[i] + (1.0 - config_.beta1) * g;
        second_[i] = config_.beta2 * second_[i] + (1.0 - config_.beta2) * g.cwiseAbs2();
        const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
        p.array() -= lr * (first_[i].array() / c1) / ((second_[i].array() / c2).sqrt() + config_.epsilon);
    }
}

} // namespace loudgen
