#pragma once

#include <string>
#include <vector>

#include "loudgen/autodiff.hpp"

namespace loudgen {

enum class OptimizerKind { Adam, Momentum };

OptimizerKind parse_optimizer(const std::string& name);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double momentum = 0.9;
    /// Global gradient-norm clip; <= 0 disables.
    double clip_norm = 0.0;
    int warmup_steps = 0;
};

/// Adam or heavy-ball momentum over a ParameterSet. A zero learning rate
/// leaves parameters bit-identical.
class Optimizer {
public:
    Optimizer(const ParameterSet& params, OptimizerConfig config);

    void step(ParameterSet& params, std::vector<Matrix> grads);
    long steps_taken() const noexcept { return steps_; }
    const OptimizerConfig& config() const noexcept { return config_; }

private:
    OptimizerConfig config_;
    std::vector<Matrix> first_;
    std::vector<Matrix> second_;
    long steps_ = 0;
};

double global_norm(const std::vector<Matrix>& grads);

} // namespace loudgen
