#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

namespace loudgen {

using Rng = std::mt19937_64;

/// Derives an independent subsystem seed from a root seed and a tag.
/// Stable across runs and platforms (FNV-1a over the tag, then splitmix64).
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) noexcept;

double uniform01(Rng& rng);
double standard_normal(Rng& rng);
bool bernoulli(Rng& rng, double p);

Eigen::MatrixXd standard_normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols);

} // namespace loudgen
