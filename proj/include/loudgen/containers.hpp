#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "loudgen/autodiff.hpp"
#include "loudgen/condition.hpp"
#include "loudgen/latent_codec.hpp"

// Little-endian binary files: 4-byte magic, u32 version, a type-specific
// header, then row-major float32 payloads.
namespace loudgen {

inline constexpr std::uint32_t kContainerVersion = 1;

/// "LGMX": rows, cols. Used for feature and label sets.
void write_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix(const std::filesystem::path& path);

/// "LGCN": M, d, task id, presence bits.
void write_condition(const std::filesystem::path& path, const ConditionSet& cond);
ConditionSet read_condition(const std::filesystem::path& path);

/// "LGLT": layout, C, frames, r, source rate, unpadded length.
void write_latent(const std::filesystem::path& path, const Latent& latent);
Latent read_latent(const std::filesystem::path& path);

/// "LGCK": string metadata plus named tensors.
struct Checkpoint {
    std::map<std::string, std::string> metadata;
    ParameterSet tensors;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Appends every tensor of `from` to `into` with a name prefix.
void merge_parameters(ParameterSet& into, const ParameterSet& from, const std::string& prefix);
/// The tensors whose names start with `prefix`, prefix removed.
ParameterSet extract_parameters(const ParameterSet& from, const std::string& prefix);

} // namespace loudgen
