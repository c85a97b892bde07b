#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "lazyformer/model.hpp"

namespace lazyformer {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian binary: "LZYF", u32 version, config, u32 tensor count, then
/// per parameter (u32 name length, name, u32 rank, u64 dims..., f64 data...).
std::string save_checkpoint(const Model& model);

/// Throws CheckpointError on bad magic, unknown version, truncation,
/// trailing bytes or a parameter list that does not match the config.
Model load_checkpoint(std::string_view bytes);

void save_checkpoint_file(const Model& model, const std::filesystem::path& path);
Model load_checkpoint_file(const std::filesystem::path& path);

}  // namespace lazyformer
