#pragma once

#include "uthp/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace uthp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary container: magic "UTHPCKPT", u32 version, u64 length + JSON header
/// (model config, num_types), u32 tensor count, then per tensor u32 name length,
/// name, u64 rows, u64 cols and row-major little-endian doubles.
std::string serialize_checkpoint(const UthpModel& model);
UthpModel deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const UthpModel& model, const std::filesystem::path& path);
UthpModel load_checkpoint(const std::filesystem::path& path);

}  // namespace uthp
