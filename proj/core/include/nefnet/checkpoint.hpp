#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nefnet/nefnet.hpp"

namespace nef {

/// Binary container:
///
///   8 bytes   magic "NEFNETCK"
///   u64 LE    header length H
///   H bytes   compact JSON {"format_version", "version", "seed", "config",
///                           "blocks": [{"name", "shape"}]}
///   f32 LE    parameter blocks in header order
///
/// Values are stored as f32, so loading rounds parameters to float; a loaded
/// checkpoint saves back to identical bytes.
struct Checkpoint {
  ModelConfig config;
  Parameters params;
  std::string version;
};

inline constexpr int kCheckpointFormatVersion = 1;

/// Content hash of the f32-rounded parameter bytes, 16 hex digits.
std::string model_version(const Parameters& params);

std::vector<std::uint8_t> serialize_checkpoint(const ModelConfig& config, const Parameters& params);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const Parameters& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

NefNet load_model(const std::filesystem::path& path);

}  // namespace nef
