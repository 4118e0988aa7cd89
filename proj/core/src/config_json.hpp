#pragma once

#include <cstdint>

#include <json.hpp>

#include "nefnet/nefnet.hpp"

namespace nef::detail {

// Seed is stored next to the config by callers, not inside it.
inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"signal_length", c.signal_length},
          {"encoder_channels", c.encoder_channels},
          {"encoder_kernels", c.encoder_kernels},
          {"basic_channels", c.basic_channels},
          {"deflection_channels", c.deflection_channels},
          {"bins", c.bins},
          {"angle_hidden", c.angle_hidden},
          {"decoder_channels", c.decoder_channels},
          {"use_basic_branch", c.use_basic_branch}};
}

inline ModelConfig config_from_json(const nlohmann::json& j, std::uint64_t seed) {
  ModelConfig c;
  c.signal_length = j.at("signal_length").get<int>();
  c.encoder_channels = j.at("encoder_channels").get<std::vector<int>>();
  c.encoder_kernels = j.at("encoder_kernels").get<std::vector<int>>();
  c.basic_channels = j.at("basic_channels").get<int>();
  c.deflection_channels = j.at("deflection_channels").get<int>();
  c.bins = j.at("bins").get<int>();
  c.angle_hidden = j.at("angle_hidden").get<int>();
  c.decoder_channels = j.at("decoder_channels").get<std::vector<int>>();
  c.use_basic_branch = j.at("use_basic_branch").get<bool>();
  c.seed = seed;
  return c;
}

}  // namespace nef::detail
