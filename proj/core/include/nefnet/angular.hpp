#pragma once

#include <array>
#include <cstdint>
#include <numbers>
#include <random>

#include "nefnet/ecg_data.hpp"

namespace nef {

inline constexpr int kAngularCodeSize = 12;

/// [pi(t), pi(p), pi(t + p), pi(t - p)] with pi(r) = [r, sin r, cos r].
using AngularCode = std::array<double, kAngularCodeSize>;

struct PerturbationConfig {
  bool enabled = false;
  double std = std::numbers::pi / 50.0;  // standard deviation, radians
  std::uint64_t seed = 0;
};

/// Gaussian angle jitter stream. Each worker owns its own instance.
class Perturbation {
 public:
  Perturbation() = default;
  explicit Perturbation(const PerturbationConfig& config);

  bool enabled() const { return config_.enabled; }
  const PerturbationConfig& config() const { return config_; }

  /// Independent offsets for theta and phi; zero when disabled.
  std::array<double, 2> draw();

 private:
  PerturbationConfig config_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
};

AngularCode angular_encode(Viewpoint v);
AngularCode angular_encode(Viewpoint v, Perturbation& perturbation);

}  // namespace nef
