#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nefnet/ecg_data.hpp"

namespace nef {

/// A heart vector d(t) sampled over one cycle, with the cycle's deflection
/// boundaries. Lead signals are projections <d(t), unit_vector(view)>.
struct DipoleTrajectory {
  std::vector<Vec3> points;
  Demarcations demarcations{};
};

/// Samples a smooth trajectory: per deflection type one family of Gaussian
/// bumps with a preferred direction, randomized amplitude, width, and timing
/// within the deflection. Demarcations are the same for every cycle.
DipoleTrajectory draw_dipole_trajectory(std::mt19937_64& rng,
                                        int length = kCanonicalCycleLength);

/// Noise-free projection of the trajectory onto a viewpoint, before any
/// normalization.
std::vector<double> project(const DipoleTrajectory& trajectory, Viewpoint view);

struct NamedViewpoint {
  std::string name;
  Viewpoint viewpoint;
};

/// Standard lead name when the viewpoint matches a table entry, otherwise
/// "theta=..,phi=..".
std::string default_view_name(Viewpoint v);
std::vector<NamedViewpoint> name_viewpoints(std::span<const Viewpoint> views);
std::vector<NamedViewpoint> standard_leads(std::span<const std::string> names);

struct DipoleDatasetOptions {
  int n_cycles = 1;
  std::vector<NamedViewpoint> views;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  int length = kCanonicalCycleLength;
  std::optional<std::string> label;
  std::string record_id = "dipole";
};

/// Each cycle: one trajectory, then per view projection + N(0, noise_std)
/// followed by min-max normalization. Deterministic given the seed.
std::vector<MultiViewCycle> generate_dipole_dataset(const DipoleDatasetOptions& options);

std::vector<MultiViewCycle> generate_dipole_dataset(int n_cycles, std::span<const Viewpoint> views,
                                                    double noise_std, std::uint64_t seed);

}  // namespace nef
