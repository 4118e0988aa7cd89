#include "nefnet/dipole.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "nefnet/errors.hpp"

namespace nef {

namespace {

struct Bump {
  double position;   // fraction of the deflection span
  double width;      // std as a fraction of the deflection span
  double amplitude;
  Vec3 direction;
};

// Share of the cycle taken by P, PR, QRS, ST, T, TP.
constexpr std::array<double, kNumDeflections> kNominalShare = {0.11, 0.06, 0.10, 0.12, 0.20, 0.41};

// Bump families per deflection type. Isoelectric segments carry a faint
// drift so every type has a family.
const std::array<std::vector<Bump>, kNumDeflections> kFamilies = {{
    {{0.5, 0.22, 0.18, {0.25, 0.55, -0.80}}},
    {{0.5, 0.40, 0.03, {0.10, 0.50, -0.60}}},
    {{0.22, 0.09, 0.25, {-0.45, -0.60, 0.25}},
     {0.48, 0.10, 1.60, {0.30, 0.70, -0.65}},
     {0.76, 0.09, 0.70, {-0.80, -0.35, 0.25}}},
    {{0.5, 0.40, 0.04, {0.20, 0.60, -0.50}}},
    {{0.52, 0.20, 0.45, {0.35, 0.65, -0.55}}},
    {{0.5, 0.40, 0.02, {0.20, 0.40, -0.40}}},
}};

Vec3 normalized(Vec3 v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  return {v[0] / n, v[1] / n, v[2] / n};
}

Demarcations nominal_demarcations(int length) {
  Demarcations d{};
  double cumulative = 0.0;
  for (int i = 1; i < kNumDeflections; ++i) {
    cumulative += kNominalShare[i - 1];
    d[i] = static_cast<int>(std::lround(cumulative * length));
  }
  d.back() = length;
  for (int i = 1; i < kNumDemarcations - 1; ++i) d[i] = std::max(d[i], d[i - 1] + 1);
  for (int i = kNumDemarcations - 2; i >= 1; --i) d[i] = std::min(d[i], d[i + 1] - 1);
  return d;
}

}  // namespace

DipoleTrajectory draw_dipole_trajectory(std::mt19937_64& rng, int length) {
  if (length < kNumDeflections) {
    throw Error(ErrorKind::kInvalidArgument, "dipole cycle length must cover 6 deflections");
  }
  DipoleTrajectory trajectory;
  trajectory.demarcations = nominal_demarcations(length);
  trajectory.points.assign(static_cast<std::size_t>(length), Vec3{0.0, 0.0, 0.0});

  std::uniform_real_distribution<double> amplitude_scale(0.8, 1.2);
  std::uniform_real_distribution<double> width_scale(0.85, 1.15);
  std::uniform_real_distribution<double> shift(-0.04, 0.04);
  std::normal_distribution<double> tilt(0.0, 0.12);

  for (int type = 0; type < kNumDeflections; ++type) {
    const double start = trajectory.demarcations[type];
    const double span = trajectory.demarcations[type + 1] - start;
    for (const Bump& bump : kFamilies[type]) {
      const double centre = start + (bump.position + shift(rng)) * span;
      const double sigma = std::max(0.75, bump.width * width_scale(rng) * span);
      const double amplitude = bump.amplitude * amplitude_scale(rng);
      const Vec3 base = normalized(bump.direction);
      const Vec3 direction = normalized({base[0] + tilt(rng), base[1] + tilt(rng), base[2] + tilt(rng)});
      for (int t = 0; t < length; ++t) {
        const double z = (t - centre) / sigma;
        const double g = amplitude * std::exp(-0.5 * z * z);
        for (int k = 0; k < 3; ++k) trajectory.points[t][k] += g * direction[k];
      }
    }
  }
  return trajectory;
}

std::vector<double> project(const DipoleTrajectory& trajectory, Viewpoint view) {
  const Vec3 u = unit_vector(view);
  std::vector<double> out(trajectory.points.size());
  for (std::size_t t = 0; t < out.size(); ++t) {
    const Vec3& d = trajectory.points[t];
    out[t] = d[0] * u[0] + d[1] * u[1] + d[2] * u[2];
  }
  return out;
}

std::string default_view_name(Viewpoint v) {
  for (const auto& lead : kLeadAngleTable) {
    if (lead.viewpoint == v) return std::string(lead.name);
  }
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "theta=%.4f,phi=%.4f", v.theta, v.phi);
  return buffer;
}

std::vector<NamedViewpoint> name_viewpoints(std::span<const Viewpoint> views) {
  std::vector<NamedViewpoint> named;
  for (const auto& v : views) named.push_back({default_view_name(v), v});
  return named;
}

std::vector<NamedViewpoint> standard_leads(std::span<const std::string> names) {
  std::vector<NamedViewpoint> named;
  for (const auto& name : names) {
    const auto v = lead_viewpoint(name);
    if (!v) throw Error(ErrorKind::kInvalidArgument, "unknown lead '" + name + "'");
    named.push_back({name, *v});
  }
  return named;
}

std::vector<MultiViewCycle> generate_dipole_dataset(const DipoleDatasetOptions& options) {
  if (options.n_cycles < 1) throw Error(ErrorKind::kInvalidArgument, "n_cycles must be >= 1");
  if (options.views.empty()) throw Error(ErrorKind::kInvalidArgument, "at least one view is required");
  if (options.noise_std < 0.0) throw Error(ErrorKind::kInvalidArgument, "noise_std must be >= 0");

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> noise(0.0, options.noise_std);
  std::vector<MultiViewCycle> cycles;
  cycles.reserve(static_cast<std::size_t>(options.n_cycles));
  for (int c = 0; c < options.n_cycles; ++c) {
    const DipoleTrajectory trajectory = draw_dipole_trajectory(rng, options.length);
    MultiViewCycle cycle;
    cycle.record_id = options.record_id;
    cycle.label = options.label;
    for (const auto& view : options.views) {
      std::vector<double> signal = project(trajectory, view.viewpoint);
      if (options.noise_std > 0.0) {
        for (double& x : signal) x += noise(rng);
      }
      CardiacCycle cc;
      cc.samples = normalize(signal);
      cc.sampling_rate = kTargetRateHz;
      cc.demarcations = trajectory.demarcations;
      cc.original_length = options.length;
      cycle.views.push_back({view.name, view.viewpoint, std::move(cc)});
    }
    cycles.push_back(std::move(cycle));
  }
  return cycles;
}

std::vector<MultiViewCycle> generate_dipole_dataset(int n_cycles, std::span<const Viewpoint> views,
                                                    double noise_std, std::uint64_t seed) {
  DipoleDatasetOptions options;
  options.n_cycles = n_cycles;
  options.views = name_viewpoints(views);
  options.noise_std = noise_std;
  options.seed = seed;
  return generate_dipole_dataset(options);
}

}  // namespace nef
