#pragma once

#include <array>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nef {

inline constexpr int kNumDeflections = 6;
inline constexpr int kNumDemarcations = kNumDeflections + 1;
inline constexpr double kTargetRateHz = 500.0;
inline constexpr int kCanonicalCycleLength = 512;

using Demarcations = std::array<int, kNumDemarcations>;
using DeflectionLengths = std::array<int, kNumDeflections>;
using Vec3 = std::array<double, 3>;

/// Direction of a lead in the spherical frame centred at the central
/// terminal: x sagittal, y inverse frontal, z vertical.
struct Viewpoint {
  double theta = 0.0;  // polar, [0, pi]
  double phi = 0.0;    // azimuthal, (-pi, pi]

  friend bool operator==(const Viewpoint&, const Viewpoint&) = default;
};

/// Maps any (theta, phi) onto the canonical ranges without changing the
/// direction it denotes.
Viewpoint canonicalize(Viewpoint v);

Vec3 unit_vector(Viewpoint v);

/// Angle in radians between two viewpoint directions.
double angular_distance(Viewpoint a, Viewpoint b);

struct LeadAngle {
  std::string_view name;
  Viewpoint viewpoint;
};

/// Averaged lead directions of the standard 12-lead system.
inline constexpr std::array<LeadAngle, 12> kLeadAngleTable = {{
    {"I", {std::numbers::pi / 2, std::numbers::pi / 2}},
    {"II", {5 * std::numbers::pi / 6, std::numbers::pi / 2}},
    {"III", {5 * std::numbers::pi / 6, -std::numbers::pi / 2}},
    {"aVR", {std::numbers::pi / 3, -std::numbers::pi / 2}},
    {"aVL", {std::numbers::pi / 3, std::numbers::pi / 2}},
    {"aVF", {std::numbers::pi, std::numbers::pi / 2}},
    {"V1", {std::numbers::pi / 2, -std::numbers::pi / 18}},
    {"V2", {std::numbers::pi / 2, std::numbers::pi / 18}},
    {"V3", {19 * std::numbers::pi / 36, std::numbers::pi / 12}},
    {"V4", {11 * std::numbers::pi / 20, std::numbers::pi / 6}},
    {"V5", {8 * std::numbers::pi / 15, std::numbers::pi / 3}},
    {"V6", {8 * std::numbers::pi / 15, std::numbers::pi / 2}},
}};

std::optional<Viewpoint> lead_viewpoint(std::string_view lead_name);

/// One heartbeat of one view.
struct CardiacCycle {
  std::vector<double> samples;
  double sampling_rate = kTargetRateHz;
  Demarcations demarcations{};
  int original_length = 0;

  int length() const { return static_cast<int>(samples.size()); }
};

struct View {
  std::string name;
  Viewpoint viewpoint;
  CardiacCycle cycle;
};

/// One heartbeat seen from L >= 1 viewpoints; timing is shared by all views.
struct MultiViewCycle {
  std::string record_id;
  std::optional<std::string> label;
  std::vector<View> views;

  const View* find(std::string_view view_name) const;
  const Demarcations& demarcations() const { return views.front().cycle.demarcations; }
  int length() const { return views.front().cycle.length(); }
};

/// Throws kLoad unless D_0 = 0, D_6 = length and D is strictly increasing.
void validate_demarcations(const Demarcations& d, int length);

/// Throws kShapeMismatch when views disagree on length or timing.
void validate(const MultiViewCycle& cycle);

DeflectionLengths deflection_lengths(const Demarcations& d);
Demarcations demarcations_from_lengths(const DeflectionLengths& lengths);

/// Endpoint-preserving linear resampling. A signal spanning (n - 1) sample
/// intervals at from_rate spans round((n - 1) * to_rate / from_rate)
/// intervals at to_rate.
std::vector<double> resample(std::span<const double> signal, double from_rate, double to_rate);

/// Endpoint-preserving linear resampling onto exactly `length` samples.
std::vector<double> resample_to_length(std::span<const double> signal, int length);

/// Min-max scaling to [0, 1]; constant signals map to 0.5.
std::vector<double> normalize(std::span<const double> signal);

/// Subtracts a centred moving average (window in seconds) to remove
/// baseline drift.
std::vector<double> remove_baseline(std::span<const double> signal, double sampling_rate,
                                    double window_seconds = 0.2);

/// Rescales demarcations from a cycle of `from_length` samples to one of
/// `to_length` samples: round-half-up, then collisions are shifted forward
/// (and backward against the end) so the result stays strictly increasing.
Demarcations rescale_demarcations(const Demarcations& d, int from_length, int to_length);

struct PreprocessOptions {
  double target_rate = kTargetRateHz;
  int cycle_length = kCanonicalCycleLength;
  bool remove_baseline = false;
  double baseline_window_seconds = 0.2;
};

/// Full per-cycle pipeline: optional drift removal, resampling to the target
/// rate, resampling to the canonical length, normalization, and demarcation
/// rescaling.
CardiacCycle preprocess_cycle(std::span<const double> raw, double sampling_rate,
                              const Demarcations& raw_demarcations,
                              const PreprocessOptions& options = {});

}  // namespace nef
