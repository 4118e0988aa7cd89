#include "nefnet/ecg_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "nefnet/errors.hpp"

namespace nef {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_phi(double phi) {
  double wrapped = std::fmod(phi + kPi, kTwoPi);
  if (wrapped <= 0.0) wrapped += kTwoPi;
  return wrapped - kPi;  // (-pi, pi]
}

}  // namespace

Viewpoint canonicalize(Viewpoint v) {
  double theta = std::fmod(v.theta, kTwoPi);
  if (theta < 0.0) theta += kTwoPi;
  double phi = v.phi;
  if (theta > kPi) {
    theta = kTwoPi - theta;
    phi += kPi;
  }
  return {theta, wrap_phi(phi)};
}

Vec3 unit_vector(Viewpoint v) {
  const double s = std::sin(v.theta);
  return {s * std::cos(v.phi), s * std::sin(v.phi), std::cos(v.theta)};
}

double angular_distance(Viewpoint a, Viewpoint b) {
  const Vec3 u = unit_vector(a);
  const Vec3 w = unit_vector(b);
  // atan2 form stays accurate for nearly parallel directions, unlike acos.
  const double dot = u[0] * w[0] + u[1] * w[1] + u[2] * w[2];
  const double cx = u[1] * w[2] - u[2] * w[1];
  const double cy = u[2] * w[0] - u[0] * w[2];
  const double cz = u[0] * w[1] - u[1] * w[0];
  return std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), dot);
}

std::optional<Viewpoint> lead_viewpoint(std::string_view lead_name) {
  for (const auto& lead : kLeadAngleTable) {
    if (lead.name == lead_name) return lead.viewpoint;
  }
  return std::nullopt;
}

const View* MultiViewCycle::find(std::string_view view_name) const {
  for (const auto& view : views) {
    if (view.name == view_name) return &view;
  }
  return nullptr;
}

void validate_demarcations(const Demarcations& d, int length) {
  if (d.front() != 0 || d.back() != length) {
    throw Error(ErrorKind::kLoad, "demarcations must start at 0 and end at the cycle length " +
                                      std::to_string(length));
  }
  for (int i = 1; i < kNumDemarcations; ++i) {
    if (d[i] <= d[i - 1]) {
      throw Error(ErrorKind::kLoad, "demarcations must be strictly increasing (D" +
                                        std::to_string(i - 1) + "=" + std::to_string(d[i - 1]) +
                                        ", D" + std::to_string(i) + "=" + std::to_string(d[i]) +
                                        ")");
    }
  }
}

void validate(const MultiViewCycle& cycle) {
  if (cycle.views.empty()) {
    throw Error(ErrorKind::kShapeMismatch, "multi-view cycle has no views");
  }
  const auto& first = cycle.views.front().cycle;
  validate_demarcations(first.demarcations, first.length());
  for (const auto& view : cycle.views) {
    if (view.cycle.length() != first.length() || view.cycle.demarcations != first.demarcations) {
      throw Error(ErrorKind::kShapeMismatch,
                  "view '" + view.name + "' disagrees with the cycle's length or demarcations");
    }
  }
}

DeflectionLengths deflection_lengths(const Demarcations& d) {
  DeflectionLengths lengths{};
  for (int i = 0; i < kNumDeflections; ++i) lengths[i] = d[i + 1] - d[i];
  return lengths;
}

Demarcations demarcations_from_lengths(const DeflectionLengths& lengths) {
  Demarcations d{};
  for (int i = 0; i < kNumDeflections; ++i) d[i + 1] = d[i] + lengths[i];
  return d;
}

std::vector<double> resample_to_length(std::span<const double> signal, int length) {
  const auto n = static_cast<std::int64_t>(signal.size());
  if (n < 2 || length < 2) {
    throw Error(ErrorKind::kDegenerateSignal, "resampling needs at least 2 input and output samples");
  }
  if (n == length) return {signal.begin(), signal.end()};

  std::vector<double> out(static_cast<std::size_t>(length));
  const double step = static_cast<double>(n - 1) / static_cast<double>(length - 1);
  for (int i = 0; i < length - 1; ++i) {
    const double pos = i * step;
    const auto i0 = std::min<std::int64_t>(static_cast<std::int64_t>(pos), n - 2);
    const double w = pos - static_cast<double>(i0);
    out[i] = (1.0 - w) * signal[i0] + w * signal[i0 + 1];
  }
  out.back() = signal.back();
  return out;
}

std::vector<double> resample(std::span<const double> signal, double from_rate, double to_rate) {
  if (signal.size() < 2) {
    throw Error(ErrorKind::kDegenerateSignal, "cannot resample a signal shorter than 2 samples");
  }
  if (!(from_rate > 0.0) || !(to_rate > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "sampling rates must be positive");
  }
  if (from_rate == to_rate) return {signal.begin(), signal.end()};
  const double intervals = std::round(static_cast<double>(signal.size() - 1) * to_rate / from_rate);
  if (intervals < 1.0) {
    throw Error(ErrorKind::kDegenerateSignal, "resampled signal would have fewer than 2 samples");
  }
  return resample_to_length(signal, static_cast<int>(intervals) + 1);
}

std::vector<double> normalize(std::span<const double> signal) {
  if (signal.empty()) return {};
  const auto [lo, hi] = std::minmax_element(signal.begin(), signal.end());
  const double min = *lo;
  const double range = *hi - min;
  std::vector<double> out(signal.size());
  if (range == 0.0) {
    std::fill(out.begin(), out.end(), 0.5);
    return out;
  }
  std::transform(signal.begin(), signal.end(), out.begin(),
                 [&](double x) { return (x - min) / range; });
  return out;
}

std::vector<double> remove_baseline(std::span<const double> signal, double sampling_rate,
                                    double window_seconds) {
  const auto n = static_cast<std::ptrdiff_t>(signal.size());
  const auto half = std::max<std::ptrdiff_t>(
      0, static_cast<std::ptrdiff_t>(std::lround(window_seconds * sampling_rate)) / 2);
  std::vector<double> prefix(signal.size() + 1, 0.0);
  std::partial_sum(signal.begin(), signal.end(), prefix.begin() + 1);

  std::vector<double> out(signal.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto lo = std::max<std::ptrdiff_t>(0, i - half);
    const auto hi = std::min<std::ptrdiff_t>(n, i + half + 1);
    out[i] = signal[i] - (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }
  return out;
}

Demarcations rescale_demarcations(const Demarcations& d, int from_length, int to_length) {
  validate_demarcations(d, from_length);
  if (to_length < kNumDeflections) {
    throw Error(ErrorKind::kDegenerateSignal,
                "a cycle needs at least one sample per deflection after rescaling");
  }
  Demarcations out{};
  out.back() = to_length;
  for (int i = 1; i < kNumDemarcations - 1; ++i) {
    // round-half-up of d * to / from in exact integer arithmetic
    const std::int64_t num = 2 * static_cast<std::int64_t>(d[i]) * to_length + from_length;
    out[i] = static_cast<int>(num / (2 * static_cast<std::int64_t>(from_length)));
  }
  for (int i = 1; i < kNumDemarcations - 1; ++i) {
    if (out[i] <= out[i - 1]) out[i] = out[i - 1] + 1;
  }
  for (int i = kNumDemarcations - 2; i >= 1; --i) {
    if (out[i] >= out[i + 1]) out[i] = out[i + 1] - 1;
  }
  return out;
}

CardiacCycle preprocess_cycle(std::span<const double> raw, double sampling_rate,
                              const Demarcations& raw_demarcations,
                              const PreprocessOptions& options) {
  const int n = static_cast<int>(raw.size());
  if (n < 2) throw Error(ErrorKind::kDegenerateSignal, "cardiac cycle shorter than 2 samples");
  validate_demarcations(raw_demarcations, n);

  std::vector<double> signal(raw.begin(), raw.end());
  if (options.remove_baseline) {
    signal = remove_baseline(signal, sampling_rate, options.baseline_window_seconds);
  }
  signal = resample(signal, sampling_rate, options.target_rate);
  signal = resample_to_length(signal, options.cycle_length);

  CardiacCycle cycle;
  cycle.samples = normalize(signal);
  cycle.sampling_rate = options.target_rate;
  cycle.demarcations = rescale_demarcations(raw_demarcations, n, options.cycle_length);
  cycle.original_length = n;
  return cycle;
}

}  // namespace nef
