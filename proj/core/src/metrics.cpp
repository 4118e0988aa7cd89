#include "nefnet/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "nefnet/errors.hpp"

namespace nef {

namespace {

void require_same_length(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::kShapeMismatch, "signal lengths differ: " + std::to_string(a.size()) +
                                               " vs " + std::to_string(b.size()));
  }
}

std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> w{};
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - (kSsimWindow - 1) / 2.0;
    w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

}  // namespace

double psnr(std::span<const double> reference, std::span<const double> prediction) {
  require_same_length(reference, prediction);
  if (reference.empty()) throw Error(ErrorKind::kInvalidArgument, "psnr needs at least one sample");
  double sse = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = reference[i] - prediction[i];
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(reference.size());
  if (mse == 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, -10.0 * std::log10(mse));
}

double ssim_1d(std::span<const double> reference, std::span<const double> prediction) {
  require_same_length(reference, prediction);
  if (reference.size() < static_cast<std::size_t>(kSsimWindow)) {
    throw Error(ErrorKind::kInvalidArgument,
                "ssim needs at least " + std::to_string(kSsimWindow) + " samples");
  }
  static const auto w = gaussian_window();
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;

  const std::size_t windows = reference.size() - kSsimWindow + 1;
  double total = 0.0;
  for (std::size_t s = 0; s < windows; ++s) {
    double mx = 0.0, my = 0.0;
    for (int k = 0; k < kSsimWindow; ++k) {
      mx += w[k] * reference[s + k];
      my += w[k] * prediction[s + k];
    }
    double vx = 0.0, vy = 0.0, cxy = 0.0;
    for (int k = 0; k < kSsimWindow; ++k) {
      const double dx = reference[s + k] - mx;
      const double dy = prediction[s + k] - my;
      vx += w[k] * dx * dx;
      vy += w[k] * dy * dy;
      cxy += w[k] * dx * dy;
    }
    total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) /
             ((mx * mx + my * my + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(windows);
}

}  // namespace nef
