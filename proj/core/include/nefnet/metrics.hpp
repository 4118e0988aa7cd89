#pragma once

#include <span>

namespace nef {

inline constexpr double kPsnrCapDb = 100.0;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// 10 log10(1 / MSE) for signals on [0, 1]; zero error returns kPsnrCapDb.
double psnr(std::span<const double> reference, std::span<const double> prediction);

/// Mean SSIM over every full Gaussian window (11 taps, sigma 1.5,
/// K1 = 0.01, K2 = 0.03, dynamic range 1).
double ssim_1d(std::span<const double> reference, std::span<const double> prediction);

}  // namespace nef
