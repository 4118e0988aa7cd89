#include <doctest.h>

#include <cmath>
#include <random>

#include "nefnet/errors.hpp"
#include "nefnet/metrics.hpp"
#include "support/oracles.hpp"

using namespace nef;

namespace {

std::vector<double> uniform(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("psnr examples") {
    const std::vector<double> x{0.1, 0.5, 0.9, 0.3};
    CHECK(psnr(x, x) == kPsnrCapDb);
    std::vector<double> y = x;
    for (double& v : y) v += 0.1;  // MSE 0.01
    CHECK(psnr(x, y) == doctest::Approx(20.0).epsilon(1e-12));
    const std::vector<double> zeros(5, 0.0), ones(5, 1.0);
    CHECK(psnr(zeros, ones) == doctest::Approx(0.0));
    CHECK_THROWS_AS(psnr(x, zeros), Error);
  }

  TEST_CASE("psnr decreases as the error grows") {
    std::mt19937_64 rng(3);
    const auto x = uniform(rng, 200);
    const auto noise = uniform(rng, 200);
    double last = kPsnrCapDb + 1;
    for (double scale : {0.001, 0.01, 0.05, 0.1, 0.3, 1.0}) {
      std::vector<double> y(x);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += scale * (noise[i] - 0.5);
      const double p = psnr(x, y);
      CHECK(p < last);
      last = p;
    }
  }

  TEST_CASE("ssim identities") {
    std::mt19937_64 rng(4);
    const auto x = uniform(rng, 64);
    CHECK(ssim_1d(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    const std::vector<double> c(40, 0.3);
    CHECK(ssim_1d(c, c) == doctest::Approx(1.0).epsilon(1e-12));
    const auto y = uniform(rng, 64);
    CHECK(ssim_1d(x, y) == doctest::Approx(ssim_1d(y, x)).epsilon(1e-12));
    CHECK(ssim_1d(x, y) < 0.5);
    const std::vector<double> short_signal(kSsimWindow - 1, 0.5);
    CHECK_THROWS_AS(ssim_1d(short_signal, short_signal), Error);
    CHECK_THROWS_AS(ssim_1d(x, c), Error);
  }

  TEST_CASE("ssim matches the moment-map oracle") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 0.05);
    for (int trial = 0; trial < 20; ++trial) {
      const int len = 11 + trial * 25;
      const auto x = uniform(rng, len);
      std::vector<double> y(x);
      for (double& v : y) v += n(rng);
      CHECK(std::abs(ssim_1d(x, y) - oracle::ssim(x, y)) < 1e-9);
      const auto z = uniform(rng, len);
      CHECK(std::abs(ssim_1d(x, z) - oracle::ssim(x, z)) < 1e-9);
    }
  }
}
