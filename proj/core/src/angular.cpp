#include "nefnet/angular.hpp"

#include <cmath>

#include "nefnet/errors.hpp"

namespace nef {

namespace {

void put_triplet(AngularCode& code, int slot, double rho) {
  code[3 * slot] = rho;
  code[3 * slot + 1] = std::sin(rho);
  code[3 * slot + 2] = std::cos(rho);
}

}  // namespace

Perturbation::Perturbation(const PerturbationConfig& config)
    : config_(config), rng_(config.seed), normal_(0.0, config.std) {
  if (config.std < 0.0) throw Error(ErrorKind::kInvalidArgument, "perturbation std must be >= 0");
}

std::array<double, 2> Perturbation::draw() {
  if (!config_.enabled || config_.std == 0.0) return {0.0, 0.0};
  const double d_theta = normal_(rng_);
  const double d_phi = normal_(rng_);
  return {d_theta, d_phi};
}

AngularCode angular_encode(Viewpoint v) {
  AngularCode code{};
  put_triplet(code, 0, v.theta);
  put_triplet(code, 1, v.phi);
  put_triplet(code, 2, v.theta + v.phi);
  put_triplet(code, 3, v.theta - v.phi);
  return code;
}

AngularCode angular_encode(Viewpoint v, Perturbation& perturbation) {
  const auto [d_theta, d_phi] = perturbation.draw();
  return angular_encode(Viewpoint{v.theta + d_theta, v.phi + d_phi});
}

}  // namespace nef
