#include "sdepure/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "sdepure/common.hpp"

namespace sdepure {
namespace {

void check_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw std::domain_error("noise schedule evaluated outside [0, 1]: t = " + std::to_string(t));
  }
}

}  // namespace

NoiseSchedule::NoiseSchedule(double beta_min, double beta_max) : beta_min_(beta_min), beta_max_(beta_max) {
  // beta_min = 0 is accepted so degenerate (beta == 0) pipelines can be built;
  // the strict-decrease checks of the theory module reject it.
  if (!(beta_min >= 0.0) || !(beta_max >= beta_min) || !std::isfinite(beta_max)) {
    throw ContractError("NoiseSchedule requires 0 <= beta_min <= beta_max < inf");
  }
}

double NoiseSchedule::beta(double t) const {
  check_time(t);
  return beta_min_ + (beta_max_ - beta_min_) * t;
}

double NoiseSchedule::integrated_beta(double t) const {
  check_time(t);
  return beta_min_ * t + 0.5 * (beta_max_ - beta_min_) * t * t;
}

double NoiseSchedule::alpha(double t) const { return std::exp(-integrated_beta(t)); }

double NoiseSchedule::gamma(double t) const { return 0.5 * integrated_beta(t); }

}  // namespace sdepure
