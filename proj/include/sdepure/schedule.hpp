#pragma once

namespace sdepure {

/// Linear variance-preserving noise schedule beta(t) = beta_min + (beta_max - beta_min) t
/// on unit time, with its integrated quantities in closed form.
///
///   alpha(t) = exp(-int_0^t beta)      (signal retention of the forward diffusion)
///   gamma(t) = 1/2 int_0^t beta = -1/2 log alpha(t)
///
/// All accessors throw std::domain_error for t outside [0, 1].
class NoiseSchedule {
 public:
  static constexpr double kDefaultBetaMin = 0.1;
  static constexpr double kDefaultBetaMax = 20.0;

  NoiseSchedule() : NoiseSchedule(kDefaultBetaMin, kDefaultBetaMax) {}
  NoiseSchedule(double beta_min, double beta_max);

  double beta_min() const noexcept { return beta_min_; }
  double beta_max() const noexcept { return beta_max_; }

  double beta(double t) const;
  /// int_0^t beta(s) ds
  double integrated_beta(double t) const;
  double alpha(double t) const;
  double gamma(double t) const;

  bool operator==(const NoiseSchedule&) const = default;

 private:
  double beta_min_;
  double beta_max_;
};

}  // namespace sdepure
