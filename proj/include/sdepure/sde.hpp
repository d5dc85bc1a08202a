#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

#include "sdepure/common.hpp"

namespace sdepure {

/// Integration grid between two times. Stored as (start, end, nominal step,
/// count) so arbitrarily long grids cost O(1) memory. Both endpoints are grid
/// points; a fixed-step grid shortens its final step instead of dropping it.
class TimeGrid {
 public:
  TimeGrid() = default;

  static TimeGrid uniform(double t_start, double t_end, std::size_t n_steps);
  static TimeGrid fixed_step(double t_start, double t_end, double dt);

  std::size_t n_steps() const noexcept { return n_; }
  double t_start() const noexcept { return t_start_; }
  double t_end() const noexcept { return t_end_; }
  bool reverse() const noexcept { return t_end_ < t_start_; }

  /// k-th grid time, k in [0, n_steps].
  double time(std::size_t k) const;
  /// Signed step time(k+1) - time(k).
  double step(std::size_t k) const { return time(k + 1) - time(k); }

  bool operator==(const TimeGrid&) const = default;

 private:
  TimeGrid(double t_start, double t_end, double nominal, std::size_t n, bool uniform)
      : t_start_(t_start), t_end_(t_end), nominal_(nominal), n_(n), uniform_(uniform) {}

  double t_start_ = 0.0;
  double t_end_ = 0.0;
  double nominal_ = 0.0;
  std::size_t n_ = 0;
  bool uniform_ = true;
};

enum class NoiseStorage { recorded, regenerated };

/// Brownian increments for one trajectory. Increment k, coordinate i is
/// sqrt(|dt_k|) * N(0,1) drawn from the counter stream (seed, k*dim + i), so the
/// regenerated mode reproduces the recorded one bit for bit without storage.
class WienerRecord {
 public:
  WienerRecord() = default;

  static WienerRecord generate(std::uint64_t seed, const TimeGrid& grid, std::size_t dim,
                               NoiseStorage storage = NoiseStorage::recorded);

  std::size_t n_steps() const noexcept { return grid_.n_steps(); }
  std::size_t dim() const noexcept { return dim_; }
  std::uint64_t seed() const noexcept { return seed_; }
  NoiseStorage storage() const noexcept { return storage_; }
  bool reversed() const noexcept { return reversed_; }
  bool negated() const noexcept { return negated_; }

  Vec increment(std::size_t k) const;
  void increment_into(std::size_t k, Vec& out) const;

  /// Record whose k-th increment is minus the (n-1-k)-th increment of this one.
  WienerRecord reversed_negated() const;

 private:
  double base(std::size_t step, std::size_t i) const;

  std::uint64_t seed_ = 0;
  TimeGrid grid_;
  std::size_t dim_ = 0;
  NoiseStorage storage_ = NoiseStorage::recorded;
  std::shared_ptr<const std::vector<double>> data_;
  bool reversed_ = false;
  bool negated_ = false;
};

/// Sign-flipped time reversal of a noise record; an involution.
inline WienerRecord replay_reversed(const WienerRecord& noise) { return noise.reversed_negated(); }

/// dx = drift(x, t) dt + diffusion(t) .* dW over [t_start, t_end]; the
/// direction is reverse exactly when t_start > t_end.
struct SdeProblem {
  std::function<Vec(const Vec&, double)> drift;
  std::function<Vec(double)> diffusion;
  double t_start = 0.0;
  double t_end = 1.0;

  bool reverse() const noexcept { return t_start > t_end; }
};

using Trajectory = std::vector<Vec>;

/// Euler-Maruyama on the uniform grid with n_steps steps; returns all n_steps+1
/// states. Coefficients are evaluated at the left end of each step.
Trajectory sdeint(const Vec& x0, const SdeProblem& problem, const WienerRecord& noise, std::size_t n_steps);

/// Same scheme on an explicit grid (which must span the problem interval).
Trajectory sdeint(const Vec& x0, const SdeProblem& problem, const WienerRecord& noise, const TimeGrid& grid);

/// Endpoint only; O(dim) memory.
Vec sdeint_endpoint(const Vec& x0, const SdeProblem& problem, const WienerRecord& noise, const TimeGrid& grid);

/// CSV dump with columns step,t,x_0..x_{d-1}.
void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory, const TimeGrid& grid);

}  // namespace sdepure
