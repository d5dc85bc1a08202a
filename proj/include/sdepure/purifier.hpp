#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "sdepure/common.hpp"
#include "sdepure/schedule.hpp"
#include "sdepure/score.hpp"
#include "sdepure/sde.hpp"

namespace sdepure {

enum class Sampler { reverse_sde, vp_ode, ld_sde };

std::string to_string(Sampler sampler);
Sampler parse_sampler(const std::string& name);

/// Langevin-dynamics sampler hyperparameters: attraction variance sigma2,
/// rate lambda, noise scale eta.
struct LdParams {
  double sigma2 = 100.0;
  double lambda = 0.1;
  double eta = 1.0;
};

struct PurifierConfig {
  double t_star = 0.1;
  /// t* is drawn from U[t_star - jitter, t_star + jitter] per call when > 0.
  double jitter = 0.0;
  Sampler sampler = Sampler::reverse_sde;
  double dt = 1e-3;
  LdParams ld;
  /// recorded: the transcript keeps the noise and every trajectory state.
  /// regenerated: nothing is stored; noise is re-derived from its counter and
  /// the adjoint reconstructs states by inverting each step.
  NoiseStorage storage = NoiseStorage::recorded;

  void validate() const;
};

/// The randomness consumed by one purification call.
struct NoiseDraw {
  double t_star = 0.0;
  Vec eps;  // forward-diffusion noise (empty for ld-sde)
  WienerRecord wiener;
};

/// Everything needed to replay or differentiate one purification.
struct Transcript {
  NoiseDraw noise;
  Vec input;
  Vec start;  // state where the SDE solve starts (x(t*) or x_a for ld-sde)
  Vec output;
  TimeGrid grid;
  Trajectory trajectory;  // empty unless storage == recorded
};

struct PurifyResult {
  Vec purified;
  Transcript transcript;
};

/// x(t*) = sqrt(alpha(t*)) x_a + sqrt(1 - alpha(t*)) eps
Vec diffuse(const NoiseSchedule& schedule, const Vec& x_a, double t_star, const Vec& eps);

/// Drift of a purification SDE together with its derivatives. The diffusion is
/// isotropic: g(t) times the identity.
class DriftField {
 public:
  virtual ~DriftField() = default;
  virtual Vec value(const Vec& x, double t) const = 0;
  virtual double diffusion(double t) const = 0;
  virtual Vec jvp(const Vec& x, double t, const Vec& v) const = 0;
  virtual Vec vjp(const Vec& x, double t, const Vec& u) const = 0;
  /// (d f / d x_a)^T u for drifts that depend on the purified input.
  virtual std::optional<Vec> input_vjp(const Vec& /*x*/, double /*t*/, const Vec& /*u*/) const { return std::nullopt; }
};

/// f_rev(x,t) = -1/2 beta(t) [x + c s(x,t)], g(t) = sqrt(beta(t)) or 0.
/// c = 2 with noise is the reverse VP-SDE; c = 1 without noise is the
/// probability-flow ODE.
class ReverseDrift final : public DriftField {
 public:
  ReverseDrift(const NoiseSchedule& schedule, const ScoreModel& score, double score_coeff, bool stochastic)
      : schedule_(schedule), score_(score), coeff_(score_coeff), stochastic_(stochastic) {}

  Vec value(const Vec& x, double t) const override;
  double diffusion(double t) const override;
  Vec jvp(const Vec& x, double t, const Vec& v) const override;
  Vec vjp(const Vec& x, double t, const Vec& u) const override;

 private:
  const NoiseSchedule& schedule_;
  const ScoreModel& score_;
  double coeff_;
  bool stochastic_;
};

/// f(x) = -lambda/2 (-s(x,0) + (x - x_a)/sigma2), g = eta sqrt(lambda).
class LangevinDrift final : public DriftField {
 public:
  LangevinDrift(const ScoreModel& score, Vec anchor, LdParams params)
      : score_(score), anchor_(std::move(anchor)), params_(params) {}

  Vec value(const Vec& x, double t) const override;
  double diffusion(double t) const override;
  Vec jvp(const Vec& x, double t, const Vec& v) const override;
  Vec vjp(const Vec& x, double t, const Vec& u) const override;
  std::optional<Vec> input_vjp(const Vec& x, double t, const Vec& u) const override;

 private:
  const ScoreModel& score_;
  Vec anchor_;
  LdParams params_;
};

/// Diffuse-then-denoise purification with a selectable reverse sampler.
class Purifier {
 public:
  Purifier(NoiseSchedule schedule, std::shared_ptr<const ScoreModel> score, PurifierConfig config);

  const NoiseSchedule& schedule() const noexcept { return schedule_; }
  const ScoreModel& score() const noexcept { return *score_; }
  std::shared_ptr<const ScoreModel> score_ptr() const noexcept { return score_; }
  const PurifierConfig& config() const noexcept { return config_; }

  /// Samples t*, eps and the Wiener path for one call.
  NoiseDraw draw_noise(std::size_t dim, std::uint64_t seed) const;

  /// Fresh randomness from `seed`.
  PurifyResult purify(const Vec& x_a, std::uint64_t seed) const;

  /// Deterministic replay with given randomness (common random numbers).
  PurifyResult run(const Vec& x_a, const NoiseDraw& noise) const;

  /// Grid of the SDE solve for a sampled t*.
  TimeGrid solve_grid(double t_star) const;

  /// Drift of the solve; for ld-sde it is anchored at x_a.
  std::unique_ptr<DriftField> drift(const Vec& x_a) const;

 private:
  NoiseSchedule schedule_;
  std::shared_ptr<const ScoreModel> score_;
  PurifierConfig config_;
};

}  // namespace sdepure
