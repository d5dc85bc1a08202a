#include "sdepure/purifier.hpp"

#include <algorithm>
#include <cmath>

#include "sdepure/random.hpp"

namespace sdepure {

std::string to_string(Sampler sampler) {
  switch (sampler) {
    case Sampler::reverse_sde:
      return "sde";
    case Sampler::vp_ode:
      return "ode";
    case Sampler::ld_sde:
      return "ld";
  }
  return "?";
}

Sampler parse_sampler(const std::string& name) {
  if (name == "sde" || name == "vp-sde") return Sampler::reverse_sde;
  if (name == "ode" || name == "vp-ode") return Sampler::vp_ode;
  if (name == "ld" || name == "ld-sde") return Sampler::ld_sde;
  throw ConfigError("unknown sampler '" + name + "' (expected sde, ode or ld)");
}

void PurifierConfig::validate() const {
  if (!(t_star >= 0.0 && t_star <= 1.0)) throw ContractError("PurifierConfig: t_star must lie in [0, 1]");
  if (!(jitter >= 0.0)) throw ContractError("PurifierConfig: jitter must be nonnegative");
  if (t_star - jitter < 0.0 || t_star + jitter > 1.0) {
    throw ContractError("PurifierConfig: [t_star - jitter, t_star + jitter] must lie in [0, 1]");
  }
  if (!(dt > 0.0 && dt <= 1.0)) throw ContractError("PurifierConfig: dt must lie in (0, 1]");
  if (sampler == Sampler::ld_sde) {
    if (!(ld.sigma2 > 0.0) || !(ld.lambda >= 0.0) || !(ld.eta >= 0.0)) {
      throw ContractError("PurifierConfig: ld-sde needs sigma2 > 0, lambda >= 0, eta >= 0");
    }
  }
}

Vec diffuse(const NoiseSchedule& schedule, const Vec& x_a, double t_star, const Vec& eps) {
  if (eps.size() != x_a.size()) throw ContractError("diffuse: noise dimension mismatch");
  const double a = schedule.alpha(t_star);
  return std::sqrt(a) * x_a + std::sqrt(1.0 - a) * eps;
}

// ---------------------------------------------------------------- drifts

Vec ReverseDrift::value(const Vec& x, double t) const {
  return -0.5 * schedule_.beta(t) * (x + coeff_ * score_.evaluate(x, t));
}

double ReverseDrift::diffusion(double t) const { return stochastic_ ? std::sqrt(schedule_.beta(t)) : 0.0; }

Vec ReverseDrift::jvp(const Vec& x, double t, const Vec& v) const {
  return -0.5 * schedule_.beta(t) * (v + coeff_ * score_.jvp(x, t, v));
}

Vec ReverseDrift::vjp(const Vec& x, double t, const Vec& u) const {
  return -0.5 * schedule_.beta(t) * (u + coeff_ * score_.vjp(x, t, u));
}

Vec LangevinDrift::value(const Vec& x, double) const {
  return -0.5 * params_.lambda * (-score_.evaluate(x, 0.0) + (x - anchor_) / params_.sigma2);
}

double LangevinDrift::diffusion(double) const { return params_.eta * std::sqrt(params_.lambda); }

Vec LangevinDrift::jvp(const Vec& x, double, const Vec& v) const {
  return -0.5 * params_.lambda * (-score_.jvp(x, 0.0, v) + v / params_.sigma2);
}

Vec LangevinDrift::vjp(const Vec& x, double, const Vec& u) const {
  return -0.5 * params_.lambda * (-score_.vjp(x, 0.0, u) + u / params_.sigma2);
}

std::optional<Vec> LangevinDrift::input_vjp(const Vec&, double, const Vec& u) const {
  return Vec(0.5 * params_.lambda / params_.sigma2 * u);
}

// ---------------------------------------------------------------- purifier

Purifier::Purifier(NoiseSchedule schedule, std::shared_ptr<const ScoreModel> score, PurifierConfig config)
    : schedule_(schedule), score_(std::move(score)), config_(config) {
  if (!score_) throw ContractError("Purifier: null score model");
  config_.validate();
}

TimeGrid Purifier::solve_grid(double t_star) const {
  if (config_.sampler == Sampler::ld_sde) return TimeGrid::fixed_step(0.0, 1.0, config_.dt);
  return TimeGrid::fixed_step(t_star, 0.0, config_.dt);
}

std::unique_ptr<DriftField> Purifier::drift(const Vec& x_a) const {
  switch (config_.sampler) {
    case Sampler::reverse_sde:
      return std::make_unique<ReverseDrift>(schedule_, *score_, 2.0, true);
    case Sampler::vp_ode:
      return std::make_unique<ReverseDrift>(schedule_, *score_, 1.0, false);
    case Sampler::ld_sde:
      return std::make_unique<LangevinDrift>(*score_, x_a, config_.ld);
  }
  throw ContractError("Purifier: unknown sampler");
}

NoiseDraw Purifier::draw_noise(std::size_t dim, std::uint64_t seed) const {
  NoiseDraw draw;
  draw.t_star = config_.t_star;
  if (config_.jitter > 0.0) {
    const double u = counter_uniform(derive_seed(seed, "t-star"), 0);
    draw.t_star = std::clamp(config_.t_star - config_.jitter + 2.0 * config_.jitter * u, 0.0, 1.0);
  }
  if (config_.sampler != Sampler::ld_sde) {
    Rng eps_rng(derive_seed(seed, "diffuse-eps"));
    draw.eps = eps_rng.normal_vec(dim);
  }
  draw.wiener = WienerRecord::generate(derive_seed(seed, "wiener"), solve_grid(draw.t_star), dim, config_.storage);
  return draw;
}

PurifyResult Purifier::purify(const Vec& x_a, std::uint64_t seed) const {
  return run(x_a, draw_noise(static_cast<std::size_t>(x_a.size()), seed));
}

PurifyResult Purifier::run(const Vec& x_a, const NoiseDraw& noise) const {
  if (static_cast<std::size_t>(x_a.size()) != score_->dim()) throw ContractError("Purifier: input dimension mismatch");
  PurifyResult result;
  Transcript& tr = result.transcript;
  tr.noise = noise;
  tr.input = x_a;
  tr.grid = solve_grid(noise.t_star);
  if (config_.sampler == Sampler::ld_sde) {
    tr.start = x_a;
  } else {
    tr.start = diffuse(schedule_, x_a, noise.t_star, noise.eps);
  }

  if (tr.grid.n_steps() == 0) {
    tr.output = tr.start;
    if (config_.storage == NoiseStorage::recorded) tr.trajectory = {tr.start};
    result.purified = tr.output;
    return result;
  }
  if (noise.wiener.n_steps() != tr.grid.n_steps()) throw ContractError("Purifier: noise record does not match the grid");

  const auto field = drift(x_a);
  const DriftField& f = *field;
  const auto d = x_a.size();
  SdeProblem problem{
      [&f](const Vec& x, double t) { return f.value(x, t); },
      [&f, d](double t) { return Vec::Constant(d, f.diffusion(t)); },
      tr.grid.t_start(),
      tr.grid.t_end(),
  };
  if (config_.storage == NoiseStorage::recorded) {
    tr.trajectory = sdeint(tr.start, problem, noise.wiener, tr.grid);
    tr.output = tr.trajectory.back();
  } else {
    tr.output = sdeint_endpoint(tr.start, problem, noise.wiener, tr.grid);
  }
  result.purified = tr.output;
  return result;
}

}  // namespace sdepure
