#include "sdepure/theory.hpp"

#include <cmath>
#include <limits>

#include "sdepure/purifier.hpp"
#include "sdepure/random.hpp"

namespace sdepure {

Gaussian1d diffuse_gaussian(const Gaussian1d& g, const NoiseSchedule& schedule, double t) {
  const double a = schedule.alpha(t);
  return {g.mean * std::sqrt(a), 1.0 - (1.0 - g.variance) * a};
}

double kl_gaussian(const Gaussian1d& p, const Gaussian1d& q) {
  if (!(p.variance > 0.0 && q.variance > 0.0)) throw ContractError("kl_gaussian: variances must be positive");
  const double dm = p.mean - q.mean;
  return 0.5 * (std::log(q.variance / p.variance) + (p.variance + dm * dm) / q.variance - 1.0);
}

double fisher_gaussian(const Gaussian1d& p, const Gaussian1d& q) {
  if (!(p.variance > 0.0 && q.variance > 0.0)) throw ContractError("fisher_gaussian: variances must be positive");
  // score_p - score_q = a x + b is affine; E_p (a x + b)^2 = a^2 v_p + (a m_p + b)^2.
  const double a = 1.0 / q.variance - 1.0 / p.variance;
  const double shift = (p.mean - q.mean) / q.variance;
  return a * a * p.variance + shift * shift;
}

namespace {

void check_pair(const GaussianPair& pair) {
  if (!(pair.p0.variance > 0.0 && pair.q0.variance > 0.0)) throw ContractError("GaussianPair: variances must be positive");
}

void check_grid(const std::vector<double>& t_grid) {
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    if (!(t_grid[i] >= 0.0 && t_grid[i] <= 1.0)) throw ContractError("time grid must lie in [0, 1]");
    if (i > 0 && !(t_grid[i] > t_grid[i - 1])) throw ContractError("time grid must be strictly increasing");
  }
}

}  // namespace

std::vector<double> kl_along_diffusion(const GaussianPair& pair, const std::vector<double>& t_grid) {
  check_pair(pair);
  check_grid(t_grid);
  std::vector<double> out;
  out.reserve(t_grid.size());
  for (double t : t_grid) {
    out.push_back(kl_gaussian(diffuse_gaussian(pair.p0, pair.schedule, t), diffuse_gaussian(pair.q0, pair.schedule, t)));
  }
  return out;
}

std::vector<double> fisher_along_diffusion(const GaussianPair& pair, const std::vector<double>& t_grid) {
  check_pair(pair);
  check_grid(t_grid);
  std::vector<double> out;
  out.reserve(t_grid.size());
  for (double t : t_grid) {
    out.push_back(fisher_gaussian(diffuse_gaussian(pair.p0, pair.schedule, t), diffuse_gaussian(pair.q0, pair.schedule, t)));
  }
  return out;
}

double de_bruijn_residual(const GaussianPair& pair, double t, double h) {
  if (!(t - h >= 0.0 && t + h <= 1.0)) throw ContractError("de_bruijn_residual: stencil leaves [0, 1]");
  const auto kl = kl_along_diffusion(pair, {t - h, t + h});
  const double dkl = (kl[1] - kl[0]) / (2.0 * h);
  const double rate = -0.5 * pair.schedule.beta(t) * fisher_along_diffusion(pair, {t})[0];
  return std::abs(dkl - rate) / std::abs(dkl);
}

double concentration_constant(std::size_t dim, double delta) {
  if (dim == 0 || !(delta > 0.0 && delta < 1.0)) throw ContractError("concentration_constant: need d >= 1, 0 < delta < 1");
  const double d = static_cast<double>(dim);
  const double l = std::log(1.0 / delta);
  return std::sqrt(2.0 * d + 4.0 * std::sqrt(d * l) + 4.0 * l);
}

double probe_score_bound(const GaussianScore& score, double t_star, double truncation) {
  const auto d = static_cast<Eigen::Index>(score.dim());
  double best = 0.0;
  constexpr int kTimes = 100;
  for (int j = 0; j <= kTimes; ++j) {
    const double t = t_star * static_cast<double>(j) / kTimes;
    const Vec mu = score.mean(t);
    const double radius = truncation * std::sqrt(score.variance(t));
    for (Eigen::Index axis = 0; axis < d; ++axis) {
      for (double sign : {-1.0, 1.0}) {
        for (double frac : {0.25, 0.5, 0.75, 1.0}) {
          Vec x = mu;
          x[axis] += sign * frac * radius;
          best = std::max(best, score.evaluate(x, t).norm());
        }
      }
    }
  }
  return 2.0 * best;
}

BoundCheckResult bound_check(const GaussianScore& score, const Vec& eps_a, const BoundCheckOptions& options) {
  if (static_cast<std::size_t>(eps_a.size()) != score.dim()) throw ContractError("bound_check: perturbation dimension mismatch");
  if (options.n_trials == 0) throw ContractError("bound_check: n_trials must be positive");
  if (!(score.sigma0_sq() > 0.0)) throw ContractError("bound_check: clean variance must be positive");
  const NoiseSchedule& schedule = score.schedule();
  BoundCheckResult r{};
  const double gamma = schedule.gamma(options.t_star);
  r.c_delta = concentration_constant(score.dim(), options.delta);
  r.c_s = probe_score_bound(score, options.t_star, options.truncation);
  r.perturbation_term = eps_a.norm();
  r.diffusion_term = std::sqrt(std::expm1(2.0 * gamma)) * r.c_delta;
  r.score_term = gamma * r.c_s;
  r.bound = r.perturbation_term + r.diffusion_term + r.score_term;

  PurifierConfig cfg;
  cfg.t_star = options.t_star;
  cfg.dt = options.dt;
  cfg.sampler = Sampler::reverse_sde;
  cfg.storage = NoiseStorage::regenerated;
  const Purifier purifier(schedule, std::make_shared<GaussianScore>(score), cfg);

  const double sigma0 = std::sqrt(score.sigma0_sq());
  const double radius = options.truncation * sigma0;
  Rng rng(derive_seed(options.seed, "bound-clean"));
  std::size_t violations = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < options.n_trials; ++i) {
    Vec x;
    do {
      x = score.mu0() + sigma0 * rng.normal_vec(score.dim());
    } while ((x - score.mu0()).norm() > radius);
    const Vec purified = purifier.purify(x + eps_a, derive_seed(options.seed, "bound-trial", i)).purified;
    const double dist = (purified - x).norm();
    total += dist;
    // (x + eps) - x is not exactly eps in floating point.
    violations += dist > r.bound * (1.0 + 8.0 * std::numeric_limits<double>::epsilon());
  }
  r.violation_rate = static_cast<double>(violations) / static_cast<double>(options.n_trials);
  r.mean_distance = total / static_cast<double>(options.n_trials);
  return r;
}

std::vector<GradcheckRow> gradcheck_study(const NoiseSchedule& schedule, const std::vector<double>& sigma0_grid,
                                          const std::vector<double>& dt_grid, double t_star, std::uint64_t seed,
                                          AdjointScheme scheme) {
  if (sigma0_grid.empty() || dt_grid.empty()) throw ContractError("gradcheck_study: grids must be nonempty");
  std::vector<GradcheckRow> rows;
  for (double s0 : sigma0_grid) {
    auto score = std::make_shared<GaussianScore>(Vec::Zero(1), s0, schedule);
    for (double dt : dt_grid) {
      PurifierConfig cfg;
      cfg.t_star = t_star;
      cfg.dt = dt;
      cfg.sampler = Sampler::reverse_sde;
      const Purifier purifier(schedule, score, cfg);
      const PurifyResult pr = purifier.purify(Vec::Constant(1, 0.5), derive_seed(seed, "gradcheck"));
      const AdjointResult adj = backprop_sde(purifier, pr.transcript, Vec::Ones(1), scheme);
      GradcheckRow row{s0, dt, analytic_denoising_gradient(schedule, s0, t_star), adj.grad_start[0], 0.0};
      row.rel_error = std::abs(row.phi_ana - row.phi_adj) / std::abs(row.phi_ana);
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace sdepure
