#pragma once

#include <cstdint>
#include <vector>

#include "sdepure/adjoint.hpp"
#include "sdepure/common.hpp"
#include "sdepure/schedule.hpp"
#include "sdepure/score.hpp"

namespace sdepure {

struct Gaussian1d {
  double mean;
  double variance;
};

/// Two 1-D Gaussians diffused by the same VP-SDE.
struct GaussianPair {
  Gaussian1d p0;
  Gaussian1d q0;
  NoiseSchedule schedule;
};

/// Marginal at time t of N(m, v) under the VP-SDE: N(m sqrt(a), 1 - (1 - v) a).
Gaussian1d diffuse_gaussian(const Gaussian1d& g, const NoiseSchedule& schedule, double t);

double kl_gaussian(const Gaussian1d& p, const Gaussian1d& q);
/// E_p (d/dx log p - d/dx log q)^2
double fisher_gaussian(const Gaussian1d& p, const Gaussian1d& q);

std::vector<double> kl_along_diffusion(const GaussianPair& pair, const std::vector<double>& t_grid);
std::vector<double> fisher_along_diffusion(const GaussianPair& pair, const std::vector<double>& t_grid);

/// Relative residual |dKL/dt + 1/2 beta(t) D_F| / |dKL/dt| with dKL/dt taken by
/// central differences of spacing h around t.
double de_bruijn_residual(const GaussianPair& pair, double t, double h = 1e-3);

/// sqrt(2d + 4 sqrt(d log 1/delta) + 4 log 1/delta)
double concentration_constant(std::size_t dim, double delta);

struct BoundCheckOptions {
  double t_star = 0.1;
  double delta = 0.1;
  std::size_t n_trials = 10000;
  /// Probe region for C_s: ||x - mu_t|| <= truncation * sigma_t.
  double truncation = 6.0;
  double dt = 1e-3;
  std::uint64_t seed = 0;
};

struct BoundCheckResult {
  double violation_rate;
  double perturbation_term;  // ||eps_a||
  double diffusion_term;     // sqrt(e^{2 gamma} - 1) C_delta
  double score_term;         // gamma C_s
  double c_delta;
  double c_s;
  double bound;
  double mean_distance;
};

/// C_s = 2 max ||s(x,t)|| over probe points on the truncated region, t in [0, t*].
double probe_score_bound(const GaussianScore& score, double t_star, double truncation);

/// Draws clean x from p_0 (truncated to the probe region), purifies x + eps_a
/// with the reverse VP-SDE and counts ||x_hat(0) - x|| above the distance bound.
BoundCheckResult bound_check(const GaussianScore& score, const Vec& eps_a, const BoundCheckOptions& options);

struct GradcheckRow {
  double sigma0_sq;
  double dt;
  double phi_ana;
  double phi_adj;
  double rel_error;
};

/// Adjoint gradient of x_hat(0) w.r.t. x(t*) for 1-D Gaussian data, against
/// the closed form, on every (sigma0^2, dt) pair.
std::vector<GradcheckRow> gradcheck_study(const NoiseSchedule& schedule, const std::vector<double>& sigma0_grid,
                                          const std::vector<double>& dt_grid, double t_star, std::uint64_t seed = 0,
                                          AdjointScheme scheme = AdjointScheme::discrete);

}  // namespace sdepure
