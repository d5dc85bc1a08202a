#include "sdepure/adjoint.hpp"

#include <cmath>

namespace sdepure {
namespace {

// Solves x + dt f(x, t) = y for x by Newton's method; the Jacobian is
// assembled column by column from jvp.
Vec invert_euler_step(const DriftField& field, const Vec& y, double t, double dt, std::size_t step) {
  const auto d = y.size();
  Vec x = y - dt * field.value(y, t);
  const double tol = 1e-14 * (1.0 + y.norm());
  for (int iter = 0; iter < 50; ++iter) {
    const Vec residual = x + dt * field.value(x, t) - y;
    if (!residual.allFinite()) break;
    if (residual.norm() <= tol) return x;
    Mat jac = Mat::Identity(d, d);
    Vec e = Vec::Zero(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      e[i] = 1.0;
      jac.col(i) += dt * field.jvp(x, t, e);
      e[i] = 0.0;
    }
    x -= jac.partialPivLu().solve(residual);
  }
  const Vec residual = x + dt * field.value(x, t) - y;
  if (residual.allFinite() && residual.norm() <= 1e3 * tol) return x;
  throw DivergenceError("backprop_sde: could not invert Euler step", step);
}

}  // namespace

AdjointResult backprop_sde(const Purifier& purifier, const Transcript& transcript, const Vec& grad_out,
                           AdjointScheme scheme) {
  const auto d = transcript.input.size();
  if (grad_out.size() != d) throw ContractError("backprop_sde: grad_out dimension mismatch");
  const TimeGrid& grid = transcript.grid;
  const std::size_t n = grid.n_steps();
  if (grid != purifier.solve_grid(transcript.noise.t_star)) throw ContractError("backprop_sde: transcript grid mismatch");

  AdjointResult result{grad_out, Vec::Zero(d), transcript.output};
  if (n == 0) return result;

  const WienerRecord& noise = transcript.noise.wiener;
  if (noise.n_steps() != n || noise.dim() != static_cast<std::size_t>(d)) {
    throw ContractError("backprop_sde: transcript noise does not match its grid");
  }
  const bool use_stored = scheme == AdjointScheme::discrete && transcript.trajectory.size() == n + 1;
  if (!use_stored && !transcript.trajectory.empty() && transcript.trajectory.size() != n + 1) {
    throw ContractError("backprop_sde: transcript trajectory has the wrong length");
  }

  const auto field = purifier.drift(transcript.input);
  // Reversed, sign-flipped increments: reversed(j) = -dW_{n-1-j}.
  const WienerRecord reversed = replay_reversed(noise);

  Vec x = transcript.output;
  Vec z = grad_out;
  Vec dw;
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t k = n - 1 - j;  // forward step being undone: x_k -> x_{k+1}
    const double t_k = grid.time(k);
    const double dt = grid.step(k);
    Vec x_prev;
    Vec z_prev;
    if (scheme == AdjointScheme::discrete) {
      if (use_stored) {
        x_prev = transcript.trajectory[k];
      } else {
        Vec y = x;
        const double g = field->diffusion(t_k);
        if (g != 0.0) {
          reversed.increment_into(j, dw);
          y += g * dw;
        }
        x_prev = invert_euler_step(*field, y, t_k, dt, k);
      }
      z_prev = z + dt * field->vjp(x_prev, t_k, z);
      if (auto p = field->input_vjp(x_prev, t_k, z)) result.grad_input_direct += dt * *p;
    } else {
      const double t_next = grid.time(k + 1);
      x_prev = x - dt * field->value(x, t_next);
      const double g = field->diffusion(t_next);
      if (g != 0.0) {
        reversed.increment_into(j, dw);
        x_prev += g * dw;
      }
      z_prev = z + dt * field->vjp(x, t_next, z);
      if (auto p = field->input_vjp(x, t_next, z)) result.grad_input_direct += dt * *p;
    }
    if (!x_prev.allFinite() || !z_prev.allFinite()) throw DivergenceError("backprop_sde: non-finite adjoint state", k);
    x = std::move(x_prev);
    z = std::move(z_prev);
  }
  result.grad_start = std::move(z);
  result.replayed_start = std::move(x);
  return result;
}

DefenseGradient grad_defense(const Vec& x_a, const Objective& objective, const Purifier& purifier, const NoiseDraw& noise,
                             AdjointScheme scheme) {
  const PurifyResult pr = purifier.run(x_a, noise);
  const Vec g_out = objective.gradient(pr.purified);
  const AdjointResult adj = backprop_sde(purifier, pr.transcript, g_out, scheme);
  DefenseGradient out{Vec(), objective.value(pr.purified), pr.purified};
  if (purifier.config().sampler == Sampler::ld_sde) {
    out.grad = adj.grad_start + adj.grad_input_direct;
  } else {
    // d x(t*) / d x_a = sqrt(alpha(t*)) I; eps does not depend on x_a.
    out.grad = std::sqrt(purifier.schedule().alpha(noise.t_star)) * adj.grad_start;
  }
  return out;
}

DefenseGradient grad_defense(const Vec& x_a, const Objective& objective, const Purifier& purifier, std::uint64_t seed,
                             AdjointScheme scheme) {
  return grad_defense(x_a, objective, purifier, purifier.draw_noise(static_cast<std::size_t>(x_a.size()), seed), scheme);
}

Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_grad: h must be positive");
  Vec grad(x.size());
  Vec probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

Vec finite_diff_grad(const Vec& x_a, const Objective& objective, const Purifier& purifier, const NoiseDraw& noise, double h) {
  return finite_diff_grad([&](const Vec& x) { return objective.value(purifier.run(x, noise).purified); }, x_a, h);
}

GradientReport compare_gradients(const Vec& grad, const Vec& oracle) {
  if (grad.size() != oracle.size()) throw ContractError("compare_gradients: dimension mismatch");
  GradientReport report{grad, oracle, std::nullopt};
  const double denom = oracle.norm();
  report.rel_error = denom > 0.0 ? (grad - oracle).norm() / denom : (grad - oracle).norm();
  return report;
}

double analytic_denoising_gradient(const NoiseSchedule& schedule, double sigma0_sq, double t_star) {
  const double a = schedule.alpha(t_star);
  return sigma0_sq * std::sqrt(a) / (1.0 - a + sigma0_sq * a);
}

}  // namespace sdepure
