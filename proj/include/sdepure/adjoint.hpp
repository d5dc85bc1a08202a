#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "sdepure/common.hpp"
#include "sdepure/purifier.hpp"

namespace sdepure {

/// How the augmented (state, adjoint) system is stepped backwards.
///   discrete:   exact reverse-mode derivative of the Euler-Maruyama solve;
///               states are read from the transcript or recovered by inverting
///               each step, so the replayed primal matches the forward pass.
///   continuous: Euler-Maruyama on the augmented SDE in adjoint time, with the
///               primal re-integrated explicitly (the torchsde-style adjoint).
enum class AdjointScheme { discrete, continuous };

struct AdjointResult {
  /// dL/dx at the start of the solve: x(t*) for the reverse samplers, x_a for ld-sde.
  Vec grad_start;
  /// dL/dx_a through drift terms that depend on x_a (ld-sde attraction); zero otherwise.
  Vec grad_input_direct;
  /// Primal state recovered at the start of the solve.
  Vec replayed_start;
};

/// Integrates the adjoint of one recorded purification from the output back to
/// the start, consuming the transcript's Wiener increments reversed and negated.
AdjointResult backprop_sde(const Purifier& purifier, const Transcript& transcript, const Vec& grad_out,
                           AdjointScheme scheme = AdjointScheme::discrete);

/// Scalar objective on the purified point.
struct Objective {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;
};

struct DefenseGradient {
  Vec grad;       // dL/dx_a
  double loss;    // L at the purified point
  Vec purified;
};

/// Full-pipeline gradient for one noise realisation: objective backprop, then
/// the adjoint solve, then the reparameterised diffusion step.
DefenseGradient grad_defense(const Vec& x_a, const Objective& objective, const Purifier& purifier,
                             const NoiseDraw& noise, AdjointScheme scheme = AdjointScheme::discrete);

DefenseGradient grad_defense(const Vec& x_a, const Objective& objective, const Purifier& purifier, std::uint64_t seed,
                             AdjointScheme scheme = AdjointScheme::discrete);

/// Central differences of f at x; h must be positive.
Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x, double h);

/// Central differences of the purification pipeline with the same noise reused
/// at every perturbed point.
Vec finite_diff_grad(const Vec& x_a, const Objective& objective, const Purifier& purifier, const NoiseDraw& noise, double h);

struct GradientReport {
  Vec grad;
  std::optional<Vec> oracle_grad;
  std::optional<double> rel_error;  // ||grad - oracle|| / ||oracle||
};

GradientReport compare_gradients(const Vec& grad, const Vec& oracle);

/// d x(0) / d x(t*) of the exact reverse flow when p_0 = N(mu0, sigma0_sq):
/// sigma0^2 sqrt(a) / (1 - a + sigma0^2 a), a = alpha(t*).
double analytic_denoising_gradient(const NoiseSchedule& schedule, double sigma0_sq, double t_star);

}  // namespace sdepure
