#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sdepure/common.hpp"
#include "sdepure/mlp.hpp"
#include "sdepure/schedule.hpp"

namespace sdepure {

/// Model of grad_x log p_t(x).
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;

  virtual std::size_t dim() const = 0;
  virtual Vec evaluate(const Vec& x, double t) const = 0;
  /// (d s / d x) v
  virtual Vec jvp(const Vec& x, double t, const Vec& v) const = 0;
  /// (d s / d x)^T u. Equal to jvp for exact scores (the Jacobian is a Hessian).
  virtual Vec vjp(const Vec& x, double t, const Vec& u) const = 0;
  /// Global bound on ||s(x, t)|| when one is known.
  virtual std::optional<double> score_bound() const { return std::nullopt; }
};

/// Exact score of p_t when p_0 = N(mu0, sigma0_sq I) is diffused by the VP-SDE.
class GaussianScore final : public ScoreModel {
 public:
  GaussianScore(Vec mu0, double sigma0_sq, NoiseSchedule schedule);

  std::size_t dim() const override { return static_cast<std::size_t>(mu0_.size()); }
  Vec evaluate(const Vec& x, double t) const override;
  Vec jvp(const Vec& x, double t, const Vec& v) const override;
  Vec vjp(const Vec& x, double t, const Vec& u) const override { return jvp(x, t, u); }

  const Vec& mu0() const noexcept { return mu0_; }
  double sigma0_sq() const noexcept { return sigma0_sq_; }
  const NoiseSchedule& schedule() const noexcept { return schedule_; }

  /// mu_t = mu0 sqrt(alpha(t))
  Vec mean(double t) const;
  /// sigma_t^2 = 1 - (1 - sigma0^2) alpha(t); throws DegenerateDistribution at 0.
  double variance(double t) const;

 private:
  Vec mu0_;
  double sigma0_sq_;
  NoiseSchedule schedule_;
};

/// Exact score of a diffused mixture of axis-aligned Gaussians.
class MixtureScore final : public ScoreModel {
 public:
  struct Component {
    double weight;
    Vec mean;
    Vec variance;  // per axis
  };

  MixtureScore(std::vector<Component> components, NoiseSchedule schedule);

  std::size_t dim() const override;
  Vec evaluate(const Vec& x, double t) const override;
  Vec jvp(const Vec& x, double t, const Vec& v) const override;
  Vec vjp(const Vec& x, double t, const Vec& u) const override { return jvp(x, t, u); }

  const std::vector<Component>& components() const noexcept { return components_; }

 private:
  struct Local {
    std::vector<double> resp;
    std::vector<Vec> scores;
    std::vector<Vec> inv_var;
    Vec total;
  };
  Local local(const Vec& x, double t) const;

  std::vector<Component> components_;
  NoiseSchedule schedule_;
};

/// Small network score s(x, t) = net([x; t]).
class MlpScore final : public ScoreModel {
 public:
  MlpScore(Mlp net, NoiseSchedule schedule);

  std::size_t dim() const override { return net_.output_dim(); }
  Vec evaluate(const Vec& x, double t) const override;
  Vec jvp(const Vec& x, double t, const Vec& v) const override;
  Vec vjp(const Vec& x, double t, const Vec& u) const override;

  const Mlp& net() const noexcept { return net_; }
  Mlp& net() noexcept { return net_; }
  const NoiseSchedule& schedule() const noexcept { return schedule_; }

  void save(const std::string& path) const;
  static MlpScore load(const std::string& path);

 private:
  Vec input(const Vec& x, double t) const;

  Mlp net_;
  NoiseSchedule schedule_;
};

enum class DsmWeight { transition_variance, uniform };

struct DsmOptions {
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::tanh;
  std::size_t steps = 20000;
  std::size_t batch = 64;
  double lr = 1e-2;
  DsmWeight weight = DsmWeight::transition_variance;
  /// Training times are drawn from U[t_min, 1].
  double t_min = 1e-3;
  std::size_t eval_samples = 4096;
  std::uint64_t seed = 0;
};

struct DsmResult {
  MlpScore model;
  double initial_loss;
  double final_loss;
};

/// Conditional score of p_0t(x_t | x_0) = N(x_0 sqrt(alpha), (1 - alpha) I).
Vec dsm_target(const Vec& x0, const Vec& x_noisy, double t, const NoiseSchedule& schedule);

double dsm_weight(DsmWeight rule, double t, const NoiseSchedule& schedule);

/// Monte Carlo DSM loss of `model` on a fixed draw of (t, noise) from `seed`.
double dsm_loss(const ScoreModel& model, const std::vector<Vec>& data, const NoiseSchedule& schedule,
                DsmWeight weight, double t_min, std::size_t samples, std::uint64_t seed);

/// Fits an MlpScore by denoising score matching with plain minibatch SGD.
DsmResult dsm_train(const std::vector<Vec>& data, const NoiseSchedule& schedule, const DsmOptions& options);

/// Gradient of the DSM minibatch loss w.r.t. the network weights (exposed for
/// finite-difference testing of the hand-written backprop).
std::vector<Mlp::Layer> dsm_parameter_grad(const MlpScore& model, const std::vector<Vec>& x0,
                                           const std::vector<Vec>& noise, const std::vector<double>& times,
                                           DsmWeight weight, double* loss_out = nullptr);

}  // namespace sdepure
