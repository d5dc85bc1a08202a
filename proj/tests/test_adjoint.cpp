#include <doctest.h>

#include <cmath>
#include <memory>

#include "sdepure/adjoint.hpp"
#include "sdepure/random.hpp"
#include "sdepure/theory.hpp"

using namespace sdepure;

namespace {

class ZeroScore final : public ScoreModel {
 public:
  explicit ZeroScore(std::size_t d) : d_(d) {}
  std::size_t dim() const override { return d_; }
  Vec evaluate(const Vec& x, double) const override { return Vec::Zero(x.size()); }
  Vec jvp(const Vec& x, double, const Vec&) const override { return Vec::Zero(x.size()); }
  Vec vjp(const Vec& x, double, const Vec&) const override { return Vec::Zero(x.size()); }

 private:
  std::size_t d_;
};

std::shared_ptr<MlpScore> mlp_score(std::uint64_t seed) {
  Rng rng(seed);
  Mlp net({3, 16, 16, 2}, Activation::tanh, rng);
  for (auto& layer : net.layers()) layer.bias = 0.2 * rng.normal_vec(static_cast<std::size_t>(layer.bias.size()));
  return std::make_shared<MlpScore>(std::move(net), NoiseSchedule());
}

PurifierConfig config(Sampler sampler, double t_star, NoiseStorage storage = NoiseStorage::recorded, double dt = 1e-3) {
  PurifierConfig c;
  c.sampler = sampler;
  c.t_star = t_star;
  c.storage = storage;
  c.dt = dt;
  return c;
}

Objective linear_objective(const Vec& w) {
  return {[w](const Vec& x) { return w.dot(x); }, [w](const Vec&) { return w; }};
}

Objective smooth_objective() {
  return {[](const Vec& x) { return std::sin(x[0]) + x[0] * x[1] + 0.5 * x[1] * x[1]; },
          [](const Vec& x) { return Vec((Vec(2) << std::cos(x[0]) + x[1], x[0] + x[1]).finished()); }};
}

double rel(const Vec& a, const Vec& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST_CASE("zero score, constant beta: gradient is the unrolled Euler product") {
  const double b = 2.0, T = 0.5, dt = 1e-3;
  const NoiseSchedule sched(b, b);
  const Purifier p(sched, std::make_shared<ZeroScore>(1), config(Sampler::reverse_sde, T, NoiseStorage::recorded, dt));
  const auto r = p.purify(Vec::Constant(1, 0.3), 1);
  const auto adj = backprop_sde(p, r.transcript, Vec::Ones(1));

  // Oracle: chain rule through x_{k+1} = x_k (1 + b |dt_k| / 2) + g dW_k.
  double oracle = 1.0;
  for (std::size_t k = 0; k < r.transcript.grid.n_steps(); ++k) oracle *= 1.0 - 0.5 * b * r.transcript.grid.step(k);
  CHECK(std::abs(adj.grad_start[0] - oracle) < 1e-6 * oracle);
  // Continuous-time limit: the reverse flow expands by exp(+b T / 2).
  CHECK(adj.grad_start[0] == doctest::Approx(std::exp(0.5 * b * T)).epsilon(1e-3));
  CHECK(adj.grad_start[0] > 1.0);
}

TEST_CASE("adjoint is linear in the output cotangent") {
  const auto score = mlp_score(3);
  for (auto sampler : {Sampler::reverse_sde, Sampler::vp_ode, Sampler::ld_sde}) {
    const Purifier p(NoiseSchedule(), score, config(sampler, 0.2, NoiseStorage::recorded, 1e-2));
    const auto r = p.purify(Vec::Constant(2, 0.4), 7);
    const Vec g1 = (Vec(2) << 1.0, -0.5).finished(), g2 = (Vec(2) << 0.3, 2.0).finished();
    const double a = 1.7, c = -0.6;
    const Vec lhs = backprop_sde(p, r.transcript, a * g1 + c * g2).grad_start;
    const Vec rhs = a * backprop_sde(p, r.transcript, g1).grad_start + c * backprop_sde(p, r.transcript, g2).grad_start;
    CHECK((lhs - rhs).norm() < 1e-8);
    CHECK(backprop_sde(p, r.transcript, Vec::Zero(2)).grad_start.norm() == 0.0);
  }
}

TEST_CASE("replayed primal returns to the recorded start") {
  const auto score = mlp_score(4);
  for (auto storage : {NoiseStorage::recorded, NoiseStorage::regenerated}) {
    for (auto sampler : {Sampler::reverse_sde, Sampler::vp_ode, Sampler::ld_sde}) {
      const Purifier p(NoiseSchedule(), score, config(sampler, 0.3, storage));
      const auto r = p.purify(Vec::Constant(2, -0.2), 11);
      const auto adj = backprop_sde(p, r.transcript, Vec::Ones(2));
      CHECK((adj.replayed_start - r.transcript.start).norm() < 1e-9);
    }
  }
}

TEST_CASE("regenerated storage gives the recorded-storage gradient") {
  const auto score = mlp_score(5);
  const Purifier rec(NoiseSchedule(), score, config(Sampler::reverse_sde, 0.3, NoiseStorage::recorded));
  const Purifier gen(NoiseSchedule(), score, config(Sampler::reverse_sde, 0.3, NoiseStorage::regenerated));
  const Vec x = Vec::Constant(2, 0.5);
  const auto a = grad_defense(x, smooth_objective(), rec, 3);
  const auto b = grad_defense(x, smooth_objective(), gen, 3);
  CHECK(a.purified == b.purified);
  CHECK((a.grad - b.grad).norm() < 1e-9 * a.grad.norm());
}

TEST_CASE("Gaussian oracle: step-size convergence of the adjoint") {
  const NoiseSchedule sched;
  const auto rows = gradcheck_study(sched, {0.01, 0.1, 1.0}, {1e-1, 1e-2, 1e-3, 1e-4}, 0.1, 1);
  for (std::size_t i = 0; i < rows.size(); i += 4) {
    for (std::size_t j = 1; j < 4; ++j) CHECK(rows[i + j].rel_error <= rows[i + j - 1].rel_error);
    // First order: a tenfold smaller step cuts the error about tenfold.
    CHECK(rows[i + 2].rel_error / rows[i + 3].rel_error == doctest::Approx(10.0).epsilon(0.05));
  }
  CHECK(analytic_denoising_gradient(sched, 1.0, 0.3) == doctest::Approx(std::sqrt(sched.alpha(0.3))).epsilon(1e-15));
  CHECK(analytic_denoising_gradient(sched, 0.2, 0.0) == 1.0);
}

TEST_CASE("continuous adjoint agrees with the discrete one to first order") {
  const NoiseSchedule sched;
  const auto d1 = gradcheck_study(sched, {0.5}, {1e-3}, 0.1, 1, AdjointScheme::discrete);
  const auto c1 = gradcheck_study(sched, {0.5}, {1e-3}, 0.1, 1, AdjointScheme::continuous);
  CHECK(c1[0].rel_error < 1e-2);
  CHECK(std::abs(c1[0].phi_adj - d1[0].phi_adj) < 1e-2);
}

TEST_CASE("grad_defense special cases") {
  const Vec w = (Vec(2) << 0.7, -1.3).finished();
  const Vec x = (Vec(2) << 0.2, 0.1).finished();

  // t* = 0: the purifier is the identity.
  const Purifier id(NoiseSchedule(), mlp_score(6), config(Sampler::reverse_sde, 0.0));
  const auto g0 = grad_defense(x, smooth_objective(), id, 1);
  CHECK(g0.grad == smooth_objective().gradient(x));

  // Zero score and zero schedule: identity pipeline.
  const Purifier flat(NoiseSchedule(0.0, 0.0), std::make_shared<ZeroScore>(2), config(Sampler::reverse_sde, 0.5));
  CHECK(grad_defense(x, linear_objective(w), flat, 2).grad == w);

  // Gaussian 1-D: sqrt(alpha) times the denoising gradient.
  const NoiseSchedule sched;
  for (double s : {0.1, 0.5, 1.0}) {
    const Purifier g(sched, std::make_shared<GaussianScore>(Vec::Zero(1), s, sched), config(Sampler::reverse_sde, 0.1));
    const auto gd = grad_defense(Vec::Constant(1, 0.5), linear_objective(Vec::Ones(1)), g, 9);
    const double oracle = std::sqrt(sched.alpha(0.1)) * analytic_denoising_gradient(sched, s, 0.1);
    CHECK(std::abs(gd.grad[0] - oracle) < 1e-2 * oracle);
  }
}

TEST_CASE("finite differences") {
  auto quad = [](const Vec& v) { return 3.0 * v[0] * v[0] - v[0] * v[1] + 2.0 * v[1]; };
  const Vec x = (Vec(2) << 0.5, -1.0).finished();
  const Vec exact = (Vec(2) << 6.0 * x[0] - x[1], -x[0] + 2.0).finished();
  CHECK((finite_diff_grad(quad, x, 1e-3) - exact).norm() < 1e-9);
  CHECK_THROWS_AS(finite_diff_grad(quad, x, 0.0), ContractError);
  CHECK_THROWS_AS(finite_diff_grad(quad, x, -1e-3), ContractError);
}

TEST_CASE("adjoint matches finite differences on MLP-score pipelines") {
  const auto score = mlp_score(8);
  Rng rng(9);
  for (auto sampler : {Sampler::reverse_sde, Sampler::vp_ode, Sampler::ld_sde}) {
    for (auto storage : {NoiseStorage::recorded, NoiseStorage::regenerated}) {
      const Purifier p(NoiseSchedule(), score, config(sampler, 0.2, storage, 1e-2));
      for (int i = 0; i < 3; ++i) {
        const Vec x = rng.normal_vec(2);
        const auto noise = p.draw_noise(2, derive_seed(10, "probe", i));
        const auto ad = grad_defense(x, smooth_objective(), p, noise);
        const Vec fd = finite_diff_grad(x, smooth_objective(), p, noise, 1e-4);
        CHECK(rel(ad.grad, fd) < 1e-3);
      }
    }
  }
}

TEST_CASE("fresh noise per evaluation breaks the finite-difference match") {
  const auto score = mlp_score(12);
  const Purifier p(NoiseSchedule(), score, config(Sampler::reverse_sde, 0.3, NoiseStorage::recorded, 1e-2));
  const Vec x = (Vec(2) << 0.3, 0.3).finished();
  std::uint64_t calls = 0;
  auto noisy = [&](const Vec& v) { return smooth_objective().value(p.purify(v, calls++).purified); };
  const Vec fd = finite_diff_grad(noisy, x, 1e-4);
  const Vec ad = grad_defense(x, smooth_objective(), p, 0).grad;
  CHECK(rel(ad, fd) > 1e-1);
}

TEST_CASE("compare_gradients") {
  const Vec g = (Vec(2) << 1.0, 1.0).finished();
  const Vec o = (Vec(2) << 1.0, 0.0).finished();
  const auto rep = compare_gradients(g, o);
  REQUIRE(rep.rel_error.has_value());
  CHECK(*rep.rel_error == doctest::Approx(1.0));
  CHECK(*rep.rel_error >= 0.0);
}

TEST_CASE("adjoint contract errors") {
  const Purifier p(NoiseSchedule(), mlp_score(13), config(Sampler::reverse_sde, 0.1));
  auto r = p.purify(Vec::Zero(2), 1);
  CHECK_THROWS_AS(backprop_sde(p, r.transcript, Vec::Zero(3)), ContractError);
  r.transcript.noise.wiener = WienerRecord::generate(1, TimeGrid::uniform(0.1, 0.0, 7), 2);
  CHECK_THROWS_AS(backprop_sde(p, r.transcript, Vec::Zero(2)), ContractError);
}
