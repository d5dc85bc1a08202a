#include "sdepure/attack.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "sdepure/adjoint.hpp"
#include "sdepure/parallel.hpp"
#include "sdepure/random.hpp"

namespace sdepure {

std::string to_string(Norm norm) { return norm == Norm::linf ? "linf" : "l2"; }

Norm parse_norm(const std::string& name) {
  if (name == "linf") return Norm::linf;
  if (name == "l2") return Norm::l2;
  throw ConfigError("unknown norm '" + name + "' (expected linf or l2)");
}

std::string to_string(GradientMode mode) { return mode == GradientMode::full_adjoint ? "adjoint" : "bpda"; }

GradientMode parse_gradient_mode(const std::string& name) {
  if (name == "adjoint" || name == "full-adjoint") return GradientMode::full_adjoint;
  if (name == "bpda" || name == "bpda-identity") return GradientMode::bpda_identity;
  throw ConfigError("unknown gradient mode '" + name + "' (expected adjoint or bpda)");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0)) throw ContractError("AttackConfig: epsilon must be nonnegative");
  if (!(step_size >= 0.0)) throw ContractError("AttackConfig: step_size must be nonnegative");
  if (eot_k == 0) throw ContractError("AttackConfig: eot_k must be >= 1");
}

bool Pipeline::stochastic() const {
  if (!purifier) return false;
  const auto& cfg = purifier->config();
  if (cfg.jitter > 0.0) return true;
  if (cfg.sampler == Sampler::ld_sde) return cfg.ld.lambda > 0.0 && cfg.ld.eta > 0.0;
  return cfg.t_star > 0.0;
}

EotEstimate eot_gradient(const Vec& x, int label, const Pipeline& pipeline, std::size_t k, GradientMode mode,
                         std::uint64_t seed) {
  if (k == 0) throw ContractError("eot_gradient: K must be >= 1");
  if (!pipeline.classifier) throw ContractError("eot_gradient: pipeline has no classifier");
  const ToyClassifier& clf = *pipeline.classifier;
  if (!pipeline.purifier) return {clf.loss_grad(x, label), clf.loss(x, label)};

  const Objective objective = clf.objective(label);
  const std::size_t draws = pipeline.stochastic() ? k : 1;
  Vec sum = Vec::Zero(x.size());
  double loss = 0.0;
  for (std::size_t j = 0; j < draws; ++j) {
    const std::uint64_t s = derive_seed(seed, "eot", j);
    if (mode == GradientMode::full_adjoint) {
      const DefenseGradient g = grad_defense(x, objective, *pipeline.purifier, s);
      sum += g.grad;
      loss += g.loss;
    } else {
      const Vec purified = pipeline.purifier->purify(x, s).purified;
      sum += objective.gradient(purified);
      loss += objective.value(purified);
    }
  }
  if (draws == 1) return {sum, loss};
  return {sum / static_cast<double>(draws), loss / static_cast<double>(draws)};
}

double perturbation_norm(const Vec& delta, Norm norm) {
  return norm == Norm::linf ? delta.lpNorm<Eigen::Infinity>() : delta.norm();
}

Vec project(const Vec& x, const Vec& center, Norm norm, double eps) {
  if (x.size() != center.size()) throw ContractError("project: dimension mismatch");
  Vec out = x;
  if (norm == Norm::linf) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      double v = std::clamp(x[i], center[i] - eps, center[i] + eps);
      // Rounding in center +- eps can leave |v - center| one ulp above eps.
      while (std::abs(v - center[i]) > eps) v = std::nextafter(v, center[i]);
      out[i] = v;
    }
    return out;
  }
  const Vec delta = x - center;
  const double n = delta.norm();
  if (n > eps) out = center + delta * (eps / n);
  return out;
}

namespace {

Vec random_start_point(const Vec& x0, Norm norm, double eps, Rng& rng) {
  const auto d = x0.size();
  Vec delta(d);
  if (norm == Norm::linf) {
    for (Eigen::Index i = 0; i < d; ++i) delta[i] = rng.uniform(-eps, eps);
  } else {
    Vec dir = rng.normal_vec(static_cast<std::size_t>(d));
    const double n = dir.norm();
    const double radius = eps * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
    delta = n > 0.0 ? Vec(dir * (radius / n)) : Vec::Zero(d);
  }
  return project(x0 + delta, x0, norm, eps);
}

Vec ascent_direction(const Vec& grad, Norm norm) {
  if (norm == Norm::linf) return grad.unaryExpr([](double g) { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); });
  const double n = grad.norm();
  return n > 0.0 ? Vec(grad / n) : Vec::Zero(grad.size());
}

}  // namespace

AttackResult pgd_attack(const Vec& x, int label, const Pipeline& pipeline, const AttackConfig& config) {
  config.validate();
  auto estimate = [&](const Vec& point, std::uint64_t iter) {
    return eot_gradient(point, label, pipeline, config.eot_k, config.mode, derive_seed(config.seed, "pgd-iter", iter));
  };
  const EotEstimate clean = estimate(x, 0);
  AttackResult result{x, clean.loss, clean.loss, {}};
  if (config.epsilon == 0.0 || config.n_iters == 0) return result;

  Vec current = x;
  EotEstimate est = clean;
  if (config.random_start) {
    Rng rng(derive_seed(config.seed, "pgd-start"));
    current = random_start_point(x, config.norm, config.epsilon, rng);
    result.budget_norms.push_back(perturbation_norm(current - x, config.norm));
    est = estimate(current, 1);
  }
  for (std::size_t it = 0; it < config.n_iters; ++it) {
    if (est.loss > result.loss) {
      result.loss = est.loss;
      result.adversarial = current;
    }
    current = project(current + config.step_size * ascent_direction(est.grad, config.norm), x, config.norm, config.epsilon);
    result.budget_norms.push_back(perturbation_norm(current - x, config.norm));
    est = estimate(current, it + 2);
  }
  if (est.loss > result.loss) {
    result.loss = est.loss;
    result.adversarial = current;
  }
  return result;
}

RobustnessReport evaluate_robustness(const ToyClassifier& classifier, const Purifier* defense, const std::vector<Vec>& points,
                                     const std::vector<int>& labels, const AttackConfig& config, std::size_t n_repeats,
                                     std::uint64_t seed, std::size_t workers) {
  config.validate();
  if (n_repeats == 0) throw ContractError("evaluate_robustness: n_repeats must be >= 1");
  if (points.size() != labels.size() || points.empty()) throw ContractError("evaluate_robustness: points/labels mismatch");
  RobustnessReport report{};
  const std::size_t n = points.size();
  const Pipeline pipeline{&classifier, defense};
  const double slack = config.norm == Norm::linf ? 0.0 : 1e-9;
  std::vector<SampleOutcome> outcomes(n * n_repeats);
  std::vector<std::size_t> checks(n * n_repeats, 0), violations(n * n_repeats, 0);
  parallel_for(n * n_repeats, workers, [&](std::size_t job) {
    const std::size_t r = job / n;
    const std::size_t i = job % n;
    const std::uint64_t sample_seed = derive_seed(derive_seed(seed, "attack-repeat", r), "sample", i);
    AttackConfig cfg = config;
    cfg.seed = derive_seed(sample_seed, "attack");
    const AttackResult attack = pgd_attack(points[i], labels[i], pipeline, cfg);
    // Clean and adversarial points are purified with the same randomness, so a
    // zero budget reproduces the clean prediction exactly.
    auto classify = [&](const Vec& p) {
      const Vec q = defense ? defense->purify(p, derive_seed(sample_seed, "eval")).purified : p;
      return classifier.predict(q);
    };
    SampleOutcome out{};
    out.index = i;
    out.clean_pred = classify(points[i]);
    out.adv_pred = classify(attack.adversarial);
    out.success = out.adv_pred != labels[i];
    out.final_loss = attack.loss;
    out.perturbation = perturbation_norm(attack.adversarial - points[i], config.norm);
    for (double b : attack.budget_norms) {
      ++checks[job];
      violations[job] += b > config.epsilon + slack;
    }
    ++checks[job];
    violations[job] += out.perturbation > config.epsilon + slack;
    outcomes[job] = out;
  });

  std::vector<double> clean_per_repeat, robust_per_repeat;
  for (std::size_t r = 0; r < n_repeats; ++r) {
    std::size_t clean = 0, robust = 0;
    for (std::size_t i = 0; i < n; ++i) {
      clean += outcomes[r * n + i].clean_pred == labels[i];
      robust += !outcomes[r * n + i].success;
    }
    clean_per_repeat.push_back(static_cast<double>(clean) / static_cast<double>(n));
    robust_per_repeat.push_back(static_cast<double>(robust) / static_cast<double>(n));
  }
  std::tie(report.standard_acc, report.standard_stderr) = mean_stderr(clean_per_repeat);
  std::tie(report.robust_acc, report.robust_stderr) = mean_stderr(robust_per_repeat);
  report.first_repeat.assign(outcomes.begin(), outcomes.begin() + static_cast<std::ptrdiff_t>(n));
  for (std::size_t j = 0; j < outcomes.size(); ++j) {
    report.budget_checks += checks[j];
    report.budget_violations += violations[j];
  }
  return report;
}

}  // namespace sdepure
