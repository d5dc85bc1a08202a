// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "sdepure/adjoint.hpp"
#include "sdepure/attack.hpp"
#include "sdepure/classifier.hpp"
#include "sdepure/experiment.hpp"
#include "sdepure/purifier.hpp"
#include "sdepure/random.hpp"
#include "sdepure/score.hpp"
#include "sdepure/theory.hpp"

namespace fs = std::filesystem;
using namespace sdepure;

namespace {

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back((ok ? "ok   " : "FAIL ") + what);
  }
  void info(const std::string& what) { notes.push_back("info " + what); }
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string g(double a) { return fmt("%.4g", a); }

struct Moments {
  Vec mean, var, mean_se, var_se;
};

// Per-axis sample mean and variance with their standard errors.
Moments moments(const std::vector<Vec>& xs) {
  const std::size_t d = static_cast<std::size_t>(xs.front().size());
  const double n = static_cast<double>(xs.size());
  Moments m{Vec::Zero(d), Vec::Zero(d), Vec::Zero(d), Vec::Zero(d)};
  for (const auto& x : xs) m.mean += x;
  m.mean /= n;
  Vec m4 = Vec::Zero(d);
  for (const auto& x : xs) {
    const Vec c = x - m.mean;
    m.var += c.cwiseProduct(c);
    m4 += c.cwiseProduct(c).cwiseProduct(c).cwiseProduct(c);
  }
  m.var /= n - 1.0;
  m4 /= n;
  for (std::size_t i = 0; i < d; ++i) {
    m.mean_se[i] = std::sqrt(m.var[i] / n);
    m.var_se[i] = std::sqrt(std::max(m4[i] - m.var[i] * m.var[i], 0.0) / n);
  }
  return m;
}

// ---------------------------------------------------------------------------

Verdict criterion1() {
  Verdict v;
  const NoiseSchedule s;
  const std::vector<double> sigmas{0.01, 0.05, 0.1, 0.5, 1.0};
  const std::vector<double> dts{1e-1, 1e-2, 1e-3, 1e-4};
  const double t_star = 0.1;
  const auto rows = gradcheck_study(s, sigmas, dts, t_star, 0, AdjointScheme::discrete);
  const auto cont = gradcheck_study(s, sigmas, dts, t_star, 0, AdjointScheme::continuous);
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    const double a = s.alpha(t_star), s0 = sigmas[i];
    // independent closed form of the reverse-flow Jacobian
    const double oracle = s0 * std::sqrt(a) / (1.0 - a + s0 * a);
    double prev = INFINITY, at_1e3 = NAN;
    bool monotone = true, oracle_ok = true;
    std::string errs;
    for (std::size_t j = 0; j < dts.size(); ++j) {
      const auto& r = rows[i * dts.size() + j];
      oracle_ok = oracle_ok && std::abs(r.phi_ana - oracle) <= 1e-14 * std::abs(oracle);
      const double e = std::abs(oracle - r.phi_adj) / std::abs(oracle);
      monotone = monotone && e <= prev;
      prev = e;
      if (dts[j] == 1e-3) at_1e3 = e;
      errs += (j ? " " : "") + g(e);
    }
    v.require(oracle_ok, "sigma0^2=" + g(s0) + " library phi_ana equals the test-side closed form");
    v.require(at_1e3 < 1e-2, "sigma0^2=" + g(s0) + " rel error at dt=1e-3: " + g(at_1e3) + " (< 1e-2)");
    v.require(monotone, "sigma0^2=" + g(s0) + " rel error non-increasing over dt 1e-1..1e-4: " + errs);
    std::string cerrs;
    for (std::size_t j = 0; j < dts.size(); ++j) cerrs += (j ? " " : "") + g(cont[i * dts.size() + j].rel_error);
    v.info("sigma0^2=" + g(s0) + " continuous-scheme rel errors: " + cerrs);
  }
  return v;
}

Verdict criterion2() {
  Verdict v;
  const NoiseSchedule s;
  DatasetSpec spec;
  spec.n = 1000;
  const ToyDataset data = generate_dataset(spec, 21);
  DsmOptions o;
  o.hidden = {32, 32};
  o.steps = 2000;
  o.lr = 1e-2;
  o.seed = 22;
  auto score = std::make_shared<MlpScore>(dsm_train(data.points, s, o).model);

  Rng init(23);
  const ToyClassifier clf(Mlp({2, 16, 2}, Activation::tanh, init), ClassifierKind::small_mlp);

  PurifierConfig cfg;
  cfg.t_star = 0.1;
  cfg.dt = 1e-3;
  const Purifier purifier(s, score, cfg);

  Rng rng(24);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Vec x = 2.0 * rng.normal_vec(2);
    const Objective obj = clf.objective(i % 2);
    const NoiseDraw noise = purifier.draw_noise(2, derive_seed(25, "probe", static_cast<std::uint64_t>(i)));
    const Vec adj = grad_defense(x, obj, purifier, noise).grad;
    const Vec fd = finite_diff_grad(x, obj, purifier, noise, 1e-4);
    worst = std::max(worst, (adj - fd).norm() / fd.norm());
  }
  v.require(worst <= 1e-3, "worst relative error over 20 probes: " + g(worst) + " (<= 1e-3)");
  return v;
}

Verdict criterion3() {
  Verdict v;
  const NoiseSchedule s;
  std::vector<double> grid(1000);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = static_cast<double>(i) / 999.0;
  Rng rng(31);
  double worst_res = 0.0, worst_closed = 0.0;
  bool strict = true;
  for (int p = 0; p < 10; ++p) {
    const double m = rng.uniform(0.2, 2.0) * (p % 2 ? -1.0 : 1.0);
    const double var = rng.uniform(0.1, 2.0);
    const GaussianPair pair{{0.0, var}, {m, var}, s};
    const auto kl = kl_along_diffusion(pair, grid);
    for (std::size_t i = 1; i < kl.size(); ++i) strict = strict && kl[i] < kl[i - 1];
    // Equal-variance pairs: KL_t = a m^2 / (2 v_t), D_F = a m^2 / v_t^2, v_t = 1 - (1 - v) a.
    auto closed_kl = [&](double t) {
      const double a = s.alpha(t);
      return a * m * m / (2.0 * (1.0 - (1.0 - var) * a));
    };
    for (std::size_t i = 0; i < grid.size(); i += 111)
      worst_closed = std::max(worst_closed, std::abs(kl[i] - closed_kl(grid[i])) / closed_kl(grid[i]));
    const double t = 0.5, h = 1e-4, a = s.alpha(t), vt = 1.0 - (1.0 - var) * a;
    const double dkl = (kl_along_diffusion(pair, {t + h})[0] - kl_along_diffusion(pair, {t - h})[0]) / (2.0 * h);
    const double fisher = fisher_along_diffusion(pair, {t})[0];
    worst_closed = std::max(worst_closed, std::abs(fisher - a * m * m / (vt * vt)) / fisher);
    worst_res = std::max(worst_res, std::abs(dkl + 0.5 * s.beta(t) * fisher) / std::abs(dkl));
  }
  v.require(strict, "KL strictly decreasing on a 1000-point grid for 10 random pairs");
  v.require(worst_closed < 1e-9, "KL and Fisher match the equal-variance closed forms: " + g(worst_closed));
  v.require(worst_res <= 0.02, "de Bruijn relative residual at t=0.5: " + g(worst_res) + " (<= 0.02)");
  return v;
}

Verdict criterion4() {
  Verdict v;
  ExperimentConfig c;
  c.seed = 41;
  c.bound_dims = {1, 2};
  c.bound_t_star = {0.05, 0.1};
  c.bound_delta = {0.1, 0.01};
  c.bound_trials = 10000;
  for (const auto& r : run_bound_check(c)) {
    const double tol = r.delta + 3.0 * std::sqrt(r.delta * (1.0 - r.delta) / static_cast<double>(r.n_trials));
    v.require(r.n_trials == 10000 && r.violation_rate <= tol,
              "d=" + std::to_string(r.dim) + " t*=" + g(r.t_star) + " delta=" + g(r.delta) +
                  ": violation rate " + g(r.violation_rate) + " <= " + g(tol) + " (mean distance " +
                  g(r.mean_distance) + ", bound " + g(r.bound) + ")");
  }
  return v;
}

Verdict criterion5() {
  Verdict v;
  const NoiseSchedule s;
  const Vec x_a = (Vec(2) << 0.7, -1.3).finished();
  auto score = std::make_shared<GaussianScore>(Vec::Zero(2), 1.0, s);
  for (double t_star : {0.05, 0.1, 0.5}) {
    PurifierConfig cfg;
    cfg.t_star = t_star;
    const Purifier purifier(s, score, cfg);
    std::vector<Vec> xs;
    for (std::uint64_t i = 0; i < 10000; ++i) {
      const NoiseDraw nd = purifier.draw_noise(2, derive_seed(derive_seed(51, "t-star", static_cast<std::uint64_t>(t_star * 100)), "draw", i));
      xs.push_back(diffuse(s, x_a, nd.t_star, nd.eps));
    }
    const Moments m = moments(xs);
    const double a = std::exp(-(0.1 * t_star + 0.5 * (20.0 - 0.1) * t_star * t_star));
    bool ok = true;
    std::string detail;
    for (int k = 0; k < 2; ++k) {
      const double zm = (m.mean[k] - std::sqrt(a) * x_a[k]) / m.mean_se[k];
      const double zv = (m.var[k] - (1.0 - a)) / m.var_se[k];
      ok = ok && std::abs(zm) <= 3.0 && std::abs(zv) <= 3.0;
      detail += " z_mean[" + std::to_string(k) + "]=" + fmt("%.2f", zm) + " z_var[" + std::to_string(k) +
                "]=" + fmt("%.2f", zv);
    }
    v.require(ok, "t*=" + g(t_star) + detail);
  }
  return v;
}

Verdict criterion6() {
  Verdict v;
  const NoiseSchedule s;
  const Vec mu0 = (Vec(2) << 0.5, -0.3).finished();
  const double s0 = 0.5;
  auto score = std::make_shared<GaussianScore>(mu0, s0, s);
  const double t_star = 0.1;
  std::vector<std::vector<Vec>> out(2);
  for (int which = 0; which < 2; ++which) {
    PurifierConfig cfg;
    cfg.t_star = t_star;
    cfg.sampler = which ? Sampler::vp_ode : Sampler::reverse_sde;
    const Purifier purifier(s, score, cfg);
    Rng data(derive_seed(61, "clean", static_cast<std::uint64_t>(which)));
    for (std::uint64_t i = 0; i < 10000; ++i) {
      const Vec x_a = mu0 + std::sqrt(s0) * data.normal_vec(2);
      out[which].push_back(purifier.purify(x_a, derive_seed(62 + which, "run", i)).purified);
    }
  }
  const Moments sde = moments(out[0]), ode = moments(out[1]);
  bool ok = true;
  std::string detail;
  for (int k = 0; k < 2; ++k) {
    const double zm = (sde.mean[k] - ode.mean[k]) / std::hypot(sde.mean_se[k], ode.mean_se[k]);
    const double zv = (sde.var[k] - ode.var[k]) / std::hypot(sde.var_se[k], ode.var_se[k]);
    ok = ok && std::abs(zm) <= 3.0 && std::abs(zv) <= 3.0;
    detail += " z_mean[" + std::to_string(k) + "]=" + fmt("%.2f", zm) + " z_var[" + std::to_string(k) +
              "]=" + fmt("%.2f", zv);
  }
  v.require(ok, "sde vs ode terminal moments, 1e4 runs each, x_a ~ p_0:" + detail);
  v.info("sde mean " + g(sde.mean[0]) + "," + g(sde.mean[1]) + " var " + g(sde.var[0]) + "," + g(sde.var[1]) +
         "; ode mean " + g(ode.mean[0]) + "," + g(ode.mean[1]) + " var " + g(ode.var[0]) + "," + g(ode.var[1]) +
         "; p_0 mean 0.5,-0.3 var 0.5");
  return v;
}

Verdict criterion7() {
  Verdict v;
  const auto cfg = ExperimentConfig::load(SDEPURE_TOY_CONFIG);
  v.require(cfg.attack.eot_k == 20 && cfg.n_repeats == 16 &&
                cfg.tstar_sweep == std::vector<double>{0.0, 0.05, 0.1, 0.2, 0.4, 0.8},
            "toy config: K=20, n_repeats=16, sweep {0, 0.05, 0.1, 0.2, 0.4, 0.8}");
  const auto rows = run_tradeoff_sweep(StudyContext::build(cfg));
  std::string table;
  for (const auto& r : rows)
    table += " t*=" + g(r.t_star) + ":" + fmt("%.3f", r.standard_acc) + "/" + fmt("%.3f", r.robust_acc);
  v.info("standard/robust" + table);
  bool decreasing = true;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j)
      decreasing = decreasing && rows[j].standard_acc <= rows[i].standard_acc +
                                                             2.0 * std::hypot(rows[i].standard_stderr, rows[j].standard_stderr);
  v.require(decreasing, "standard accuracy weakly decreasing in t* (2-stderr tolerance)");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].robust_acc > rows[best].robust_acc) best = i;
  const auto beats = [&](std::size_t e) {
    return rows[best].robust_acc > rows[e].robust_acc + 2.0 * std::hypot(rows[best].robust_stderr, rows[e].robust_stderr);
  };
  const bool interior = best != 0 && best + 1 != rows.size() && beats(0) && beats(rows.size() - 1);
  v.require(interior, "robust argmax at t*=" + g(rows[best].t_star) + " is interior and beats both ends by > 2 stderr");
  return v;
}

Verdict criterion8() {
  Verdict v;
  auto cfg = ExperimentConfig::load(SDEPURE_TOY_CONFIG);
  cfg.eot_sweep = {1, 2, 5, 10, 20};
  const auto rows = run_eot_sweep(StudyContext::build(cfg));
  std::string table;
  for (const auto& r : rows) table += " K=" + std::to_string(r.eot_k) + ":" + fmt("%.4f", r.robust_acc);
  v.info("t*=" + g(cfg.purifier.t_star) + table);
  const auto& k1 = rows.front();
  const auto& k20 = rows.back();
  v.require(k20.eot_k == 20 && k20.robust_acc <= k1.robust_acc + 2.0 * std::hypot(k1.robust_stderr, k20.robust_stderr),
            "robust(K=20)=" + g(k20.robust_acc) + " <= robust(K=1)=" + g(k1.robust_acc) + " + 2 stderr");

  cfg.purifier.t_star = 0.0;
  cfg.purifier.jitter = 0.0;
  cfg.n_repeats = 2;
  const auto det = run_eot_sweep(StudyContext::build(cfg));
  bool invariant = true;
  for (const auto& r : det) invariant = invariant && r.robust_acc == det.front().robust_acc && r.robust_stderr == 0.0;
  v.require(invariant, "t*=0 robust accuracy identical for every K: " + g(det.front().robust_acc));
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Verdict criterion9() {
  Verdict v;
  const fs::path root = fs::temp_directory_path() / ("sdepure_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path conf = root / "small.conf";
  std::ofstream(conf) << "dataset_n = 200\n"
                         "dataset_mean = 1, 0.1\n"
                         "dataset_std = 0.5, 0.02\n"
                         "eval_n = 10\n"
                         "score_steps = 200\n"
                         "score_hidden = 16\n"
                         "classifier_steps = 1000\n"
                         "classifier_lr = 1\n"
                         "dt = 2e-2\n"
                         "attack_eps = 0.2\n"
                         "attack_step_size = 0.05\n"
                         "attack_steps = 3\n"
                         "attack_eot = 2\n"
                         "n_repeats = 2\n"
                         "tstar_sweep = 0, 0.1\n"
                         "eot_sweep = 1, 2\n"
                         "gradcheck_dt = 1e-2, 1e-3\n"
                         "kl_pairs = 3\n"
                         "kl_grid = 50\n"
                         "bound_trials = 300\n"
                         "seed = 91\n";
  const std::vector<std::string> commands{"train-score", "train-clf", "purify",   "attack",    "gradcheck",
                                          "klcheck",     "boundcheck", "sweep-tstar", "sweep-eot", "compare-samplers"};
  for (const auto& cmd : commands) {
    bool ran = true;
    std::vector<fs::path> dirs;
    for (const char* run : {"a", "b"}) {
      const fs::path dir = root / run / cmd;
      dirs.push_back(dir);
      // the second run uses a different worker count; results must not depend on it
      const std::string line = std::string("\"") + SDEPURE_CLI + "\" " + cmd + " -c \"" + conf.string() + "\" -o \"" +
                               dir.string() + "\"" + (run[0] == 'b' ? " -j 3" : "") + " > \"" +
                               (root / (std::string(run) + "_" + cmd + ".log")).string() + "\" 2>&1";
      ran = ran && std::system(line.c_str()) == 0;
    }
    std::set<std::string> names;
    for (const auto& d : dirs)
      if (fs::exists(d))
        for (const auto& e : fs::directory_iterator(d))
          if (e.path().extension() == ".csv") names.insert(e.path().filename().string());
    bool same = ran && !names.empty();
    for (const auto& n : names) {
      const fs::path a = dirs[0] / n, b = dirs[1] / n;
      same = same && fs::exists(a) && fs::exists(b) && slurp(a) == slurp(b) && !slurp(a).empty();
    }
    std::string list;
    for (const auto& n : names) list += " " + n;
    v.require(same, cmd + (ran ? "" : " (non-zero exit)") + " byte-identical:" + list);
  }
  fs::remove_all(root);
  return v;
}

Verdict criterion10() {
  Verdict v;
  DatasetSpec spec;
  spec.mean = (Vec(2) << 1.0, 0.1).finished();
  spec.std = (Vec(2) << 0.5, 0.02).finished();
  spec.n = 400;
  const ToyDataset data = generate_dataset(spec, 101);
  ClassifierOptions co;
  co.steps = 2000;
  co.lr = 1.0;
  co.seed = 102;
  const ToyClassifier clf = train_classifier(data, co).model;
  const NoiseSchedule s;
  auto score = std::make_shared<MixtureScore>(
      std::vector<MixtureScore::Component>{{0.5, spec.mean, spec.std.cwiseAbs2()}, {0.5, -spec.mean, spec.std.cwiseAbs2()}}, s);

  std::size_t points = 0, violations = 0, report_checks = 0, report_violations = 0;
  for (Norm norm : {Norm::linf, Norm::l2}) {
    for (Sampler sampler : {Sampler::reverse_sde, Sampler::vp_ode, Sampler::ld_sde}) {
      PurifierConfig pc;
      pc.t_star = 0.1;
      pc.dt = 1e-2;
      pc.sampler = sampler;
      const Purifier purifier(s, score, pc);
      for (bool defended : {true, false}) {
        const Pipeline pipe{&clf, defended ? &purifier : nullptr};
        AttackConfig ac;
        ac.norm = norm;
        ac.epsilon = norm == Norm::linf ? 0.2 : 0.5;
        ac.step_size = norm == Norm::linf ? 0.1 : 0.3;
        ac.n_iters = 5;
        ac.eot_k = 2;
        for (std::size_t i = 0; i < 40; ++i) {
          ac.seed = derive_seed(103, "attack", points);
          const Vec& x = data.points[i];
          const Vec adv = pgd_attack(x, data.labels[i], pipe, ac).adversarial;
          const Vec d = adv - x;
          ++points;
          if (norm == Norm::linf) {
            // exact: no slack at all
            violations += d.cwiseAbs().maxCoeff() > ac.epsilon;
          } else {
            double sq = 0.0;
            for (Eigen::Index k = 0; k < d.size(); ++k) sq += d[k] * d[k];
            violations += std::sqrt(sq) > ac.epsilon + 1e-9;
          }
        }
        const auto rep = evaluate_robustness(clf, defended ? &purifier : nullptr,
                                             std::vector<Vec>(data.points.begin(), data.points.begin() + 10),
                                             std::vector<int>(data.labels.begin(), data.labels.begin() + 10), ac, 2, 104);
        report_checks += rep.budget_checks;
        report_violations += rep.budget_violations;
      }
    }
  }
  v.require(violations == 0, std::to_string(points - violations) + "/" + std::to_string(points) +
                                 " emitted adversarial points inside their budget (linf exact, l2 + 1e-9)");
  v.require(report_checks > 0 && report_violations == 0,
            std::to_string(report_checks) + " iterate budget checks during evaluation, " +
                std::to_string(report_violations) + " violations");
  return v;
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;  // <= 0: no runtime limit
  std::function<Verdict()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "adjoint vs analytic denoising gradient", 60, criterion1},
      {2, "adjoint vs central differences on an MLP-score pipeline", 60, criterion2},
      {3, "KL monotone decay and de Bruijn identity", 10, criterion3},
      {4, "distance bound violation rate", 300, criterion4},
      {5, "forward diffusion moments", 10, criterion5},
      {6, "sde and ode share marginals", 60, criterion6},
      {7, "standard/robust trade-off over t*", 900, criterion7},
      {8, "EOT saturation and deterministic K-invariance", 600, criterion8},
      {9, "CLI determinism", 0, criterion9},
      {10, "attack budget invariants", 0, criterion10},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_seconds > 0) v.require(secs < c.limit_seconds, "runtime " + fmt("%.1f", secs) + " s < " + g(c.limit_seconds) + " s");
    for (const auto& n : v.notes) std::printf("    %s\n", n.c_str());
    std::printf("criterion %d: %s  %s (%.1f s)\n", c.id, v.pass ? "PASS" : "FAIL", c.name, secs);
    std::fflush(stdout);
    failed += !v.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
