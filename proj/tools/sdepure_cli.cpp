// Command-line runner for the purification studies.
#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "sdepure/adjoint.hpp"
#include "sdepure/attack.hpp"
#include "sdepure/classifier.hpp"
#include "sdepure/experiment.hpp"
#include "sdepure/parallel.hpp"
#include "sdepure/purifier.hpp"
#include "sdepure/random.hpp"
#include "sdepure/score.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace sdepure;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

struct Globals {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 0;
  bool time = false;
};

/// Flag value that, when given, is forwarded to ExperimentConfig::set.
struct Override {
  std::string key;
  std::string value;
};

class Session {
 public:
  Session(const Globals& g, const std::vector<Override>& flags) : globals_(g) {
    config_ = g.config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(g.config_path);
    for (const auto& kv : g.overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      config_.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    for (const auto& f : flags) config_.set(f.key, f.value);
    if (g.seed) config_.seed = *g.seed;
    if (!g.out_dir.empty()) config_.out_dir = g.out_dir;
    config_.purifier.validate();
    config_.attack.validate();
    config_.schedule();
    fs::create_directories(config_.out_dir);
  }

  ExperimentConfig& config() { return config_; }
  std::size_t workers() const { return globals_.workers ? globals_.workers : default_workers(); }
  bool timed() const { return globals_.time; }

  fs::path path(const std::string& name) const { return fs::path(config_.out_dir) / name; }

  void write(const std::string& name, const std::string& body) const {
    std::ofstream out(path(name), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path(name).string() + "'");
    out << body;
    std::cout << "wrote " << path(name).string() << "\n";
  }

  void write_json(const std::string& name, json j) const {
    j["config_hash"] = config_.hash();
    j["seed"] = config_.seed;
    write(name, j.dump(2) + "\n");
  }

 private:
  Globals globals_;
  ExperimentConfig config_;
};

/// Registers a string flag that is applied as a config key when present.
void forward(CLI::App* cmd, std::vector<Override>& sink, const std::string& flag, const std::string& key,
             const std::string& help) {
  cmd->add_option_function<std::string>(
      flag, [&sink, key](const std::string& v) { sink.push_back({key, v}); }, help);
}

std::vector<Vec> read_points_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open points file '" + path + "'");
  std::vector<Vec> points;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      if (line.rfind("x_0", 0) == 0) continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!points.empty() && static_cast<Eigen::Index>(row.size()) != points.front().size()) {
      throw ConfigError("points file '" + path + "': ragged row");
    }
    points.push_back(Eigen::Map<Vec>(row.data(), static_cast<Eigen::Index>(row.size())));
  }
  return points;
}

std::string points_csv(const ExperimentConfig& config, const std::vector<Vec>& points) {
  std::string out = csv_comment(config);
  const Eigen::Index d = points.empty() ? 0 : points.front().size();
  for (Eigen::Index i = 0; i < d; ++i) out += (i ? ",x_" : "x_") + std::to_string(i);
  out += "\n";
  for (const auto& p : points) {
    for (Eigen::Index i = 0; i < d; ++i) out += (i ? "," : "") + format_number(p[i]);
    out += "\n";
  }
  return out;
}

json robustness_json(const RobustnessReport& r) {
  return {{"standard_acc", r.standard_acc},     {"standard_stderr", r.standard_stderr},
          {"robust_acc", r.robust_acc},         {"stderr", r.robust_stderr},
          {"budget_checks", r.budget_checks},   {"budget_violations", r.budget_violations}};
}

int cmd_train_score(Session& s, const std::string& model_name) {
  auto& cfg = s.config();
  DsmOptions opts = cfg.dsm;
  opts.seed = derive_seed(cfg.seed, "dsm");
  const auto res = dsm_train(training_data(cfg).points, cfg.schedule(), opts);
  res.model.save(s.path(model_name).string());
  std::cout << "wrote " << s.path(model_name).string() << "\n";
  s.write("train_score.csv", csv_comment(cfg) + "steps,initial_loss,final_loss\n" + std::to_string(opts.steps) + "," +
                                 format_number(res.initial_loss) + "," + format_number(res.final_loss) + "\n");
  s.write_json("train_score.json", {{"initial_loss", res.initial_loss}, {"final_loss", res.final_loss},
                                    {"parameters", res.model.net().parameter_count()}});
  return 0;
}

int cmd_train_clf(Session& s, const std::string& model_name) {
  auto& cfg = s.config();
  ClassifierOptions opts = cfg.classifier;
  opts.seed = derive_seed(cfg.seed, "classifier");
  const auto res = train_classifier(training_data(cfg), opts);
  res.model.save(s.path(model_name).string());
  std::cout << "wrote " << s.path(model_name).string() << "\n";
  s.write("train_clf.csv", csv_comment(cfg) + "kind,train_accuracy,final_loss\n" + to_string(opts.kind) + "," +
                               format_number(res.train_accuracy) + "," + format_number(res.final_loss) + "\n");
  s.write_json("train_clf.json", {{"train_accuracy", res.train_accuracy}, {"final_loss", res.final_loss}});
  return 0;
}

int cmd_purify(Session& s, const std::string& in_path, const std::string& out_name) {
  auto& cfg = s.config();
  const std::vector<Vec> points = in_path.empty() ? evaluation_data(cfg).points : read_points_csv(in_path);
  const Purifier purifier = build_purifier(cfg, build_score(cfg), cfg.purifier);
  std::vector<Vec> purified(points.size());
  const std::uint64_t seed = derive_seed(cfg.seed, "purify");
  parallel_for(points.size(), s.workers(),
               [&](std::size_t i) { purified[i] = purifier.purify(points[i], derive_seed(seed, "sample", i)).purified; });
  s.write(out_name, points_csv(cfg, purified));
  return 0;
}

int cmd_attack(Session& s, const std::string& defense_config, bool undefended, bool compare_modes) {
  auto& cfg = s.config();
  if (!defense_config.empty()) {
    const ExperimentConfig defense = ExperimentConfig::load(defense_config);
    cfg.purifier = defense.purifier;
  }
  const StudyContext ctx = StudyContext::build(cfg, s.workers());
  std::optional<Purifier> purifier;
  if (!undefended) purifier.emplace(build_purifier(cfg, ctx.score, cfg.purifier));
  const Purifier* defense = purifier ? &*purifier : nullptr;

  AttackConfig attack = cfg.attack;
  attack.seed = derive_seed(cfg.seed, "attack");
  const std::uint64_t seed = derive_seed(cfg.seed, "attack-eval");
  const RobustnessReport rep = evaluate_robustness(*ctx.classifier, defense, ctx.eval.points, ctx.eval.labels, attack,
                                                   cfg.n_repeats, seed, s.workers());

  std::string csv = csv_comment(cfg) + "index,clean_pred,adv_pred,success,final_loss\n";
  for (const auto& o : rep.first_repeat) {
    csv += std::to_string(o.index) + "," + std::to_string(o.clean_pred) + "," + std::to_string(o.adv_pred) + "," +
           (o.success ? "1" : "0") + "," + format_number(o.final_loss) + "\n";
  }
  s.write("attack.csv", csv);

  json summary = robustness_json(rep);
  summary["mode"] = to_string(attack.mode);
  summary["defended"] = !undefended;
  if (compare_modes) {
    AttackConfig other = attack;
    other.mode = attack.mode == GradientMode::full_adjoint ? GradientMode::bpda_identity : GradientMode::full_adjoint;
    const RobustnessReport rep2 = evaluate_robustness(*ctx.classifier, defense, ctx.eval.points, ctx.eval.labels, other,
                                                      cfg.n_repeats, seed, s.workers());
    const double adjoint_acc = attack.mode == GradientMode::full_adjoint ? rep.robust_acc : rep2.robust_acc;
    const double bpda_acc = attack.mode == GradientMode::full_adjoint ? rep2.robust_acc : rep.robust_acc;
    summary["compare_modes"] = {{"adjoint_robust_acc", adjoint_acc},
                                {"bpda_robust_acc", bpda_acc},
                                {"adjoint_at_least_as_strong", adjoint_acc <= bpda_acc}};
  }
  s.write_json("attack.json", summary);
  if (rep.budget_violations > 0) {
    std::cerr << "error: " << rep.budget_violations << " adversarial points exceed the budget\n";
    return 1;
  }
  return 0;
}

int cmd_sweep_tstar(Session& s) {
  const StudyContext ctx = StudyContext::build(s.config(), s.workers());
  const auto rows = run_tradeoff_sweep(ctx, s.timed());
  s.write("tradeoff.csv", tradeoff_csv(ctx.config, rows));
  json j = json::array();
  for (const auto& r : rows) {
    json row = {{"t_star", r.t_star}, {"standard_acc", r.standard_acc}, {"robust_acc", r.robust_acc}};
    if (s.timed()) row["seconds_per_purification"] = r.seconds_per_purification;
    j.push_back(row);
  }
  s.write_json("tradeoff.json", {{"rows", j}});
  return 0;
}

int cmd_sweep_eot(Session& s) {
  const StudyContext ctx = StudyContext::build(s.config(), s.workers());
  const auto rows = run_eot_sweep(ctx);
  s.write("eot.csv", eot_csv(ctx.config, rows));
  json j = json::array();
  for (const auto& r : rows) j.push_back({{"eot_k", r.eot_k}, {"robust_acc", r.robust_acc}, {"stderr", r.robust_stderr}});
  s.write_json("eot.json", {{"rows", j}});
  return 0;
}

int cmd_compare_samplers(Session& s) {
  const StudyContext ctx = StudyContext::build(s.config(), s.workers());
  const auto rows = run_sampler_comparison(ctx);
  s.write("samplers.csv", sampler_csv(ctx.config, rows));
  json j = json::array();
  for (const auto& r : rows) {
    j.push_back({{"sampler", r.sampler}, {"standard_acc", r.standard_acc}, {"robust_acc", r.robust_acc},
                 {"stderr", r.robust_stderr}});
  }
  s.write_json("samplers.json", {{"rows", j}});
  return 0;
}

int cmd_gradcheck(Session& s) {
  s.write("gradcheck.csv", gradcheck_csv(s.config()));
  return 0;
}

int cmd_klcheck(Session& s) {
  const auto rows = run_kl_check(s.config());
  s.write("klcheck.csv", kl_csv(s.config(), rows));
  return 0;
}

int cmd_boundcheck(Session& s) {
  const auto rows = run_bound_check(s.config());
  s.write("boundcheck.csv", bound_csv(s.config(), rows));
  bool ok = true;
  for (const auto& r : rows) ok = ok && r.violation_rate <= r.tolerance;
  s.write_json("boundcheck.json", {{"all_within_tolerance", ok}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion purification toolkit: train, purify, attack and check."};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("-c,--config", g.config_path, "key = value config file");
  app.add_option("-o,--out", g.out_dir, "output directory (overrides out_dir)");
  app.add_option("--set", g.overrides, "extra key=value overrides, applied after the file");
  app.add_option_function<std::uint64_t>("--seed", [&g](std::uint64_t v) { g.seed = v; }, "master seed");
  app.add_option("-j,--workers", g.workers, "worker threads (default: available parallelism)");
  app.add_flag("--time", g.time, "report wall time per purification");

  std::vector<Override> flags;
  std::function<int(Session&)> action;

  std::string score_name = "score.bin";
  auto* train_score = app.add_subcommand("train-score", "fit an MLP score by denoising score matching");
  train_score->add_option("--model", score_name, "file name under --out");
  forward(train_score, flags, "--steps", "score_steps", "SGD steps");
  train_score->callback([&] { action = [&](Session& s) { return cmd_train_score(s, score_name); }; });

  std::string clf_name = "classifier.bin";
  auto* train_clf = app.add_subcommand("train-clf", "train the toy classifier");
  train_clf->add_option("--model", clf_name, "file name under --out");
  forward(train_clf, flags, "--kind", "classifier_kind", "linear | small-mlp");
  train_clf->callback([&] { action = [&](Session& s) { return cmd_train_clf(s, clf_name); }; });

  std::string in_path, out_name = "purified.csv";
  auto* purify = app.add_subcommand("purify", "diffuse then denoise a batch of points");
  forward(purify, flags, "--t-star", "t_star", "diffusion time");
  forward(purify, flags, "--jitter", "jitter", "half-width of the random t* window");
  forward(purify, flags, "--sampler", "sampler", "sde | ode | ld");
  forward(purify, flags, "--sigma2", "ld_sigma2", "ld: attraction variance");
  forward(purify, flags, "--lambda", "ld_lambda", "ld: step rate");
  forward(purify, flags, "--eta", "ld_eta", "ld: noise scale");
  purify->add_option("--in", in_path, "points CSV (default: the evaluation split)");
  purify->add_option("--out-file", out_name, "output CSV name under --out");
  purify->callback([&] { action = [&](Session& s) { return cmd_purify(s, in_path, out_name); }; });

  std::string defense_config;
  bool undefended = false, compare_modes = false;
  auto* attack = app.add_subcommand("attack", "PGD-EOT against the (defended) classifier");
  forward(attack, flags, "--norm", "attack_norm", "linf | l2");
  forward(attack, flags, "--eps", "attack_eps", "budget");
  forward(attack, flags, "--steps", "attack_steps", "PGD iterations");
  forward(attack, flags, "--step-size", "attack_step_size", "PGD step size");
  forward(attack, flags, "--eot", "attack_eot", "EOT samples per gradient");
  forward(attack, flags, "--mode", "attack_mode", "adjoint | bpda");
  attack->add_option("--defense-config", defense_config, "config file whose purifier settings define the defense");
  attack->add_flag("--undefended", undefended, "attack the bare classifier");
  attack->add_flag("--compare-modes", compare_modes, "also run the other gradient mode and report which is stronger");
  attack->callback([&] { action = [&](Session& s) { return cmd_attack(s, defense_config, undefended, compare_modes); }; });

  auto* gradcheck = app.add_subcommand("gradcheck", "adjoint gradient vs the Gaussian closed form");
  forward(gradcheck, flags, "--sigma0sq", "gradcheck_sigma0", "comma list of data variances");
  forward(gradcheck, flags, "--dt", "gradcheck_dt", "comma list of step sizes");
  gradcheck->callback([&] { action = cmd_gradcheck; });

  auto* klcheck = app.add_subcommand("klcheck", "KL and Fisher divergence along the diffusion");
  klcheck->callback([&] { action = cmd_klcheck; });

  auto* boundcheck = app.add_subcommand("boundcheck", "empirical violation rate of the distance bound");
  boundcheck->callback([&] { action = cmd_boundcheck; });

  auto* sweep_tstar = app.add_subcommand("sweep-tstar", "standard/robust accuracy across t*");
  forward(sweep_tstar, flags, "--t-star-list", "tstar_sweep", "comma list of t*");
  sweep_tstar->callback([&] { action = cmd_sweep_tstar; });

  auto* sweep_eot = app.add_subcommand("sweep-eot", "robust accuracy across EOT sample counts");
  forward(sweep_eot, flags, "--eot-list", "eot_sweep", "comma list of K");
  sweep_eot->callback([&] { action = cmd_sweep_eot; });

  auto* samplers = app.add_subcommand("compare-samplers", "sde vs ode vs ld under one attack");
  forward(samplers, flags, "--samplers", "sampler_list", "comma list of samplers");
  samplers->callback([&] { action = cmd_compare_samplers; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    Session session(g, flags);
    return action(session);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ContractError& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "numerical divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const TrainingDivergence& e) {
    std::cerr << "numerical divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
