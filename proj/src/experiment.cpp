#include "sdepure/experiment.hpp"

#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "sdepure/random.hpp"
#include "sdepure/theory.hpp"

namespace sdepure {

std::string format_number(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", value);
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const unsigned long long u = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a nonnegative integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(to_double(key, item));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(v)) out.push_back(static_cast<std::size_t>(to_uint(key, item)));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

Vec to_vec(const std::string& key, const std::string& v) {
  const auto d = to_doubles(key, v);
  return Eigen::Map<const Vec>(d.data(), static_cast<Eigen::Index>(d.size()));
}

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += fmt(items[i]);
  }
  return out;
}

std::string join_vec(const Vec& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += exact(v[i]);
  }
  return out;
}

struct KeyHandler {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define SP_DOUBLE(name, field)                                                                  \
  {name, {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.field = to_double(k, v); }, \
          [](const ExperimentConfig& c) { return exact(c.field); }}}
#define SP_SIZE(name, field)                                                                    \
  {name, {[](ExperimentConfig& c, const std::string& k, const std::string& v) {                 \
            c.field = static_cast<std::size_t>(to_uint(k, v));                                  \
          },                                                                                    \
          [](const ExperimentConfig& c) { return std::to_string(c.field); }}}
#define SP_STRING(name, field)                                                                  \
  {name, {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.field = v; },  \
          [](const ExperimentConfig& c) { return c.field; }}}
#define SP_DOUBLES(name, field)                                                                 \
  {name, {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.field = to_doubles(k, v); }, \
          [](const ExperimentConfig& c) { return join(c.field, exact); }}}
#define SP_SIZES(name, field)                                                                   \
  {name, {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.field = to_sizes(k, v); }, \
          [](const ExperimentConfig& c) { return join(c.field, [](std::size_t s) { return std::to_string(s); }); }}}

const std::map<std::string, KeyHandler>& handlers() {
  static const std::map<std::string, KeyHandler> table = {
      SP_DOUBLE("beta_min", beta_min),
      SP_DOUBLE("beta_max", beta_max),
      {"dataset",
       {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.dataset.generator = parse_generator(v); },
        [](const ExperimentConfig& c) { return to_string(c.dataset.generator); }}},
      SP_SIZE("dataset_n", dataset.n),
      {"dataset_mean",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.dataset.mean = to_vec(k, v); },
        [](const ExperimentConfig& c) { return join_vec(c.dataset.mean); }}},
      {"dataset_std",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.dataset.std = to_vec(k, v); },
        [](const ExperimentConfig& c) { return join_vec(c.dataset.std); }}},
      SP_DOUBLE("dataset_noise", dataset.noise),
      SP_SIZE("eval_n", eval_n),
      SP_STRING("score_kind", score_kind),
      SP_STRING("score_path", score_path),
      SP_SIZES("score_hidden", dsm.hidden),
      {"score_activation",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
          if (v == "tanh") c.dsm.activation = Activation::tanh;
          else if (v == "silu") c.dsm.activation = Activation::silu;
          else throw ConfigError("config key '" + k + "': expected tanh or silu");
        },
        [](const ExperimentConfig& c) { return std::string(c.dsm.activation == Activation::tanh ? "tanh" : "silu"); }}},
      SP_SIZE("score_steps", dsm.steps),
      SP_SIZE("score_batch", dsm.batch),
      SP_DOUBLE("score_lr", dsm.lr),
      SP_DOUBLE("score_t_min", dsm.t_min),
      {"score_weight",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
          if (v == "transition-variance") c.dsm.weight = DsmWeight::transition_variance;
          else if (v == "uniform") c.dsm.weight = DsmWeight::uniform;
          else throw ConfigError("config key '" + k + "': expected transition-variance or uniform");
        },
        [](const ExperimentConfig& c) {
          return std::string(c.dsm.weight == DsmWeight::transition_variance ? "transition-variance" : "uniform");
        }}},
      SP_STRING("classifier_path", classifier_path),
      {"classifier_kind",
       {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.classifier.kind = parse_classifier_kind(v); },
        [](const ExperimentConfig& c) { return to_string(c.classifier.kind); }}},
      SP_SIZES("classifier_hidden", classifier.hidden),
      SP_SIZE("classifier_steps", classifier.steps),
      SP_DOUBLE("classifier_lr", classifier.lr),
      SP_SIZE("classifier_batch", classifier.batch),
      SP_DOUBLE("t_star", purifier.t_star),
      SP_DOUBLE("jitter", purifier.jitter),
      {"sampler",
       {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.purifier.sampler = parse_sampler(v); },
        [](const ExperimentConfig& c) { return to_string(c.purifier.sampler); }}},
      SP_DOUBLE("dt", purifier.dt),
      SP_DOUBLE("ld_sigma2", purifier.ld.sigma2),
      SP_DOUBLE("ld_lambda", purifier.ld.lambda),
      SP_DOUBLE("ld_eta", purifier.ld.eta),
      {"noise_storage",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
          if (v == "recorded") c.purifier.storage = NoiseStorage::recorded;
          else if (v == "regenerated") c.purifier.storage = NoiseStorage::regenerated;
          else throw ConfigError("config key '" + k + "': expected recorded or regenerated");
        },
        [](const ExperimentConfig& c) {
          return std::string(c.purifier.storage == NoiseStorage::recorded ? "recorded" : "regenerated");
        }}},
      {"attack_norm",
       {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.attack.norm = parse_norm(v); },
        [](const ExperimentConfig& c) { return to_string(c.attack.norm); }}},
      SP_DOUBLE("attack_eps", attack.epsilon),
      SP_DOUBLE("attack_step_size", attack.step_size),
      SP_SIZE("attack_steps", attack.n_iters),
      SP_SIZE("attack_eot", attack.eot_k),
      {"attack_mode",
       {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.attack.mode = parse_gradient_mode(v); },
        [](const ExperimentConfig& c) { return to_string(c.attack.mode); }}},
      {"attack_random_start",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.attack.random_start = to_bool(k, v); },
        [](const ExperimentConfig& c) { return std::string(c.attack.random_start ? "true" : "false"); }}},
      SP_SIZE("n_repeats", n_repeats),
      SP_DOUBLES("tstar_sweep", tstar_sweep),
      SP_SIZES("eot_sweep", eot_sweep),
      {"sampler_list",
       {[](ExperimentConfig& c, const std::string&, const std::string& v) {
          c.sampler_list = split_list(v);
          for (const auto& s : c.sampler_list) parse_sampler(s);
        },
        [](const ExperimentConfig& c) { return join(c.sampler_list, [](const std::string& s) { return s; }); }}},
      SP_DOUBLES("gradcheck_sigma0", gradcheck_sigma0),
      SP_DOUBLES("gradcheck_dt", gradcheck_dt),
      SP_DOUBLE("gradcheck_t_star", gradcheck_t_star),
      SP_SIZE("kl_pairs", kl_pairs),
      SP_SIZE("kl_grid", kl_grid),
      SP_SIZES("bound_dims", bound_dims),
      SP_DOUBLES("bound_t_star", bound_t_star),
      SP_DOUBLES("bound_delta", bound_delta),
      SP_SIZE("bound_trials", bound_trials),
      SP_DOUBLE("bound_sigma0_sq", bound_sigma0_sq),
      SP_DOUBLE("bound_eps_norm", bound_eps_norm),
      SP_DOUBLE("bound_truncation", bound_truncation),
      {"seed",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.seed = to_uint(k, v); },
        [](const ExperimentConfig& c) { return std::to_string(c.seed); }}},
      SP_STRING("out_dir", out_dir),
  };
  return table;
}

#undef SP_DOUBLE
#undef SP_SIZE
#undef SP_STRING
#undef SP_DOUBLES
#undef SP_SIZES

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const auto& table = handlers();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  try {
    it->second.set(*this, key, value);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

std::string ExperimentConfig::serialize() const {
  std::string out;
  for (const auto& [key, handler] : handlers()) {
    if (key == "out_dir") continue;  // where results go does not change them
    out += key + " = " + handler.get(*this) + "\n";
  }
  return out;
}

std::string ExperimentConfig::hash() const {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (const char ch : serialize()) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001B3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  try {
    cfg.purifier.validate();
    cfg.attack.validate();
    cfg.schedule();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string csv_comment(const ExperimentConfig& config) {
  return "# config_hash=" + config.hash() + " seed=" + std::to_string(config.seed) + "\n";
}

ToyDataset training_data(const ExperimentConfig& config) {
  return generate_dataset(config.dataset, derive_seed(config.seed, "train-data"));
}

ToyDataset evaluation_data(const ExperimentConfig& config) {
  DatasetSpec spec = config.dataset;
  spec.n = config.eval_n;
  return generate_dataset(spec, derive_seed(config.seed, "eval-data"));
}

std::shared_ptr<const ScoreModel> build_score(const ExperimentConfig& config) {
  const NoiseSchedule schedule = config.schedule();
  if (config.score_kind == "mixture") {
    if (config.dataset.generator != DatasetGenerator::two_gaussians) {
      throw ConfigError("score_kind = mixture needs dataset = two-gaussians; use score_kind = mlp otherwise");
    }
    const Vec var = config.dataset.std.cwiseProduct(config.dataset.std);
    return std::make_shared<MixtureScore>(
        std::vector<MixtureScore::Component>{{0.5, -config.dataset.mean, var}, {0.5, config.dataset.mean, var}}, schedule);
  }
  if (config.score_kind == "mlp") {
    if (!config.score_path.empty()) {
      if (!std::filesystem::exists(config.score_path)) {
        throw std::runtime_error("score model '" + config.score_path +
                                 "' not found; run `sdepure train-score` first or clear score_path to train inline");
      }
      return std::make_shared<MlpScore>(MlpScore::load(config.score_path));
    }
    DsmOptions opts = config.dsm;
    opts.seed = derive_seed(config.seed, "dsm");
    return std::make_shared<MlpScore>(dsm_train(training_data(config).points, schedule, opts).model);
  }
  throw ConfigError("unknown score_kind '" + config.score_kind + "' (expected mixture or mlp)");
}

ToyClassifier build_classifier(const ExperimentConfig& config) {
  if (!config.classifier_path.empty()) {
    if (!std::filesystem::exists(config.classifier_path)) {
      throw std::runtime_error("classifier '" + config.classifier_path +
                               "' not found; run `sdepure train-clf` first or clear classifier_path to train inline");
    }
    return ToyClassifier::load(config.classifier_path);
  }
  ClassifierOptions opts = config.classifier;
  opts.seed = derive_seed(config.seed, "classifier");
  return train_classifier(training_data(config), opts).model;
}

Purifier build_purifier(const ExperimentConfig& config, std::shared_ptr<const ScoreModel> score,
                        const PurifierConfig& purifier_config) {
  return Purifier(config.schedule(), std::move(score), purifier_config);
}

StudyContext StudyContext::build(const ExperimentConfig& config, std::size_t workers) {
  StudyContext ctx;
  ctx.config = config;
  ctx.score = build_score(config);
  ctx.classifier = std::make_shared<ToyClassifier>(build_classifier(config));
  ctx.eval = evaluation_data(config);
  ctx.workers = workers;
  return ctx;
}

namespace {

AttackConfig study_attack(const ExperimentConfig& config) {
  AttackConfig a = config.attack;
  a.seed = derive_seed(config.seed, "attack");
  return a;
}

PurifierConfig at_t_star(PurifierConfig cfg, double t_star) {
  cfg.t_star = t_star;
  cfg.jitter = std::min({cfg.jitter, t_star, 1.0 - t_star});
  return cfg;
}

}  // namespace

std::vector<TradeoffRow> run_tradeoff_sweep(const StudyContext& ctx, bool measure_time) {
  const ExperimentConfig& config = ctx.config;
  std::vector<TradeoffRow> rows;
  for (std::size_t j = 0; j < config.tstar_sweep.size(); ++j) {
    const double t_star = config.tstar_sweep[j];
    const Purifier purifier = build_purifier(config, ctx.score, at_t_star(config.purifier, t_star));
    const std::uint64_t seed = derive_seed(config.seed, "tradeoff", j);
    const RobustnessReport rep = evaluate_robustness(*ctx.classifier, &purifier, ctx.eval.points, ctx.eval.labels,
                                                     study_attack(config), config.n_repeats, seed, ctx.workers);
    TradeoffRow row{t_star, rep.standard_acc, rep.standard_stderr, rep.robust_acc, rep.robust_stderr, 0.0};
    if (measure_time) {
      const auto start = std::chrono::steady_clock::now();
      for (std::size_t i = 0; i < ctx.eval.size(); ++i) purifier.purify(ctx.eval.points[i], derive_seed(seed, "timing", i));
      const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
      row.seconds_per_purification = elapsed.count() / static_cast<double>(ctx.eval.size());
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<EotRow> run_eot_sweep(const StudyContext& ctx) {
  const ExperimentConfig& config = ctx.config;
  const Purifier purifier = build_purifier(config, ctx.score, config.purifier);
  std::vector<EotRow> rows;
  for (std::size_t j = 0; j < config.eot_sweep.size(); ++j) {
    AttackConfig attack = study_attack(config);
    attack.eot_k = config.eot_sweep[j];
    // The same seed for every K: only the averaging differs between rows.
    const RobustnessReport rep = evaluate_robustness(*ctx.classifier, &purifier, ctx.eval.points, ctx.eval.labels, attack,
                                                     config.n_repeats, derive_seed(config.seed, "eot-sweep"), ctx.workers);
    rows.push_back({attack.eot_k, rep.robust_acc, rep.robust_stderr});
  }
  return rows;
}

std::vector<SamplerRow> run_sampler_comparison(const StudyContext& ctx) {
  const ExperimentConfig& config = ctx.config;
  std::vector<SamplerRow> rows;
  for (const auto& name : config.sampler_list) {
    PurifierConfig pc = config.purifier;
    pc.sampler = parse_sampler(name);
    const Purifier purifier = build_purifier(config, ctx.score, pc);
    const RobustnessReport rep = evaluate_robustness(*ctx.classifier, &purifier, ctx.eval.points, ctx.eval.labels,
                                                     study_attack(config), config.n_repeats,
                                                     derive_seed(config.seed, "samplers"), ctx.workers);
    rows.push_back({to_string(pc.sampler), rep.standard_acc, rep.standard_stderr, rep.robust_acc, rep.robust_stderr});
  }
  return rows;
}

std::string tradeoff_csv(const ExperimentConfig& config, const std::vector<TradeoffRow>& rows) {
  std::string out = csv_comment(config) + "t_star,standard_acc,standard_stderr,robust_acc,robust_stderr\n";
  for (const auto& r : rows) {
    out += format_number(r.t_star) + "," + format_number(r.standard_acc) + "," + format_number(r.standard_stderr) + "," +
           format_number(r.robust_acc) + "," + format_number(r.robust_stderr) + "\n";
  }
  return out;
}

std::string eot_csv(const ExperimentConfig& config, const std::vector<EotRow>& rows) {
  std::string out = csv_comment(config) + "eot_k,robust_acc,stderr\n";
  for (const auto& r : rows) {
    out += std::to_string(r.eot_k) + "," + format_number(r.robust_acc) + "," + format_number(r.robust_stderr) + "\n";
  }
  return out;
}

std::string sampler_csv(const ExperimentConfig& config, const std::vector<SamplerRow>& rows) {
  std::string out = csv_comment(config) + "sampler,standard_acc,standard_stderr,robust_acc,stderr\n";
  for (const auto& r : rows) {
    out += r.sampler + "," + format_number(r.standard_acc) + "," + format_number(r.standard_stderr) + "," +
           format_number(r.robust_acc) + "," + format_number(r.robust_stderr) + "\n";
  }
  return out;
}

std::vector<KlRow> run_kl_check(const ExperimentConfig& config) {
  if (config.kl_grid < 2) throw ConfigError("kl_grid must be >= 2");
  const NoiseSchedule schedule = config.schedule();
  std::vector<double> grid(config.kl_grid);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = static_cast<double>(i) / static_cast<double>(grid.size() - 1);
  Rng rng(derive_seed(config.seed, "kl-pairs"));
  std::vector<KlRow> rows;
  for (std::size_t p = 0; p < config.kl_pairs; ++p) {
    double m = rng.uniform(-2.0, 2.0);
    if (std::abs(m) < 0.05) m = m < 0 ? -0.05 : 0.05;
    const double v = rng.uniform(0.1, 2.0);
    const GaussianPair pair{{0.0, v}, {m, v}, schedule};
    const auto kl = kl_along_diffusion(pair, grid);
    const auto fisher = fisher_along_diffusion(pair, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) rows.push_back({p, m, v, grid[i], kl[i], fisher[i]});
  }
  return rows;
}

std::string kl_csv(const ExperimentConfig& config, const std::vector<KlRow>& rows) {
  std::string out = csv_comment(config) + "pair,mean_gap,variance,t,kl,fisher\n";
  for (const auto& r : rows) {
    out += std::to_string(r.pair) + "," + format_number(r.mean_gap) + "," + format_number(r.variance) + "," +
           format_number(r.t) + "," + format_number(r.kl) + "," + format_number(r.fisher) + "\n";
  }
  return out;
}

std::vector<BoundRow> run_bound_check(const ExperimentConfig& config) {
  const NoiseSchedule schedule = config.schedule();
  std::vector<BoundRow> rows;
  for (std::size_t d : config.bound_dims) {
    const GaussianScore score(Vec::Zero(static_cast<Eigen::Index>(d)), config.bound_sigma0_sq, schedule);
    // Perturbation of the configured l2 size along the first diagonal.
    const Vec eps_a = Vec::Constant(static_cast<Eigen::Index>(d), config.bound_eps_norm / std::sqrt(static_cast<double>(d)));
    for (double t_star : config.bound_t_star) {
      for (double delta : config.bound_delta) {
        BoundCheckOptions opts;
        opts.t_star = t_star;
        opts.delta = delta;
        opts.n_trials = config.bound_trials;
        opts.truncation = config.bound_truncation;
        opts.dt = config.purifier.dt;
        opts.seed = derive_seed(config.seed, "bound", d * 1000003ull + static_cast<std::uint64_t>(t_star * 1e6));
        const BoundCheckResult r = bound_check(score, eps_a, opts);
        const double n = static_cast<double>(config.bound_trials);
        rows.push_back({d, t_star, delta, config.bound_trials, r.violation_rate,
                        delta + 3.0 * std::sqrt(delta * (1.0 - delta) / n), r.perturbation_term, r.diffusion_term,
                        r.score_term, r.bound, r.mean_distance});
      }
    }
  }
  return rows;
}

std::string bound_csv(const ExperimentConfig& config, const std::vector<BoundRow>& rows) {
  std::string out = csv_comment(config) +
                    "dim,t_star,delta,n_trials,violation_rate,tolerance,perturbation_term,diffusion_term,score_term,"
                    "bound,mean_distance\n";
  for (const auto& r : rows) {
    out += std::to_string(r.dim) + "," + format_number(r.t_star) + "," + format_number(r.delta) + "," +
           std::to_string(r.n_trials) + "," + format_number(r.violation_rate) + "," + format_number(r.tolerance) + "," +
           format_number(r.perturbation_term) + "," + format_number(r.diffusion_term) + "," +
           format_number(r.score_term) + "," + format_number(r.bound) + "," + format_number(r.mean_distance) + "\n";
  }
  return out;
}

std::string gradcheck_csv(const ExperimentConfig& config) {
  const auto rows = gradcheck_study(config.schedule(), config.gradcheck_sigma0, config.gradcheck_dt,
                                    config.gradcheck_t_star, derive_seed(config.seed, "gradcheck"));
  std::string out = csv_comment(config) + "sigma0_sq,dt,phi_ana,phi_adj,rel_error\n";
  for (const auto& r : rows) {
    out += format_number(r.sigma0_sq) + "," + format_number(r.dt) + "," + format_number(r.phi_ana) + "," +
           format_number(r.phi_adj) + "," + format_number(r.rel_error) + "\n";
  }
  return out;
}

}  // namespace sdepure
