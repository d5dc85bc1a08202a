#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sdepure/attack.hpp"
#include "sdepure/classifier.hpp"
#include "sdepure/purifier.hpp"
#include "sdepure/schedule.hpp"
#include "sdepure/score.hpp"

namespace sdepure {

/// Everything an experiment needs, read from a flat `key = value` file.
/// Unknown keys are errors. See README for the key list.
struct ExperimentConfig {
  double beta_min = NoiseSchedule::kDefaultBetaMin;
  double beta_max = NoiseSchedule::kDefaultBetaMax;

  DatasetSpec dataset;
  std::size_t eval_n = 200;

  std::string score_kind = "mixture";  // mixture | mlp
  std::string score_path;              // mlp: load instead of training
  DsmOptions dsm;

  std::string classifier_path;
  ClassifierOptions classifier;

  PurifierConfig purifier;
  AttackConfig attack;
  std::size_t n_repeats = 16;

  std::vector<double> tstar_sweep{0.0, 0.05, 0.1, 0.2, 0.4, 0.8};
  std::vector<std::size_t> eot_sweep{1, 2, 5, 10, 20};
  std::vector<std::string> sampler_list{"sde", "ode", "ld"};

  std::vector<double> gradcheck_sigma0{0.01, 0.05, 0.1, 0.5, 1.0};
  std::vector<double> gradcheck_dt{1e-1, 1e-2, 1e-3, 1e-4};
  double gradcheck_t_star = 0.1;

  std::size_t kl_pairs = 10;
  std::size_t kl_grid = 1000;

  std::vector<std::size_t> bound_dims{1, 2};
  std::vector<double> bound_t_star{0.05, 0.1};
  std::vector<double> bound_delta{0.1, 0.01};
  std::size_t bound_trials = 10000;
  double bound_sigma0_sq = 0.5;
  double bound_eps_norm = 0.5;
  double bound_truncation = 6.0;

  std::uint64_t seed = 0;
  std::string out_dir = "out";

  NoiseSchedule schedule() const { return NoiseSchedule(beta_min, beta_max); }

  /// Applies one key; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Canonical `key = value` listing (sorted keys) used for hashing.
  std::string serialize() const;
  std::string hash() const;

  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::string& path);
};

/// "# config_hash=<hex> seed=<n>"
std::string csv_comment(const ExperimentConfig& config);
std::string format_number(double value);

/// Clean dataset used for training (score, classifier) and the evaluation split.
ToyDataset training_data(const ExperimentConfig& config);
ToyDataset evaluation_data(const ExperimentConfig& config);

std::shared_ptr<const ScoreModel> build_score(const ExperimentConfig& config);
ToyClassifier build_classifier(const ExperimentConfig& config);
Purifier build_purifier(const ExperimentConfig& config, std::shared_ptr<const ScoreModel> score,
                        const PurifierConfig& purifier_config);

struct TradeoffRow {
  double t_star;
  double standard_acc;
  double standard_stderr;
  double robust_acc;
  double robust_stderr;
  double seconds_per_purification;  // wall time, excluded from the CSV
};

struct EotRow {
  std::size_t eot_k;
  double robust_acc;
  double robust_stderr;
};

struct SamplerRow {
  std::string sampler;
  double standard_acc;
  double standard_stderr;
  double robust_acc;
  double robust_stderr;
};

/// Shared pieces of every attack study, built once.
struct StudyContext {
  ExperimentConfig config;
  std::shared_ptr<const ScoreModel> score;
  std::shared_ptr<const ToyClassifier> classifier;
  ToyDataset eval;
  std::size_t workers = 0;

  static StudyContext build(const ExperimentConfig& config, std::size_t workers = 0);
};

std::vector<TradeoffRow> run_tradeoff_sweep(const StudyContext& ctx, bool measure_time = false);
std::vector<EotRow> run_eot_sweep(const StudyContext& ctx);
std::vector<SamplerRow> run_sampler_comparison(const StudyContext& ctx);

std::string tradeoff_csv(const ExperimentConfig& config, const std::vector<TradeoffRow>& rows);
std::string eot_csv(const ExperimentConfig& config, const std::vector<EotRow>& rows);
std::string sampler_csv(const ExperimentConfig& config, const std::vector<SamplerRow>& rows);

struct KlRow {
  std::size_t pair;
  double mean_gap;
  double variance;
  double t;
  double kl;
  double fisher;
};

/// Random equal-variance pairs N(0, v), N(m, v) diffused along a uniform grid.
std::vector<KlRow> run_kl_check(const ExperimentConfig& config);
std::string kl_csv(const ExperimentConfig& config, const std::vector<KlRow>& rows);

struct BoundRow {
  std::size_t dim;
  double t_star;
  double delta;
  std::size_t n_trials;
  double violation_rate;
  double tolerance;  // delta + 3 sqrt(delta (1 - delta) / n)
  double perturbation_term;
  double diffusion_term;
  double score_term;
  double bound;
  double mean_distance;
};

std::vector<BoundRow> run_bound_check(const ExperimentConfig& config);
std::string bound_csv(const ExperimentConfig& config, const std::vector<BoundRow>& rows);

std::string gradcheck_csv(const ExperimentConfig& config);

}  // namespace sdepure
