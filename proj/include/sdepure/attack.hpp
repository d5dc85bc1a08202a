#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdepure/classifier.hpp"
#include "sdepure/common.hpp"
#include "sdepure/purifier.hpp"

namespace sdepure {

enum class Norm { linf, l2 };
enum class GradientMode { full_adjoint, bpda_identity };

std::string to_string(Norm norm);
Norm parse_norm(const std::string& name);
std::string to_string(GradientMode mode);
GradientMode parse_gradient_mode(const std::string& name);

struct AttackConfig {
  Norm norm = Norm::linf;
  double epsilon = 0.1;
  double step_size = 0.025;
  std::size_t n_iters = 10;
  std::size_t eot_k = 20;
  GradientMode mode = GradientMode::full_adjoint;
  bool random_start = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Classifier, optionally behind a purifier.
struct Pipeline {
  const ToyClassifier* classifier = nullptr;
  const Purifier* purifier = nullptr;

  bool stochastic() const;
};

struct EotEstimate {
  Vec grad;
  double loss;  // mean loss over the same K purifications
};

/// Mean of K pipeline gradients of the cross-entropy at `label`, each with its
/// own purification randomness derived from `seed`.
EotEstimate eot_gradient(const Vec& x, int label, const Pipeline& pipeline, std::size_t k, GradientMode mode,
                         std::uint64_t seed);

double perturbation_norm(const Vec& delta, Norm norm);

/// Projects x onto the norm ball of radius eps around center. For linf the
/// result satisfies |x_i - center_i| <= eps exactly in floating point.
Vec project(const Vec& x, const Vec& center, Norm norm, double eps);

struct AttackResult {
  Vec adversarial;
  double loss;          // EOT loss estimate at the returned point
  double clean_loss;    // EOT loss estimate at the clean point
  std::vector<double> budget_norms;  // ||x_i - x_0|| after every projection
};

/// Projected gradient ascent on the EOT cross-entropy; returns the best iterate.
AttackResult pgd_attack(const Vec& x, int label, const Pipeline& pipeline, const AttackConfig& config);

struct SampleOutcome {
  std::size_t index;
  int clean_pred;
  int adv_pred;
  bool success;
  double final_loss;
  double perturbation;
};

struct RobustnessReport {
  double standard_acc;
  double standard_stderr;
  double robust_acc;
  double robust_stderr;
  std::vector<SampleOutcome> first_repeat;
  std::size_t budget_checks = 0;
  std::size_t budget_violations = 0;
};

/// Standard and robust accuracy over n_repeats; each repeat re-runs every
/// attack and re-draws the defense randomness of the final prediction.
RobustnessReport evaluate_robustness(const ToyClassifier& classifier, const Purifier* defense,
                                     const std::vector<Vec>& points, const std::vector<int>& labels,
                                     const AttackConfig& config, std::size_t n_repeats, std::uint64_t seed,
                                     std::size_t workers = 0);

}  // namespace sdepure
