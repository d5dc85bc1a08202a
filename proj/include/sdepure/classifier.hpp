#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sdepure/adjoint.hpp"
#include "sdepure/common.hpp"
#include "sdepure/mlp.hpp"
#include "sdepure/purifier.hpp"

namespace sdepure {

enum class ClassifierKind { linear, small_mlp };

std::string to_string(ClassifierKind kind);
ClassifierKind parse_classifier_kind(const std::string& name);

/// Softmax classifier on R^d. predict() breaks argmax ties toward the lowest index.
class ToyClassifier {
 public:
  ToyClassifier(Mlp net, ClassifierKind kind);

  ClassifierKind kind() const noexcept { return kind_; }
  std::size_t n_classes() const { return net_.output_dim(); }
  std::size_t dim() const { return net_.input_dim(); }
  const Mlp& net() const noexcept { return net_; }
  Mlp& net() noexcept { return net_; }

  Vec logits(const Vec& x) const { return net_.forward(x); }
  int predict(const Vec& x) const;
  /// Cross-entropy of the softmax at `label`.
  double loss(const Vec& x, int label) const;
  Vec loss_grad(const Vec& x, int label) const;
  Objective objective(int label) const;

  void save(const std::string& path) const;
  static ToyClassifier load(const std::string& path);

 private:
  Mlp net_;
  ClassifierKind kind_;
};

int argmax_lowest(const Vec& v);

enum class DatasetGenerator { two_gaussians, two_moons, rings };

std::string to_string(DatasetGenerator generator);
DatasetGenerator parse_generator(const std::string& name);

struct DatasetSpec {
  DatasetGenerator generator = DatasetGenerator::two_gaussians;
  std::size_t n = 2000;
  /// two-gaussians: class 0 centred at -mean, class 1 at +mean, per-axis std.
  Vec mean = (Vec(2) << 2.0, 0.0).finished();
  Vec std = Vec::Constant(2, 1.0);
  /// two-moons / rings: isotropic noise.
  double noise = 0.1;
};

struct ToyDataset {
  std::vector<Vec> points;
  std::vector<int> labels;
  DatasetSpec spec;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return points.size(); }
  std::size_t dim() const { return points.empty() ? 0 : static_cast<std::size_t>(points.front().size()); }
};

/// Balanced classes; deterministic in (spec, seed).
ToyDataset generate_dataset(const DatasetSpec& spec, std::uint64_t seed);

/// CSV with columns x_0..x_{d-1},label.
void write_dataset_csv(std::ostream& out, const ToyDataset& data);
ToyDataset read_dataset_csv(std::istream& in);

struct ClassifierOptions {
  ClassifierKind kind = ClassifierKind::linear;
  std::vector<std::size_t> hidden{32, 32};
  std::size_t steps = 2000;
  double lr = 0.1;
  std::size_t batch = 64;
  std::uint64_t seed = 0;
};

struct TrainedClassifier {
  ToyClassifier model;
  double train_accuracy;
  double final_loss;
};

TrainedClassifier train_classifier(const ToyDataset& data, const ClassifierOptions& options);

struct AccuracyReport {
  double accuracy;
  double standard_error;  // standard error over repeats; 0 for one repeat
  std::vector<double> per_repeat;
};

/// Mean accuracy over n_repeats independent defense randomisations. With no
/// defense every repeat is identical.
AccuracyReport evaluate_accuracy(const ToyClassifier& model, const std::vector<Vec>& points, const std::vector<int>& labels,
                                 const Purifier* defense, std::size_t n_repeats, std::uint64_t seed,
                                 std::size_t workers = 0);

/// Mean and standard error of per-repeat values.
std::pair<double, double> mean_stderr(const std::vector<double>& values);

}  // namespace sdepure
