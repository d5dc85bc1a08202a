#include "sdepure/classifier.hpp"

#include <algorithm>
#include <tuple>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "sdepure/parallel.hpp"
#include "sdepure/random.hpp"

namespace sdepure {

std::string to_string(ClassifierKind kind) { return kind == ClassifierKind::linear ? "linear" : "small-mlp"; }

ClassifierKind parse_classifier_kind(const std::string& name) {
  if (name == "linear") return ClassifierKind::linear;
  if (name == "small-mlp" || name == "mlp") return ClassifierKind::small_mlp;
  throw ConfigError("unknown classifier kind '" + name + "' (expected linear or small-mlp)");
}

int argmax_lowest(const Vec& v) {
  if (v.size() == 0) throw ContractError("argmax of empty vector");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return static_cast<int>(best);
}

ToyClassifier::ToyClassifier(Mlp net, ClassifierKind kind) : net_(std::move(net)), kind_(kind) {
  if (kind_ == ClassifierKind::linear && net_.layers().size() != 1) throw ContractError("linear classifier must have one layer");
  if (net_.output_dim() < 1) throw ContractError("classifier needs at least one class");
}

int ToyClassifier::predict(const Vec& x) const { return argmax_lowest(logits(x)); }

namespace {

Vec softmax(const Vec& logits) {
  const Vec e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

void check_label(int label, std::size_t n) {
  if (label < 0 || static_cast<std::size_t>(label) >= n) throw ContractError("label out of range");
}

}  // namespace

double ToyClassifier::loss(const Vec& x, int label) const {
  check_label(label, n_classes());
  const Vec z = logits(x);
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum()) - z[label];
}

Vec ToyClassifier::loss_grad(const Vec& x, int label) const {
  check_label(label, n_classes());
  Vec p = softmax(logits(x));
  p[label] -= 1.0;
  return net_.vjp(x, p);
}

Objective ToyClassifier::objective(int label) const {
  return Objective{[this, label](const Vec& x) { return loss(x, label); },
                   [this, label](const Vec& x) { return loss_grad(x, label); }};
}

namespace {
constexpr char kClassifierMagic[8] = {'S', 'P', 'C', 'L', 'A', 'S', 'S', '1'};
}

void ToyClassifier::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write classifier: " + path);
  out.write(kClassifierMagic, 8);
  const auto kind = static_cast<std::uint32_t>(kind_);
  out.write(reinterpret_cast<const char*>(&kind), sizeof(kind));
  net_.write(out);
}

ToyClassifier ToyClassifier::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read classifier: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || !std::equal(magic, magic + 8, kClassifierMagic)) throw ContractError("not a classifier file: " + path);
  std::uint32_t kind = 0;
  in.read(reinterpret_cast<char*>(&kind), sizeof(kind));
  if (!in || kind > 1) throw ContractError("bad classifier header: " + path);
  return ToyClassifier(Mlp::read(in), static_cast<ClassifierKind>(kind));
}

// ---------------------------------------------------------------- datasets

std::string to_string(DatasetGenerator g) {
  switch (g) {
    case DatasetGenerator::two_gaussians:
      return "two-gaussians";
    case DatasetGenerator::two_moons:
      return "two-moons";
    case DatasetGenerator::rings:
      return "rings";
  }
  return "?";
}

DatasetGenerator parse_generator(const std::string& name) {
  if (name == "two-gaussians") return DatasetGenerator::two_gaussians;
  if (name == "two-moons") return DatasetGenerator::two_moons;
  if (name == "rings") return DatasetGenerator::rings;
  throw ConfigError("unknown dataset generator '" + name + "'");
}

ToyDataset generate_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  if (spec.n == 0) throw ContractError("generate_dataset: n must be positive");
  ToyDataset data;
  data.spec = spec;
  data.seed = seed;
  Rng rng(derive_seed(seed, "dataset"));
  for (std::size_t i = 0; i < spec.n; ++i) {
    const int label = static_cast<int>(i % 2);
    Vec x;
    switch (spec.generator) {
      case DatasetGenerator::two_gaussians: {
        if (spec.mean.size() == 0 || spec.std.size() != spec.mean.size()) {
          throw ContractError("two-gaussians: mean and std must have equal nonzero length");
        }
        const double sign = label == 1 ? 1.0 : -1.0;
        x = sign * spec.mean + spec.std.cwiseProduct(rng.normal_vec(static_cast<std::size_t>(spec.mean.size())));
        break;
      }
      case DatasetGenerator::two_moons: {
        const double theta = std::numbers::pi * rng.uniform();
        x = Vec(2);
        if (label == 0) x << std::cos(theta), std::sin(theta);
        else x << 1.0 - std::cos(theta), 0.5 - std::sin(theta);
        x += spec.noise * rng.normal_vec(2);
        break;
      }
      case DatasetGenerator::rings: {
        const double theta = 2.0 * std::numbers::pi * rng.uniform();
        const double radius = label == 0 ? 1.0 : 2.0;
        x = Vec(2);
        x << radius * std::cos(theta), radius * std::sin(theta);
        x += spec.noise * rng.normal_vec(2);
        break;
      }
    }
    data.points.push_back(std::move(x));
    data.labels.push_back(label);
  }
  return data;
}

void write_dataset_csv(std::ostream& out, const ToyDataset& data) {
  const std::size_t d = data.dim();
  for (std::size_t i = 0; i < d; ++i) out << "x_" << i << ',';
  out << "label\n";
  out.precision(17);
  for (std::size_t n = 0; n < data.size(); ++n) {
    for (std::size_t i = 0; i < d; ++i) out << data.points[n][static_cast<Eigen::Index>(i)] << ',';
    out << data.labels[n] << '\n';
  }
}

ToyDataset read_dataset_csv(std::istream& in) {
  ToyDataset data;
  std::string line;
  if (!std::getline(in, line)) throw ContractError("dataset CSV: missing header");
  std::size_t cols = 1;
  for (char c : line) cols += c == ',';
  if (cols < 2) throw ContractError("dataset CSV: need at least one feature and a label");
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    Vec x(static_cast<Eigen::Index>(cols - 1));
    for (std::size_t i = 0; i + 1 < cols; ++i) {
      if (!std::getline(ss, cell, ',')) throw ContractError("dataset CSV: short row");
      x[static_cast<Eigen::Index>(i)] = std::stod(cell);
    }
    if (!std::getline(ss, cell, ',')) throw ContractError("dataset CSV: missing label");
    data.points.push_back(std::move(x));
    data.labels.push_back(std::stoi(cell));
  }
  data.spec.n = data.points.size();
  return data;
}

// ---------------------------------------------------------------- training

TrainedClassifier train_classifier(const ToyDataset& data, const ClassifierOptions& options) {
  if (data.size() == 0) throw ContractError("train_classifier: empty data");
  const std::size_t d = data.dim();
  int max_label = 0;
  for (int y : data.labels) {
    if (y < 0) throw ContractError("train_classifier: negative label");
    max_label = std::max(max_label, y);
  }
  const std::size_t classes = std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);

  std::vector<std::size_t> widths{d};
  if (options.kind == ClassifierKind::small_mlp) widths.insert(widths.end(), options.hidden.begin(), options.hidden.end());
  widths.push_back(classes);
  Rng init(derive_seed(options.seed, "classifier-init"));
  ToyClassifier model(Mlp(widths, Activation::tanh, init), options.kind);

  Rng rng(derive_seed(options.seed, "classifier-batches"));
  const std::size_t batch = std::min(options.batch, data.size());
  for (std::size_t step = 0; step < options.steps; ++step) {
    auto grads = model.net().zero_like();
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t i = rng.index(data.size());
      const Vec& x = data.points[i];
      const int y = data.labels[i];
      Vec p = softmax(model.logits(x));
      loss += -std::log(std::max(p[y], 1e-300));
      p[y] -= 1.0;
      model.net().accumulate_parameter_grad(x, p / static_cast<double>(batch), grads);
    }
    if (!std::isfinite(loss)) throw TrainingDivergence("train_classifier: non-finite loss at step " + std::to_string(step));
    auto& layers = model.net().layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].weight -= options.lr * grads[l].weight;
      layers[l].bias -= options.lr * grads[l].bias;
    }
  }

  std::size_t correct = 0;
  double total_loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    correct += model.predict(data.points[i]) == data.labels[i];
    total_loss += model.loss(data.points[i], data.labels[i]);
  }
  if (!std::isfinite(total_loss)) throw TrainingDivergence("train_classifier: non-finite final loss");
  return TrainedClassifier{std::move(model), static_cast<double>(correct) / static_cast<double>(data.size()),
                           total_loss / static_cast<double>(data.size())};
}

// ---------------------------------------------------------------- evaluation

std::pair<double, double> mean_stderr(const std::vector<double>& values) {
  if (values.empty()) throw ContractError("mean_stderr: no values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double var = ss / static_cast<double>(values.size() - 1);
  return {mean, std::sqrt(var / static_cast<double>(values.size()))};
}

AccuracyReport evaluate_accuracy(const ToyClassifier& model, const std::vector<Vec>& points, const std::vector<int>& labels,
                                 const Purifier* defense, std::size_t n_repeats, std::uint64_t seed, std::size_t workers) {
  if (n_repeats == 0) throw ContractError("evaluate_accuracy: n_repeats must be >= 1");
  if (points.size() != labels.size() || points.empty()) throw ContractError("evaluate_accuracy: points/labels mismatch");
  for (const auto& x : points) {
    if (static_cast<std::size_t>(x.size()) != model.dim()) throw ContractError("evaluate_accuracy: dimension mismatch");
  }
  const std::size_t n = points.size();
  std::vector<char> correct(n * n_repeats, 0);
  parallel_for(n * n_repeats, workers, [&](std::size_t job) {
    const std::size_t r = job / n;
    const std::size_t i = job % n;
    Vec x = points[i];
    if (defense) x = defense->purify(x, derive_seed(derive_seed(seed, "eval-repeat", r), "sample", i)).purified;
    correct[job] = model.predict(x) == labels[i];
  });
  AccuracyReport report{};
  for (std::size_t r = 0; r < n_repeats; ++r) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < n; ++i) c += correct[r * n + i];
    report.per_repeat.push_back(static_cast<double>(c) / static_cast<double>(n));
  }
  std::tie(report.accuracy, report.standard_error) = mean_stderr(report.per_repeat);
  return report;
}

}  // namespace sdepure
