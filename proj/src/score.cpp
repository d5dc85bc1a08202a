#include "sdepure/score.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "sdepure/random.hpp"

namespace sdepure {

// ---------------------------------------------------------------- GaussianScore

GaussianScore::GaussianScore(Vec mu0, double sigma0_sq, NoiseSchedule schedule)
    : mu0_(std::move(mu0)), sigma0_sq_(sigma0_sq), schedule_(schedule) {
  if (mu0_.size() == 0) throw ContractError("GaussianScore: empty mean");
  if (!(sigma0_sq_ >= 0.0)) throw ContractError("GaussianScore: negative variance");
}

Vec GaussianScore::mean(double t) const { return mu0_ * std::sqrt(schedule_.alpha(t)); }

double GaussianScore::variance(double t) const {
  const double v = 1.0 - (1.0 - sigma0_sq_) * schedule_.alpha(t);
  if (!(v > 0.0)) throw DegenerateDistribution("GaussianScore: zero marginal variance");
  return v;
}

Vec GaussianScore::evaluate(const Vec& x, double t) const {
  if (x.size() != mu0_.size()) throw ContractError("GaussianScore: dimension mismatch");
  return -(x - mean(t)) / variance(t);
}

Vec GaussianScore::jvp(const Vec& x, double t, const Vec& v) const {
  if (x.size() != mu0_.size() || v.size() != mu0_.size()) throw ContractError("GaussianScore: dimension mismatch");
  return -v / variance(t);
}

// ---------------------------------------------------------------- MixtureScore

MixtureScore::MixtureScore(std::vector<Component> components, NoiseSchedule schedule)
    : components_(std::move(components)), schedule_(schedule) {
  if (components_.empty()) throw ContractError("MixtureScore: no components");
  const auto d = components_.front().mean.size();
  double total = 0.0;
  for (const auto& c : components_) {
    if (c.mean.size() != d || c.variance.size() != d) throw ContractError("MixtureScore: inconsistent dimensions");
    if (!(c.weight > 0.0) || !(c.variance.minCoeff() > 0.0)) throw ContractError("MixtureScore: weights and variances must be positive");
    total += c.weight;
  }
  for (auto& c : components_) c.weight /= total;
}

std::size_t MixtureScore::dim() const { return static_cast<std::size_t>(components_.front().mean.size()); }

MixtureScore::Local MixtureScore::local(const Vec& x, double t) const {
  if (static_cast<std::size_t>(x.size()) != dim()) throw ContractError("MixtureScore: dimension mismatch");
  const double a = schedule_.alpha(t);
  const double sa = std::sqrt(a);
  Local out;
  std::vector<double> logp;
  for (const auto& c : components_) {
    const Vec var = (1.0 - (1.0 - c.variance.array()) * a).matrix();
    Vec inv = var.cwiseInverse();
    Vec diff = x - sa * c.mean;
    double lp = std::log(c.weight);
    for (Eigen::Index i = 0; i < x.size(); ++i) lp += -0.5 * (diff[i] * diff[i] * inv[i] + std::log(var[i]));
    logp.push_back(lp);
    out.scores.push_back(-diff.cwiseProduct(inv));
    out.inv_var.push_back(std::move(inv));
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logp) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logp) z += std::exp(v - mx);
  out.total = Vec::Zero(x.size());
  for (std::size_t k = 0; k < logp.size(); ++k) {
    out.resp.push_back(std::exp(logp[k] - mx) / z);
    out.total += out.resp[k] * out.scores[k];
  }
  return out;
}

Vec MixtureScore::evaluate(const Vec& x, double t) const { return local(x, t).total; }

Vec MixtureScore::jvp(const Vec& x, double t, const Vec& v) const {
  if (v.size() != x.size()) throw ContractError("MixtureScore: tangent dimension mismatch");
  // Hessian of log p: sum_k r_k (-D_k^{-1} + s_k s_k^T) - s s^T.
  const Local l = local(x, t);
  Vec out = -l.total * l.total.dot(v);
  for (std::size_t k = 0; k < l.resp.size(); ++k) {
    out += l.resp[k] * (-v.cwiseProduct(l.inv_var[k]) + l.scores[k] * l.scores[k].dot(v));
  }
  return out;
}

// ---------------------------------------------------------------- MlpScore

namespace {
constexpr char kScoreMagic[8] = {'S', 'P', 'S', 'C', 'O', 'R', 'E', '1'};
}

MlpScore::MlpScore(Mlp net, NoiseSchedule schedule) : net_(std::move(net)), schedule_(schedule) {
  if (net_.input_dim() != net_.output_dim() + 1) throw ContractError("MlpScore: network must map d+1 inputs to d outputs");
}

Vec MlpScore::input(const Vec& x, double t) const {
  if (static_cast<std::size_t>(x.size()) != dim()) throw ContractError("MlpScore: dimension mismatch");
  Vec in(x.size() + 1);
  in.head(x.size()) = x;
  in[x.size()] = t;
  return in;
}

Vec MlpScore::evaluate(const Vec& x, double t) const { return net_.forward(input(x, t)); }

Vec MlpScore::jvp(const Vec& x, double t, const Vec& v) const {
  if (v.size() != x.size()) throw ContractError("MlpScore::jvp: tangent dimension mismatch");
  Vec tangent = Vec::Zero(x.size() + 1);
  tangent.head(x.size()) = v;
  return net_.jvp(input(x, t), tangent);
}

Vec MlpScore::vjp(const Vec& x, double t, const Vec& u) const {
  return net_.vjp(input(x, t), u).head(x.size());
}

void MlpScore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write score model: " + path);
  out.write(kScoreMagic, 8);
  const double params[2] = {schedule_.beta_min(), schedule_.beta_max()};
  out.write(reinterpret_cast<const char*>(params), sizeof(params));
  net_.write(out);
}

MlpScore MlpScore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read score model: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || !std::equal(magic, magic + 8, kScoreMagic)) throw ContractError("not a score model file: " + path);
  double params[2];
  in.read(reinterpret_cast<char*>(params), sizeof(params));
  if (!in) throw ContractError("truncated score model file: " + path);
  return MlpScore(Mlp::read(in), NoiseSchedule(params[0], params[1]));
}

// ---------------------------------------------------------------- DSM

Vec dsm_target(const Vec& x0, const Vec& x_noisy, double t, const NoiseSchedule& schedule) {
  const double a = schedule.alpha(t);
  if (!(1.0 - a > 0.0)) throw DegenerateDistribution("dsm_target: transition variance is zero");
  return -(x_noisy - x0 * std::sqrt(a)) / (1.0 - a);
}

double dsm_weight(DsmWeight rule, double t, const NoiseSchedule& schedule) {
  return rule == DsmWeight::transition_variance ? 1.0 - schedule.alpha(t) : 1.0;
}

namespace {

// Weighted residual sqrt(lambda) (s - target) for x_t = sqrt(a) x0 + sigma eps.
// With lambda = sigma^2 this is sigma s + eps, finite as t -> 0.
Vec weighted_residual(const Vec& s, const Vec& eps, double sigma, DsmWeight rule) {
  return rule == DsmWeight::transition_variance ? Vec(sigma * s + eps) : Vec(s + eps / sigma);
}

}  // namespace

double dsm_loss(const ScoreModel& model, const std::vector<Vec>& data, const NoiseSchedule& schedule, DsmWeight weight,
                double t_min, std::size_t samples, std::uint64_t seed) {
  if (data.empty()) throw ContractError("dsm_loss: empty data");
  Rng rng(seed);
  double total = 0.0;
  for (std::size_t n = 0; n < samples; ++n) {
    const Vec& x0 = data[rng.index(data.size())];
    const double t = rng.uniform(t_min, 1.0);
    const Vec eps = rng.normal_vec(static_cast<std::size_t>(x0.size()));
    const double a = schedule.alpha(t);
    const double sigma = std::sqrt(1.0 - a);
    const Vec xt = std::sqrt(a) * x0 + sigma * eps;
    total += weighted_residual(model.evaluate(xt, t), eps, sigma, weight).squaredNorm();
  }
  return total / static_cast<double>(samples);
}

std::vector<Mlp::Layer> dsm_parameter_grad(const MlpScore& model, const std::vector<Vec>& x0, const std::vector<Vec>& noise,
                                           const std::vector<double>& times, DsmWeight weight, double* loss_out) {
  if (x0.size() != noise.size() || x0.size() != times.size() || x0.empty()) {
    throw ContractError("dsm_parameter_grad: batch size mismatch");
  }
  const Mlp& net = model.net();
  auto grads = net.zero_like();
  const double inv_n = 1.0 / static_cast<double>(x0.size());
  double loss = 0.0;
  const NoiseSchedule& schedule = model.schedule();
  for (std::size_t b = 0; b < x0.size(); ++b) {
    const double a = schedule.alpha(times[b]);
    const double sigma = std::sqrt(1.0 - a);
    Vec in(x0[b].size() + 1);
    in.head(x0[b].size()) = std::sqrt(a) * x0[b] + sigma * noise[b];
    in[x0[b].size()] = times[b];
    const Vec s = net.forward(in);
    const Vec r = weighted_residual(s, noise[b], sigma, weight);
    loss += r.squaredNorm() * inv_n;
    const double chain = weight == DsmWeight::transition_variance ? sigma : 1.0;
    net.accumulate_parameter_grad(in, (2.0 * chain * inv_n) * r, grads);
  }
  if (loss_out) *loss_out = loss;
  return grads;
}

DsmResult dsm_train(const std::vector<Vec>& data, const NoiseSchedule& schedule, const DsmOptions& options) {
  if (data.empty()) throw ContractError("dsm_train: empty data");
  const auto d = static_cast<std::size_t>(data.front().size());
  for (const auto& x : data) {
    if (static_cast<std::size_t>(x.size()) != d) throw ContractError("dsm_train: inconsistent point dimensions");
  }
  if (!(options.t_min > 0.0 && options.t_min < 1.0)) throw ContractError("dsm_train: t_min must lie in (0, 1)");

  std::vector<std::size_t> widths{d + 1};
  widths.insert(widths.end(), options.hidden.begin(), options.hidden.end());
  widths.push_back(d);
  Rng init(derive_seed(options.seed, "dsm-init"));
  MlpScore model(Mlp(widths, options.activation, init), schedule);

  const std::uint64_t eval_seed = derive_seed(options.seed, "dsm-eval");
  const double initial = dsm_loss(model, data, schedule, options.weight, options.t_min, options.eval_samples, eval_seed);
  if (!std::isfinite(initial)) throw TrainingDivergence("dsm_train: non-finite initial loss");

  Rng rng(derive_seed(options.seed, "dsm-batches"));
  std::vector<Vec> xb(options.batch), eb(options.batch);
  std::vector<double> tb(options.batch);
  for (std::size_t step = 0; step < options.steps; ++step) {
    for (std::size_t b = 0; b < options.batch; ++b) {
      xb[b] = data[rng.index(data.size())];
      tb[b] = rng.uniform(options.t_min, 1.0);
      eb[b] = rng.normal_vec(d);
    }
    double loss = 0.0;
    const auto grads = dsm_parameter_grad(model, xb, eb, tb, options.weight, &loss);
    if (!std::isfinite(loss)) throw TrainingDivergence("dsm_train: non-finite loss at step " + std::to_string(step));
    auto& layers = model.net().layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].weight -= options.lr * grads[l].weight;
      layers[l].bias -= options.lr * grads[l].bias;
    }
  }
  const double final_loss = dsm_loss(model, data, schedule, options.weight, options.t_min, options.eval_samples, eval_seed);
  if (!std::isfinite(final_loss)) throw TrainingDivergence("dsm_train: non-finite final loss");
  return DsmResult{std::move(model), initial, final_loss};
}

}  // namespace sdepure
