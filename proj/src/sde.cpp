#include "sdepure/sde.hpp"

#include <cmath>
#include <ostream>

#include "sdepure/random.hpp"

namespace sdepure {

TimeGrid TimeGrid::uniform(double t_start, double t_end, std::size_t n_steps) {
  if (n_steps == 0) throw ContractError("TimeGrid::uniform: n_steps must be >= 1");
  return TimeGrid(t_start, t_end, std::abs(t_end - t_start) / static_cast<double>(n_steps), n_steps, true);
}

TimeGrid TimeGrid::fixed_step(double t_start, double t_end, double dt) {
  if (!(dt > 0.0)) throw ContractError("TimeGrid::fixed_step: dt must be positive");
  const double span = std::abs(t_end - t_start);
  // Tolerance keeps e.g. 0.1 / 1e-3 at 100 steps instead of 101.
  const auto n = span == 0.0 ? std::size_t{0} : static_cast<std::size_t>(std::ceil(span / dt - 1e-9));
  return TimeGrid(t_start, t_end, dt, std::max<std::size_t>(n, span == 0.0 ? 0 : 1), false);
}

double TimeGrid::time(std::size_t k) const {
  if (k > n_) throw ContractError("TimeGrid::time: index out of range");
  if (k == n_) return t_end_;
  if (uniform_) {
    return t_start_ + (t_end_ - t_start_) * (static_cast<double>(k) / static_cast<double>(n_));
  }
  const double sign = t_end_ >= t_start_ ? 1.0 : -1.0;
  return t_start_ + sign * static_cast<double>(k) * nominal_;
}

WienerRecord WienerRecord::generate(std::uint64_t seed, const TimeGrid& grid, std::size_t dim, NoiseStorage storage) {
  WienerRecord rec;
  rec.seed_ = seed;
  rec.grid_ = grid;
  rec.dim_ = dim;
  rec.storage_ = storage;
  if (storage == NoiseStorage::recorded) {
    auto data = std::make_shared<std::vector<double>>(grid.n_steps() * dim);
    for (std::size_t k = 0; k < grid.n_steps(); ++k) {
      for (std::size_t i = 0; i < dim; ++i) (*data)[k * dim + i] = rec.base(k, i);
    }
    rec.data_ = std::move(data);
  }
  return rec;
}

double WienerRecord::base(std::size_t step, std::size_t i) const {
  if (data_) return (*data_)[step * dim_ + i];
  const double scale = std::sqrt(std::abs(grid_.step(step)));
  return scale * counter_normal(seed_, static_cast<std::uint64_t>(step) * dim_ + i);
}

void WienerRecord::increment_into(std::size_t k, Vec& out) const {
  const std::size_t n = n_steps();
  if (k >= n) throw ContractError("WienerRecord::increment: step index out of range");
  const std::size_t b = reversed_ ? n - 1 - k : k;
  out.resize(static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < dim_; ++i) {
    const double v = base(b, i);
    out[static_cast<Eigen::Index>(i)] = negated_ ? -v : v;
  }
}

Vec WienerRecord::increment(std::size_t k) const {
  Vec out;
  increment_into(k, out);
  return out;
}

WienerRecord WienerRecord::reversed_negated() const {
  WienerRecord r = *this;
  r.reversed_ = !reversed_;
  r.negated_ = !negated_;
  return r;
}

namespace {

void check_inputs(const Vec& x0, const SdeProblem& problem, const WienerRecord& noise, const TimeGrid& grid) {
  if (!problem.drift || !problem.diffusion) throw ContractError("sdeint: drift and diffusion must be set");
  if (grid.n_steps() == 0) throw ContractError("sdeint: n_steps must be >= 1");
  if (noise.dim() != static_cast<std::size_t>(x0.size())) throw ContractError("sdeint: noise dimension mismatch");
  if (noise.n_steps() < grid.n_steps()) throw ContractError("sdeint: noise record shorter than the grid");
  if (grid.t_start() != problem.t_start || grid.t_end() != problem.t_end) {
    throw ContractError("sdeint: grid does not span the problem interval");
  }
}

template <typename Sink>
Vec integrate(const Vec& x0, const SdeProblem& problem, const WienerRecord& noise, const TimeGrid& grid, Sink&& sink) {
  Vec x = x0;
  Vec dw;
  for (std::size_t k = 0; k < grid.n_steps(); ++k) {
    const double t = grid.time(k);
    const double dt = grid.step(k);
    const Vec f = problem.drift(x, t);
    const Vec g = problem.diffusion(t);
    if (f.size() != x.size() || g.size() != x.size()) throw ContractError("sdeint: coefficient dimension mismatch");
    x += dt * f;
    if (!g.isZero(0.0)) {
      noise.increment_into(k, dw);
      x += g.cwiseProduct(dw);
    }
    if (!x.allFinite()) throw DivergenceError("sdeint: non-finite state", k + 1);
    sink(x);
  }
  return x;
}

}  // namespace

Trajectory sdeint(const Vec& x0, const SdeProblem& problem, const WienerRecord& noise, const TimeGrid& grid) {
  check_inputs(x0, problem, noise, grid);
  Trajectory out;
  out.reserve(grid.n_steps() + 1);
  out.push_back(x0);
  integrate(x0, problem, noise, grid, [&](const Vec& x) { out.push_back(x); });
  return out;
}

Trajectory sdeint(const Vec& x0, const SdeProblem& problem, const WienerRecord& noise, std::size_t n_steps) {
  if (n_steps == 0) throw ContractError("sdeint: n_steps must be >= 1");
  return sdeint(x0, problem, noise, TimeGrid::uniform(problem.t_start, problem.t_end, n_steps));
}

Vec sdeint_endpoint(const Vec& x0, const SdeProblem& problem, const WienerRecord& noise, const TimeGrid& grid) {
  check_inputs(x0, problem, noise, grid);
  return integrate(x0, problem, noise, grid, [](const Vec&) {});
}

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory, const TimeGrid& grid) {
  if (trajectory.size() != grid.n_steps() + 1) throw ContractError("write_trajectory_csv: length mismatch");
  out << "step,t";
  const auto d = trajectory.empty() ? 0 : trajectory.front().size();
  for (Eigen::Index i = 0; i < d; ++i) out << ",x_" << i;
  out << '\n';
  out.precision(17);
  for (std::size_t k = 0; k < trajectory.size(); ++k) {
    out << k << ',' << grid.time(k);
    for (Eigen::Index i = 0; i < d; ++i) out << ',' << trajectory[k][i];
    out << '\n';
  }
}

}  // namespace sdepure
