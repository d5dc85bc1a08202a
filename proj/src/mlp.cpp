#include "sdepure/mlp.hpp"

#include <cmath>
#include <istream>
#include <ostream>

namespace sdepure {
namespace {

double act(Activation a, double z) {
  switch (a) {
    case Activation::tanh:
      return std::tanh(z);
    case Activation::silu:
      return z / (1.0 + std::exp(-z));
  }
  return z;
}

double act_deriv(Activation a, double z) {
  switch (a) {
    case Activation::tanh: {
      const double th = std::tanh(z);
      return 1.0 - th * th;
    }
    case Activation::silu: {
      const double sg = 1.0 / (1.0 + std::exp(-z));
      return sg * (1.0 + z * (1.0 - sg));
    }
  }
  return 1.0;
}

Vec apply(Activation a, const Vec& z) { return z.unaryExpr([a](double v) { return act(a, v); }); }
Vec apply_deriv(Activation a, const Vec& z) { return z.unaryExpr([a](double v) { return act_deriv(a, v); }); }

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ContractError("Mlp::read: truncated stream");
  return value;
}

}  // namespace

Mlp::Mlp(std::vector<std::size_t> widths, Activation activation, Rng& init) : activation_(activation) {
  if (widths.size() < 2) throw ContractError("Mlp: need at least input and output widths");
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(widths[l]);
    const auto out = static_cast<Eigen::Index>(widths[l + 1]);
    if (in == 0 || out == 0) throw ContractError("Mlp: zero width layer");
    Layer layer{Mat(out, in), Vec::Zero(out)};
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = scale * init.normal();
    }
    layers_.push_back(std::move(layer));
  }
}

Mlp::Mlp(std::vector<Layer> layers, Activation activation) : layers_(std::move(layers)), activation_(activation) {
  if (layers_.empty()) throw ContractError("Mlp: no layers");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].bias.size() != layers_[l].weight.rows()) throw ContractError("Mlp: bias/weight mismatch");
    if (l > 0 && layers_[l].weight.cols() != layers_[l - 1].weight.rows()) {
      throw ContractError("Mlp: consecutive layer shapes do not chain");
    }
  }
}

std::size_t Mlp::input_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols()); }
std::size_t Mlp::output_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.rows()); }

std::vector<std::size_t> Mlp::widths() const {
  std::vector<std::size_t> w;
  if (layers_.empty()) return w;
  w.push_back(input_dim());
  for (const auto& l : layers_) w.push_back(static_cast<std::size_t>(l.weight.rows()));
  return w;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Vec Mlp::forward(const Vec& input) const {
  if (static_cast<std::size_t>(input.size()) != input_dim()) throw ContractError("Mlp::forward: input dimension mismatch");
  Vec a = input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Vec z = layers_[l].weight * a + layers_[l].bias;
    a = (l + 1 < layers_.size()) ? apply(activation_, z) : std::move(z);
  }
  return a;
}

Vec Mlp::jvp(const Vec& input, const Vec& tangent) const {
  if (static_cast<std::size_t>(input.size()) != input_dim() || tangent.size() != input.size()) {
    throw ContractError("Mlp::jvp: dimension mismatch");
  }
  // Dual numbers (a + eps * da): each layer maps value and tangent together.
  Vec a = input;
  Vec da = tangent;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Vec z = layers_[l].weight * a + layers_[l].bias;
    Vec dz = layers_[l].weight * da;
    if (l + 1 < layers_.size()) {
      da = apply_deriv(activation_, z).cwiseProduct(dz);
      a = apply(activation_, z);
    } else {
      a = std::move(z);
      da = std::move(dz);
    }
  }
  return da;
}

Vec Mlp::forward_cached(const Vec& input, Cache& cache) const {
  if (static_cast<std::size_t>(input.size()) != input_dim()) throw ContractError("Mlp: input dimension mismatch");
  cache.pre.clear();
  cache.post.clear();
  cache.post.push_back(input);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Vec z = layers_[l].weight * cache.post.back() + layers_[l].bias;
    cache.pre.push_back(z);
    if (l + 1 < layers_.size()) cache.post.push_back(apply(activation_, z));
    else cache.post.push_back(std::move(z));
  }
  return cache.post.back();
}

Vec Mlp::backward(const Cache& cache, const Vec& cotangent, std::vector<Layer>* grads) const {
  if (static_cast<std::size_t>(cotangent.size()) != output_dim()) throw ContractError("Mlp: cotangent dimension mismatch");
  Vec delta = cotangent;  // d/d(pre-activation) of the current layer
  for (std::size_t l = layers_.size(); l-- > 0;) {
    if (l + 1 < layers_.size()) delta = delta.cwiseProduct(apply_deriv(activation_, cache.pre[l]));
    if (grads) {
      (*grads)[l].weight.noalias() += delta * cache.post[l].transpose();
      (*grads)[l].bias += delta;
    }
    delta = layers_[l].weight.transpose() * delta;
  }
  return delta;
}

Vec Mlp::vjp(const Vec& input, const Vec& cotangent) const {
  Cache cache;
  forward_cached(input, cache);
  return backward(cache, cotangent, nullptr);
}

void Mlp::accumulate_parameter_grad(const Vec& input, const Vec& cotangent, std::vector<Layer>& grads) const {
  if (grads.size() != layers_.size()) throw ContractError("Mlp: gradient buffer shape mismatch");
  Cache cache;
  forward_cached(input, cache);
  backward(cache, cotangent, &grads);
}

std::vector<Mlp::Layer> Mlp::zero_like() const {
  std::vector<Layer> z;
  for (const auto& l : layers_) z.push_back({Mat::Zero(l.weight.rows(), l.weight.cols()), Vec::Zero(l.bias.size())});
  return z;
}

void Mlp::write(std::ostream& out) const {
  const auto w = widths();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(w.size()));
  for (auto v : w) put<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(activation_));
  for (const auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) put<double>(out, l.weight(r, c));
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) put<double>(out, l.bias[r]);
  }
}

Mlp Mlp::read(std::istream& in) {
  const auto n = get<std::uint32_t>(in);
  if (n < 2 || n > 64) throw ContractError("Mlp::read: implausible layer count");
  std::vector<std::size_t> w(n);
  for (auto& v : w) v = get<std::uint32_t>(in);
  const auto act_id = get<std::uint32_t>(in);
  if (act_id > 1) throw ContractError("Mlp::read: unknown activation id");
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const auto rows = static_cast<Eigen::Index>(w[l + 1]);
    const auto cols = static_cast<Eigen::Index>(w[l]);
    Layer layer{Mat(rows, cols), Vec(rows)};
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) layer.weight(r, c) = get<double>(in);
    }
    for (Eigen::Index r = 0; r < rows; ++r) layer.bias[r] = get<double>(in);
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers), static_cast<Activation>(act_id));
}

}  // namespace sdepure
