#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "sdepure/common.hpp"
#include "sdepure/random.hpp"

namespace sdepure {

enum class Activation : std::uint32_t { tanh = 0, silu = 1 };

/// Fully connected network: hidden layers use `activation`, the output layer is
/// affine. Shared by the score network and the toy classifiers.
class Mlp {
 public:
  struct Layer {
    Mat weight;  // out x in
    Vec bias;
  };

  Mlp() = default;
  /// widths = {in, hidden..., out}; weights drawn N(0, 1/fan_in).
  Mlp(std::vector<std::size_t> widths, Activation activation, Rng& init);
  Mlp(std::vector<Layer> layers, Activation activation);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  Activation activation() const noexcept { return activation_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }
  std::vector<std::size_t> widths() const;
  std::size_t parameter_count() const;

  Vec forward(const Vec& input) const;

  /// Forward-mode tangent propagation: returns (d out / d in) * tangent.
  Vec jvp(const Vec& input, const Vec& tangent) const;

  /// Reverse mode: returns (d out / d in)^T * cotangent.
  Vec vjp(const Vec& input, const Vec& cotangent) const;

  /// Adds (d out / d params)^T * cotangent into `grads` (same shapes as layers()).
  void accumulate_parameter_grad(const Vec& input, const Vec& cotangent, std::vector<Layer>& grads) const;

  std::vector<Layer> zero_like() const;

  /// Flat binary layout (little endian):
  ///   u32 n_widths, u32 widths[n_widths], u32 activation,
  ///   then per layer: f64 weight[out*in] (row major), f64 bias[out].
  void write(std::ostream& out) const;
  static Mlp read(std::istream& in);

 private:
  struct Cache {
    std::vector<Vec> pre;   // pre-activations per layer
    std::vector<Vec> post;  // inputs to each layer (post[0] = input)
  };
  Vec forward_cached(const Vec& input, Cache& cache) const;
  Vec backward(const Cache& cache, const Vec& cotangent, std::vector<Layer>* grads) const;

  std::vector<Layer> layers_;
  Activation activation_ = Activation::tanh;
};

}  // namespace sdepure
