#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "sdepure/common.hpp"

namespace sdepure {

/// Philox-4x32-10 block function (Salmon et al., SC'11). Pure function of
/// (counter, key); used so any draw can be regenerated from its index.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Stream derivation: every random purpose gets its own key computed from
/// (master seed, purpose tag, index).
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t index = 0);

/// Uniform on (0, 1], fully determined by (key, counter).
double counter_uniform(std::uint64_t key, std::uint64_t counter);

/// Standard normal, fully determined by (key, counter).
double counter_normal(std::uint64_t key, std::uint64_t counter);

/// Sequential view over a counter-based stream.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : key_(key) {}

  double uniform() { return counter_uniform(key_, counter_++); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return counter_normal(key_, counter_++); }
  Vec normal_vec(std::size_t dim);
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace sdepure
