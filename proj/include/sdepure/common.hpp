#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace sdepure {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Violated precondition (dimension mismatch, bad argument).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Bad experiment configuration (unknown key, unparsable value).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite state appeared while integrating.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Training produced a non-finite loss.
class TrainingDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Zero-variance marginal; the score is undefined.
class DegenerateDistribution : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace sdepure
