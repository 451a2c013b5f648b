#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cosmofit {

using Rng = std::mt19937_64;

/// A differentiable log density on unconstrained R^d, as seen by the samplers.
class LogDensity {
 public:
  virtual ~LogDensity() = default;

  virtual std::size_t dim() const = 0;

  /// Log density at `x`, writing the gradient into `grad`. Returns -inf when
  /// `x` is outside the support or the model cannot be evaluated; `grad` is
  /// then zero.
  virtual double log_density_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const = 0;

  virtual double log_density(const Eigen::VectorXd& x) const {
    Eigen::VectorXd g;
    return log_density_gradient(x, g);
  }

  /// Starting point for a chain; the default draws U(-2, 2) per coordinate.
  virtual Eigen::VectorXd initial_point(Rng& rng) const {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    Eigen::VectorXd x(static_cast<Eigen::Index>(dim()));
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = u(rng);
    return x;
  }

  /// Maps a sampling-space point to the reported (constrained) parameters.
  virtual Eigen::VectorXd constrain(const Eigen::VectorXd& x) const { return x; }

  virtual std::vector<std::string> parameter_names() const {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < dim(); ++i) names.push_back("theta" + std::to_string(i));
    return names;
  }
};

}  // namespace cosmofit
