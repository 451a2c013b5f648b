#pragma once

#include <cstddef>

#include <Eigen/Dense>

#include "cosmofit/dataset.hpp"

namespace cosmofit {

/// Lower-triangular L with Sigma = L L^T. The whitening map is T = L^{-1},
/// so log|det T| = -log_det_l().
class CholeskyFactor {
 public:
  CholeskyFactor() = default;

  std::size_t size() const noexcept { return static_cast<std::size_t>(l_.rows()); }
  const Eigen::MatrixXd& lower() const noexcept { return l_; }
  /// sum_i ln L_ii
  double log_det_l() const noexcept { return log_det_l_; }
  double log_det_t() const noexcept { return -log_det_l_; }

  /// y with L y = r (forward substitution).
  Eigen::VectorXd whiten(const Eigen::VectorXd& r) const;
  /// L y
  Eigen::VectorXd unwhiten(const Eigen::VectorXd& y) const;
  /// x with L^T x = y. whiten followed by this gives Sigma^{-1} r.
  Eigen::VectorXd solve_transpose(const Eigen::VectorXd& y) const;

 private:
  friend CholeskyFactor cholesky_factorize(const Eigen::MatrixXd& sigma);
  Eigen::MatrixXd l_;
  double log_det_l_ = 0.0;
};

/// Plain (unpivoted) Cholesky. Throws NotPositiveDefinite naming the 1-based
/// pivot on the first non-positive diagonal.
CholeskyFactor cholesky_factorize(const Eigen::MatrixXd& sigma);
inline CholeskyFactor cholesky_factorize(const TotalCovariance& sigma) {
  return cholesky_factorize(sigma.sigma);
}

Eigen::VectorXd whiten(const CholeskyFactor& f, const Eigen::VectorXd& r);
Eigen::VectorXd unwhiten(const CholeskyFactor& f, const Eigen::VectorXd& y);

/// Per-point log phi(y_i) of the whitened residuals plus the constant log|det T|.
struct WhitenedLogLik {
  Eigen::VectorXd ell;
  double log_det_t = 0.0;

  /// log N(mu_obs | mu_model, Sigma)
  double total() const { return ell.sum() + log_det_t; }
};

WhitenedLogLik whitened_pointwise_loglik(const CholeskyFactor& f,
                                         const Eigen::VectorXd& mu_obs,
                                         const Eigen::VectorXd& mu_model);

/// log phi(y) for the standard normal.
double std_normal_logpdf(double y);

}  // namespace cosmofit
