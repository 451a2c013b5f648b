#include "cosmofit/whitening.hpp"

#include <cmath>
#include <numbers>

#include "cosmofit/error.hpp"

namespace cosmofit {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

void check_length(const CholeskyFactor& f, Eigen::Index n) {
  if (static_cast<std::size_t>(n) != f.size())
    throw InvalidArgument("whitening", "vector length " + std::to_string(n) +
                                           " does not match factor size " +
                                           std::to_string(f.size()));
}

}  // namespace

double std_normal_logpdf(double y) { return -0.5 * y * y - kHalfLog2Pi; }

CholeskyFactor cholesky_factorize(const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols() || sigma.rows() == 0)
    throw InvalidArgument("whitening", "covariance must be a non-empty square matrix");
  const Eigen::Index n = sigma.rows();
  CholeskyFactor f;
  f.l_ = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd& l = f.l_;
  double log_det = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double pivot = sigma(j, j) - l.row(j).head(j).squaredNorm();
    if (!(pivot > 0.0) || !std::isfinite(pivot))
      throw NotPositiveDefinite("whitening", static_cast<std::size_t>(j + 1));
    const double ljj = std::sqrt(pivot);
    l(j, j) = ljj;
    log_det += std::log(ljj);
    const Eigen::Index rest = n - j - 1;
    if (rest > 0) {
      l.col(j).tail(rest) =
          (sigma.col(j).tail(rest) - l.block(j + 1, 0, rest, j) * l.row(j).head(j).transpose()) /
          ljj;
    }
  }
  f.log_det_l_ = log_det;
  return f;
}

Eigen::VectorXd CholeskyFactor::whiten(const Eigen::VectorXd& r) const {
  check_length(*this, r.size());
  return l_.triangularView<Eigen::Lower>().solve(r);
}

Eigen::VectorXd CholeskyFactor::unwhiten(const Eigen::VectorXd& y) const {
  check_length(*this, y.size());
  return l_.triangularView<Eigen::Lower>() * y;
}

Eigen::VectorXd CholeskyFactor::solve_transpose(const Eigen::VectorXd& y) const {
  check_length(*this, y.size());
  return l_.transpose().triangularView<Eigen::Upper>().solve(y);
}

Eigen::VectorXd whiten(const CholeskyFactor& f, const Eigen::VectorXd& r) {
  return f.whiten(r);
}

Eigen::VectorXd unwhiten(const CholeskyFactor& f, const Eigen::VectorXd& y) {
  return f.unwhiten(y);
}

WhitenedLogLik whitened_pointwise_loglik(const CholeskyFactor& f,
                                         const Eigen::VectorXd& mu_obs,
                                         const Eigen::VectorXd& mu_model) {
  check_length(f, mu_obs.size());
  check_length(f, mu_model.size());
  const Eigen::VectorXd r = mu_obs - mu_model;
  if (!r.allFinite()) throw InvalidArgument("whitening", "non-finite residual");
  const Eigen::VectorXd y = f.whiten(r);
  WhitenedLogLik out;
  out.ell = y.unaryExpr([](double v) { return std_normal_logpdf(v); });
  out.log_det_t = f.log_det_t();
  return out;
}

}  // namespace cosmofit
