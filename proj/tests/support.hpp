#pragma once

// Fixtures shared by the unit and acceptance tests: synthetic catalogs with
// correlated covariance, an independent dense-likelihood posterior, and
// analytic Gaussian targets.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cosmofit/cosmology.hpp"
#include "cosmofit/dataset.hpp"
#include "cosmofit/error.hpp"
#include "cosmofit/density.hpp"
#include "cosmofit/inference.hpp"
#include "cosmofit/whitening.hpp"

namespace testing {

using namespace cosmofit;

inline std::filesystem::path scratch_dir(const std::string& name) {
  const char* env = std::getenv("COSMOFIT_TEST_TMP");
  std::filesystem::path base = env && *env ? std::filesystem::path(env)
                                           : std::filesystem::temp_directory_path() / "cosmofit_tests";
  const auto dir = base / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Systematic covariance with a few smooth correlated modes in z plus a
/// small diagonal floor.
inline Eigen::MatrixXd correlated_systematics(const std::vector<double>& z, double amplitude) {
  const auto n = static_cast<Eigen::Index>(z.size());
  Eigen::MatrixXd a(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double zi = z[static_cast<std::size_t>(i)];
    a(i, 0) = amplitude;
    a(i, 1) = amplitude * zi;
    a(i, 2) = amplitude * std::sin(3.0 * zi);
  }
  Eigen::MatrixXd sys = a * a.transpose();
  sys.diagonal().array() += 0.01 * amplitude * amplitude;
  return sys;
}

struct Synthetic {
  std::shared_ptr<SupernovaCatalog> catalog;
  Eigen::MatrixXd sys;
  TotalCovariance total;
  std::shared_ptr<CholeskyFactor> factor;
};

/// n supernovae with z ~ U(z_lo, z_hi) (sorted), errors sigma and moduli drawn
/// from N(mu_model(truth), Sigma_total).
inline Synthetic make_synthetic(ModelKind kind, const CosmoParams& truth, std::size_t n,
                                std::uint64_t seed, double sigma = 0.15, double sys_amp = 0.05,
                                double z_lo = 0.02, double z_hi = 1.2) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uz(z_lo, z_hi);
  Synthetic s;
  s.catalog = std::make_shared<SupernovaCatalog>();
  auto& cat = *s.catalog;
  for (std::size_t i = 0; i < n; ++i) cat.z.push_back(uz(rng));
  std::sort(cat.z.begin(), cat.z.end());
  cat.sigma_mu.assign(n, sigma);
  for (std::size_t i = 0; i < n; ++i) cat.ids.push_back("sn" + std::to_string(i));
  s.sys = correlated_systematics(cat.z, sys_amp);
  cat.mu_obs.assign(n, 0.0);
  s.total = assemble_total_covariance(cat, s.sys);
  s.factor = std::make_shared<CholeskyFactor>(cholesky_factorize(s.total));

  const std::vector<double> mu = distance_modulus(kind, truth, RedshiftGrid(cat.z));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (auto& v : y) v = normal(rng);
  const Eigen::VectorXd noise = s.factor->lower() * y;
  for (std::size_t i = 0; i < n; ++i) cat.mu_obs[i] = mu[i] + noise[static_cast<Eigen::Index>(i)];
  return s;
}

inline std::shared_ptr<PosteriorSpec> posterior_for(ModelKind kind, const Synthetic& s,
                                                    const PriorSpec& priors = {}) {
  return std::make_shared<PosteriorSpec>(kind, priors, s.catalog, s.factor);
}

/// The same posterior evaluated through the dense Gaussian likelihood
/// -1/2 r^T Sigma^{-1} r - 1/2 log|2 pi Sigma| (LDLT of Sigma), without whitening.
class DensePosterior : public LogDensity {
 public:
  DensePosterior(std::shared_ptr<const PosteriorSpec> spec, const Eigen::MatrixXd& sigma)
      : spec_(std::move(spec)), ldlt_(sigma) {
    const auto n = static_cast<double>(sigma.rows());
    log_norm_ = -0.5 * n * std::log(2.0 * M_PI) -
                0.5 * ldlt_.vectorD().array().log().sum();
    mu_obs_ = spec_->mu_obs();
  }

  std::size_t dim() const override { return spec_->dim(); }

  double log_density_gradient(const Eigen::VectorXd& xi, Eigen::VectorXd& grad) const override {
    grad = Eigen::VectorXd::Zero(xi.size());
    try {
      Eigen::VectorXd gp;
      const double lp = spec_->log_prior_unconstrained(xi, &gp);
      const CosmoParams p = inverse_transform(spec_->kind(), xi);
      Eigen::MatrixXd jac;
      const Eigen::VectorXd r = mu_obs_ - spec_->model_moduli(p, &jac);
      const Eigen::VectorXd sr = ldlt_.solve(r);
      const double ll = log_norm_ - 0.5 * r.dot(sr);
      // chain rule through the constrained parameters
      Eigen::VectorXd dconstrained = jac.transpose() * sr;
      Eigen::VectorXd g = gp;
      g[0] += dconstrained[0] * p.h0;
      g[1] += dconstrained[1] * p.omega_m * (1.0 - p.omega_m);
      for (Eigen::Index j = 2; j < g.size(); ++j) g[j] += dconstrained[j];
      const double v = lp + ll;
      if (!std::isfinite(v) || !g.allFinite()) return -std::numeric_limits<double>::infinity();
      grad = g;
      return v;
    } catch (const DomainError&) {
      return -std::numeric_limits<double>::infinity();
    }
  }

  double log_density(const Eigen::VectorXd& xi) const override {
    Eigen::VectorXd g;
    return log_density_gradient(xi, g);
  }

  Eigen::VectorXd initial_point(Rng& rng) const override { return spec_->initial_point(rng); }
  Eigen::VectorXd constrain(const Eigen::VectorXd& xi) const override { return spec_->constrain(xi); }

 private:
  std::shared_ptr<const PosteriorSpec> spec_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
  double log_norm_ = 0.0;
  Eigen::VectorXd mu_obs_;
};

/// N(mean, cov) on R^d.
class GaussianTarget : public LogDensity {
 public:
  GaussianTarget(Eigen::VectorXd mean, const Eigen::MatrixXd& cov)
      : mean_(std::move(mean)), llt_(cov) {
    log_norm_ = -0.5 * static_cast<double>(mean_.size()) * std::log(2.0 * M_PI) -
                Eigen::MatrixXd(llt_.matrixL()).diagonal().array().log().sum();
  }

  std::size_t dim() const override { return static_cast<std::size_t>(mean_.size()); }

  double log_density_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override {
    const Eigen::VectorXd diff = x - mean_;
    const Eigen::VectorXd s = llt_.solve(diff);
    grad = -s;
    return log_norm_ - 0.5 * diff.dot(s);
  }

  const Eigen::VectorXd& mean() const { return mean_; }

 private:
  Eigen::VectorXd mean_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double log_norm_ = 0.0;
};

/// theta ~ N(0, I_d), x | theta ~ N(theta, I_d): unnormalized posterior
/// p(theta) p(x | theta) with evidence N(x; 0, 2 I_d).
class ConjugateTarget : public LogDensity {
 public:
  explicit ConjugateTarget(Eigen::VectorXd x) : x_(std::move(x)) {}

  std::size_t dim() const override { return static_cast<std::size_t>(x_.size()); }

  double log_density_gradient(const Eigen::VectorXd& t, Eigen::VectorXd& grad) const override {
    const double d = static_cast<double>(x_.size());
    grad = -t + (x_ - t);
    return -d * std::log(2.0 * M_PI) - 0.5 * t.squaredNorm() - 0.5 * (x_ - t).squaredNorm();
  }

  double log_evidence() const {
    const double d = static_cast<double>(x_.size());
    return -0.5 * d * std::log(4.0 * M_PI) - x_.squaredNorm() / 4.0;
  }

 private:
  Eigen::VectorXd x_;
};

}  // namespace testing
