#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cosmofit/cosmology.hpp"
#include "cosmofit/dataset.hpp"
#include "cosmofit/density.hpp"
#include "cosmofit/whitening.hpp"

namespace cosmofit {

/// Hyperparameters of the independent priors
///   H0 ~ LogNormal(h0_loc, h0_scale), Omega_m ~ Beta(a, b),
///   w ~ N, w0 ~ N, wa ~ N.
struct PriorSpec {
  double h0_loc = 4.248495242049359;  // ln 70
  double h0_scale = 0.5;
  double omega_m_alpha = 3.0;
  double omega_m_beta = 7.0;
  double w_mean = -1.0;
  double w_sd = 2.0;
  double w0_mean = -1.0;
  double w0_sd = 2.0;
  double wa_mean = 0.0;
  double wa_sd = 4.0;

  void validate() const;
  /// Applies one `key = value` override; throws InvalidArgument on unknown keys.
  void set(const std::string& key, double value);
  /// Reads `key = value` lines ('#' comments allowed).
  static PriorSpec from_file(const std::string& path);
  std::vector<std::pair<std::string, double>> entries() const;
};

enum class PriorFamily { LogNormal, Beta, Normal };

/// The prior of a single parameter, in constrained space.
struct MarginalPrior {
  PriorFamily family;
  double a;  // location / alpha / mean
  double b;  // scale / beta / sd

  double log_pdf(double x) const;
  double pdf(double x) const;
  double mean() const;
  double sd() const;
  double support_lower() const;
  double support_upper() const;
};

MarginalPrior marginal_prior(ModelKind kind, const PriorSpec& priors, std::size_t index);

/// Sum of the per-parameter prior log densities (constrained space, normalized).
double log_prior(ModelKind kind, const CosmoParams& p, const PriorSpec& priors);

/// (ln H0, logit Omega_m, w...) and back.
Eigen::VectorXd transform(ModelKind kind, const CosmoParams& p);
CosmoParams inverse_transform(ModelKind kind, const Eigen::VectorXd& xi);
/// log |d params / d xi| of inverse_transform.
double log_jacobian(ModelKind kind, const Eigen::VectorXd& xi);

CosmoParams sample_prior(ModelKind kind, const PriorSpec& priors, Rng& rng);

/// Log posterior in unconstrained coordinates:
///   log prior + log Jacobian + whitened Gaussian log-likelihood (with log|det T|).
class PosteriorSpec : public LogDensity {
 public:
  PosteriorSpec(ModelKind kind, PriorSpec priors, std::shared_ptr<const SupernovaCatalog> data,
                std::shared_ptr<const CholeskyFactor> factor);

  ModelKind kind() const noexcept { return kind_; }
  const PriorSpec& priors() const noexcept { return priors_; }
  const SupernovaCatalog& data() const noexcept { return *data_; }
  const CholeskyFactor& factor() const noexcept { return *factor_; }
  const QuadraturePlan& plan() const noexcept { return plan_; }
  const Eigen::VectorXd& mu_obs() const noexcept { return mu_obs_; }

  std::size_t dim() const override { return dimension(kind_); }
  double log_density_gradient(const Eigen::VectorXd& xi, Eigen::VectorXd& grad) const override;
  double log_density(const Eigen::VectorXd& xi) const override { return log_posterior(xi); }
  /// Prior centre (ln 70, logit of the Beta mean, prior means) with U(-0.5, 0.5) jitter.
  Eigen::VectorXd initial_point(Rng& rng) const override;
  Eigen::VectorXd constrain(const Eigen::VectorXd& xi) const override;
  std::vector<std::string> parameter_names() const override;

  double log_posterior(const Eigen::VectorXd& xi) const;
  Eigen::VectorXd grad_log_posterior(const Eigen::VectorXd& xi) const;

  /// Prior + Jacobian in unconstrained space, with its gradient when `grad` is non-null.
  double log_prior_unconstrained(const Eigen::VectorXd& xi, Eigen::VectorXd* grad) const;

  /// mu_model at the catalog redshifts; Jacobian w.r.t. constrained params on request.
  Eigen::VectorXd model_moduli(const CosmoParams& p, Eigen::MatrixXd* jacobian = nullptr) const;

  /// Whitened pointwise log-likelihood at constrained parameters.
  WhitenedLogLik pointwise_loglik(const CosmoParams& p) const;
  double log_likelihood(const CosmoParams& p) const;

  /// Drop log|det T| from every evaluation (differences are unaffected).
  void set_include_log_det(bool include) noexcept { include_log_det_ = include; }

 private:
  ModelKind kind_;
  PriorSpec priors_;
  std::shared_ptr<const SupernovaCatalog> data_;
  std::shared_ptr<const CholeskyFactor> factor_;
  QuadraturePlan plan_;
  Eigen::VectorXd mu_obs_;
  bool include_log_det_ = true;
};

}  // namespace cosmofit
