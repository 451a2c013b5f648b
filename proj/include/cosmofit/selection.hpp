#pragma once

// Model selection: WAIC from whitened pointwise log-likelihoods, marginal
// likelihoods by iterative bridge sampling, and Bayes factors.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cosmofit/density.hpp"
#include "cosmofit/inference.hpp"
#include "cosmofit/sampler.hpp"

namespace cosmofit {

/// ell(s, i) = log phi(y_i(theta_s)); the likelihood of draw s is
/// row(s).sum() + log_det_t.
struct PointwiseLogLik {
  Eigen::MatrixXd ell;  // draws x points
  double log_det_t = 0.0;

  std::size_t draws() const noexcept { return static_cast<std::size_t>(ell.rows()); }
  std::size_t points() const noexcept { return static_cast<std::size_t>(ell.cols()); }
};

/// Evaluates every retained draw of `chains` (chain after chain).
PointwiseLogLik pointwise_loglik(const PosteriorSpec& spec, const ChainSet& chains);

struct WaicReport {
  std::string name;
  double lppd = 0.0;
  double p_waic = 0.0;
  double elpd = 0.0;
  double se = 0.0;
  double log_det_t = 0.0;           // reported, excluded from elpd
  Eigen::VectorXd elpd_pointwise;   // lppd_i - p_waic_i
  Eigen::VectorXd p_waic_pointwise;
  std::vector<std::size_t> high_variance_points;  // p_waic_i > 0.4

  std::size_t points() const noexcept { return static_cast<std::size_t>(elpd_pointwise.size()); }
};

inline constexpr double kWaicVarianceWarning = 0.4;

WaicReport waic(const PointwiseLogLik& pl, std::string name = "");

struct WaicComparisonRow {
  std::string name;
  std::size_t rank = 0;
  double elpd = 0.0;
  double p_waic = 0.0;
  double se = 0.0;
  double elpd_diff = 0.0;
  double dse = 0.0;
  double weight = 0.0;  // pseudo-BMA
  bool warning = false;
};

/// Ranked by elpd, best first. Throws when the reports cover different point counts.
std::vector<WaicComparisonRow> compare_waic(const std::vector<WaicReport>& reports);

void write_waic_csv(std::ostream& out, const std::vector<WaicComparisonRow>& rows);
std::string format_waic_table(const std::vector<WaicComparisonRow>& rows);

struct BridgeOptions {
  std::size_t max_iterations = 1000;
  double rtol = 1e-10;
  std::size_t min_draws = 2000;
};

struct EvidenceEstimate {
  double log_marginal = 0.0;
  double relative_error = 0.0;  // on the marginal-likelihood scale
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t posterior_draws = 0;  // draws entering the estimator
  std::size_t proposal_draws = 0;
  std::size_t proposal_outside_support = 0;
  std::vector<std::string> warnings;
};

/// Meng-Wong bridge sampling with the optimal bridge function and a normal
/// proposal moment-matched to the first half of each chain (unconstrained
/// draws). `target` must evaluate the full normalized log posterior.
EvidenceEstimate bridge_evidence(const LogDensity& target, const ChainSet& chains, Rng& rng,
                                 const BridgeOptions& options = {});

struct BayesFactor {
  double log_bf = 0.0;
  double bf = 1.0;        // exp(log_bf); may be 0 or inf
  bool degraded = false;  // either estimate unconverged
};

BayesFactor bayes_factor(const EvidenceEstimate& e1, const EvidenceEstimate& e2);

/// Posterior odds M1:M2 given prior odds; log scale.
inline double log_posterior_odds(const BayesFactor& bf, double log_prior_odds = 0.0) {
  return bf.log_bf + log_prior_odds;
}

void write_evidence_csv(std::ostream& out, const std::vector<std::string>& names,
                        const std::vector<EvidenceEstimate>& estimates);
std::string format_evidence_table(const std::vector<std::string>& names,
                                  const std::vector<EvidenceEstimate>& estimates);

}  // namespace cosmofit
