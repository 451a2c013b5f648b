#pragma once

// Prior and posterior predictive replicates through the whitening map
// mu_rep = mu_model(theta) + L y, y ~ N(0, I); residual diagnostics and
// pointwise Hubble-diagram bands.

#include <cstddef>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "cosmofit/cosmology.hpp"
#include "cosmofit/dataset.hpp"
#include "cosmofit/inference.hpp"
#include "cosmofit/sampler.hpp"
#include "cosmofit/whitening.hpp"

namespace cosmofit {

enum class PredictiveSource { Prior, Posterior };

struct PredictiveDraws {
  PredictiveSource source = PredictiveSource::Posterior;
  Eigen::MatrixXd mu;      // replicates x points
  Eigen::MatrixXd params;  // replicates x d, constrained parameters behind each replicate
};

/// One replicate at a fixed model prediction.
Eigen::VectorXd predictive_replicate(const CholeskyFactor& factor, const Eigen::VectorXd& mu_model,
                                     Rng& rng);

/// Parameters drawn from the prior; draws the model cannot evaluate are
/// redrawn up to 100 times before giving up.
PredictiveDraws predictive_prior(const PosteriorSpec& spec, Rng& rng, std::size_t count);

/// Parameters drawn uniformly (with replacement) from the retained draws.
PredictiveDraws predictive_posterior(const PosteriorSpec& spec, const ChainSet& chains, Rng& rng,
                                     std::size_t count);

enum class PointEstimate { Mean, Median };

struct ResidualReport {
  CosmoParams params;          // the point estimate the residuals refer to
  std::vector<double> z;
  Eigen::VectorXd raw;         // mu_obs - mu_model
  Eigen::VectorXd whitened;    // L^{-1} raw
  double whitened_mean = 0.0;
  double whitened_var = 0.0;   // ddof = 1
  // generalized least squares fit of the residuals against z
  double trend_slope = 0.0;
  double trend_slope_se = 0.0;
  std::vector<double> qq_theoretical;  // standard normal quantiles
  std::vector<double> qq_empirical;    // sorted whitened residuals
};

ResidualReport residual_report(const PosteriorSpec& spec, const ChainSet& chains,
                               PointEstimate estimate = PointEstimate::Mean);
ResidualReport residual_report_at(const PosteriorSpec& spec, const CosmoParams& p);

struct Band {
  double level;
  std::vector<double> lower;
  std::vector<double> upper;
};

struct HubbleBands {
  ModelKind kind;
  std::vector<double> z;
  std::vector<double> mean;    // posterior mean of mu_model(theta, z)
  std::vector<double> median;
  std::vector<Band> bands;     // central pointwise intervals
};

/// Pointwise posterior quantiles of mu_model(theta, z) over the grid. Uses at
/// most `max_draws` evenly thinned draws (0 = all).
HubbleBands hubble_bands(ModelKind kind, const ChainSet& chains, const RedshiftGrid& grid,
                         const std::vector<double>& levels = {0.68, 0.95},
                         std::size_t max_draws = 0);

/// Fraction of grid points where the two bands at `level` intersect.
double band_overlap(const HubbleBands& a, const HubbleBands& b, double level);

/// A catalog with the template's redshifts and errors and moduli drawn from
/// N(mu_model(p), Sigma); `zero_noise` returns mu_model exactly.
SupernovaCatalog simulate_catalog(ModelKind kind, const CosmoParams& p,
                                  const SupernovaCatalog& tmpl, const CholeskyFactor& total,
                                  Rng& rng, bool zero_noise = false);

void write_bands_csv(std::ostream& out, const HubbleBands& bands);
void write_residuals_csv(std::ostream& out, const ResidualReport& report);
void write_qq_csv(std::ostream& out, const ResidualReport& report);

}  // namespace cosmofit
