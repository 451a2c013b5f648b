#pragma once

// Convergence and information diagnostics over multi-chain draws. The R-hat,
// ESS and MCSE estimators follow the rank-normalized split-chain definitions
// (Vehtari et al. 2021) with Geyer's initial monotone sequence truncation.
// Undefined diagnostics (e.g. a constant chain) are reported as NaN.

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "cosmofit/cosmology.hpp"
#include "cosmofit/inference.hpp"
#include "cosmofit/sampler.hpp"

namespace cosmofit {

/// Per-chain draws of one scalar quantity.
using ChainValues = std::vector<std::vector<double>>;

inline bool is_undefined(double v) { return v != v; }

/// Rank-normalized split R-hat: max of the bulk and folded-tail versions.
double rhat(const ChainValues& chains);

enum class EssKind { Bulk, Tail };
double ess(const ChainValues& chains, EssKind kind);

/// ESS of the raw (not rank-normalized) split chains; the basis for MCSE of the mean.
double ess_mean(const ChainValues& chains);

/// Geyer-truncated ESS of the chains as given (no splitting or ranking).
double ess_raw(const ChainValues& chains);

enum class McseKind { Mean, Sd };
double mcse(const ChainValues& chains, McseKind kind);

/// Narrowest interval containing floor(mass * N) + 1 sorted draws.
std::pair<double, double> hdi(std::vector<double> draws, double mass = 0.94);

/// Gaussian KDE with Scott's bandwidth n^(-1/5) * sd, evaluated at `grid`.
std::vector<double> kde_density(const std::vector<double>& draws, const std::vector<double>& grid);
double scott_bandwidth(const std::vector<double>& draws);

struct KlOptions {
  std::size_t grid_points = 2000;
  double half_width_sd = 6.0;
  double support_lower = -std::numeric_limits<double>::infinity();
  double support_upper = std::numeric_limits<double>::infinity();
};

/// Marginal KL(posterior || prior) in nats, with the posterior density from a
/// KDE and the prior evaluated analytically. +inf when the prior vanishes
/// where the posterior has mass.
double kl_divergence(const std::vector<double>& draws, const std::function<double(double)>& prior_pdf,
                     const KlOptions& options = {});

/// 1 - post_sd / prior_sd.
double shrinkage(double prior_sd, double post_sd);

struct SummaryRow {
  std::string parameter;
  double mean;
  double sd;
  double hdi_low;
  double hdi_high;
  double mcse_mean;
  double mcse_sd;
  double ess_bulk;
  double ess_tail;
  double rhat;
};

struct InfoRow {
  std::string parameter;
  double prior_mean;
  double prior_sd;
  double post_mean;
  double post_sd;
  double shrinkage;
  double kl_nats;
};

SummaryRow summarize_parameter(const std::string& name, const ChainValues& chains,
                               double hdi_mass = 0.94);
std::vector<SummaryRow> summarize(const ChainSet& set, double hdi_mass = 0.94);

/// Prior-to-posterior comparison for every parameter of `kind`. Warnings
/// (e.g. infinite KL) are appended to `warnings` when given.
std::vector<InfoRow> information_table(const ChainSet& set, ModelKind kind, const PriorSpec& priors,
                                       std::vector<std::string>* warnings = nullptr);

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);
void write_info_csv(std::ostream& out, const std::vector<InfoRow>& rows);
std::string format_summary_table(const std::vector<SummaryRow>& rows);
std::string format_info_table(const std::vector<InfoRow>& rows);

/// Linearly interpolated sample quantile (type 7), on an unsorted copy.
double quantile(std::vector<double> values, double prob);

}  // namespace cosmofit
