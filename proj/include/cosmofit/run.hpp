#pragma once

// Run directories and the operations behind the command-line tool.
//
// Layout of a run directory:
//   config.txt             fit options and prior hyperparameters (key = value)
//   metadata.txt           seed, model, data checksums, timings, draw-file checksums
//   chain_<k>.csv          retained draws: constrained parameters, lp__, energy__,
//                          divergent__, treedepth__, accept_stat__, n_leapfrog__
//   summary.csv / .txt     convergence summary
//   info.csv / .txt        prior-to-posterior comparison
//   pointwise_loglik.bin   whitened pointwise log-likelihoods (small problems only)

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cosmofit/cosmology.hpp"
#include "cosmofit/dataset.hpp"
#include "cosmofit/diagnostics.hpp"
#include "cosmofit/inference.hpp"
#include "cosmofit/predictive.hpp"
#include "cosmofit/sampler.hpp"
#include "cosmofit/selection.hpp"

namespace cosmofit {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitDegraded = 2;

/// Environment variable naming the default parent of new run directories.
inline constexpr const char* kOutputRootEnv = "COSMOFIT_OUTPUT_ROOT";

/// The pointwise matrix is stored only up to this many entries; larger runs
/// recompute it on demand.
inline constexpr std::size_t kMaxStoredPointwise = 10'000'000;

using KeyValues = std::map<std::string, std::string>;
KeyValues read_key_values(const fs::path& path);
void write_key_values(const fs::path& path, const KeyValues& kv);

struct FitOptions {
  ModelKind kind = ModelKind::LCDM;
  fs::path data;
  fs::path cov;
  ColumnMapping columns;
  SamplerConfig sampler;
  std::optional<fs::path> prior_file;
  fs::path out;  // empty: <output root>/<model>-seed<seed>
};

struct FitOutcome {
  fs::path dir;
  std::vector<SummaryRow> summary;
  std::vector<std::string> warnings;

  int exit_code() const { return warnings.empty() ? kExitOk : kExitDegraded; }
};

fs::path default_run_dir(ModelKind kind, std::uint64_t seed);

/// Builds the whitened posterior from catalog and systematic covariance files.
std::shared_ptr<PosteriorSpec> build_posterior(ModelKind kind, const PriorSpec& priors,
                                               const fs::path& data, const fs::path& cov,
                                               const ColumnMapping& columns = {});

/// Load, assemble, factorize, sample, summarize and write the run directory.
/// Nothing is left behind when an error is thrown.
FitOutcome run_fit(const FitOptions& options);

struct LoadedRun {
  fs::path dir;
  ModelKind kind = ModelKind::LCDM;
  PriorSpec priors;
  SamplerConfig sampler;
  fs::path data;
  fs::path cov;
  ColumnMapping columns;
  std::string data_checksum;
  KeyValues config;
  KeyValues metadata;
  std::shared_ptr<PosteriorSpec> spec;
  ChainSet chains;
};

/// Reloads a run, verifying draw-file and data checksums.
LoadedRun load_run(const fs::path& dir);

struct DiagnoseOutput {
  std::vector<SummaryRow> summary;
  std::vector<InfoRow> info;
  std::vector<std::string> warnings;
};

/// Computes the summary and information tables and writes them into the run directory.
DiagnoseOutput diagnose_run(const LoadedRun& run);

PointwiseLogLik run_pointwise(const LoadedRun& run);
WaicReport run_waic(const LoadedRun& run);

/// Ranked WAIC table; all runs must share the same data checksum.
std::vector<WaicComparisonRow> compare_runs(const std::vector<LoadedRun>& runs);

EvidenceEstimate run_evidence(const LoadedRun& run, std::uint64_t seed,
                              const BridgeOptions& options = {});

/// Parses "lo:hi:count".
RedshiftGrid parse_grid(const std::string& spec);
std::vector<double> parse_levels(const std::string& spec);

/// Parses "H0=70,Omega_m=0.3,..." for `kind`; missing entries keep their defaults.
CosmoParams parse_params(ModelKind kind, const std::string& spec);

std::string run_label(const LoadedRun& run);

}  // namespace cosmofit
