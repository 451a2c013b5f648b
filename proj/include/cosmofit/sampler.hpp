#pragma once

// Hamiltonian samplers over a LogDensity: the leapfrog integrator, fixed-length
// HMC, slice-based NUTS with dual-averaging step-size adaptation, windowed
// diagonal metric adaptation and a multi-chain driver. A random-walk
// Metropolis stepper is included for invariance tests.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cosmofit/density.hpp"

namespace cosmofit {

/// Position (unconstrained parameters) and momentum.
struct PhasePoint {
  Eigen::VectorXd theta;
  Eigen::VectorXd phi;
};

/// Diagonal Euclidean metric. `inv_diag` holds C^{-1}, i.e. the posterior
/// marginal variances the metric is adapted to; momenta are drawn from
/// N(0, C) with C = diag(1 / inv_diag).
struct MassMatrix {
  Eigen::VectorXd inv_diag;

  static MassMatrix identity(std::size_t d) {
    return {Eigen::VectorXd::Ones(static_cast<Eigen::Index>(d))};
  }
  std::size_t size() const noexcept { return static_cast<std::size_t>(inv_diag.size()); }

  Eigen::VectorXd velocity(const Eigen::VectorXd& phi) const {
    return inv_diag.cwiseProduct(phi);
  }
  double kinetic(const Eigen::VectorXd& phi) const {
    return 0.5 * phi.cwiseProduct(inv_diag).dot(phi);
  }
  Eigen::VectorXd sample_momentum(Rng& rng) const;
};

/// Dense Euclidean metric, K = 1/2 phi^T M^{-1} phi. Used where a
/// reparameterization induces a non-diagonal kinetic energy.
struct DenseMetric {
  Eigen::MatrixXd inv;

  Eigen::VectorXd velocity(const Eigen::VectorXd& phi) const { return inv * phi; }
  double kinetic(const Eigen::VectorXd& phi) const { return 0.5 * phi.dot(inv * phi); }
};

/// A phase point together with the cached log density and its gradient at theta.
struct TrajectoryState {
  PhasePoint point;
  double log_density = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd grad;

  /// Evaluates `target` at `theta` with zero momentum.
  static TrajectoryState at(const LogDensity& target, const Eigen::VectorXd& theta);
};

/// One leapfrog step: half kick, drift, half kick, with U = -log density.
/// Returns false when the new log density or gradient is not finite.
template <class Metric>
bool leapfrog(TrajectoryState& s, double eps, const Metric& metric, const LogDensity& target) {
  s.point.phi += 0.5 * eps * s.grad;
  s.point.theta += eps * metric.velocity(s.point.phi);
  s.log_density = target.log_density_gradient(s.point.theta, s.grad);
  s.point.phi += 0.5 * eps * s.grad;
  return std::isfinite(s.log_density) && s.grad.allFinite();
}

/// `steps` leapfrog steps. Returns false at the first non-finite state.
template <class Metric>
bool leapfrog(TrajectoryState& s, double eps, int steps, const Metric& metric,
              const LogDensity& target) {
  for (int i = 0; i < steps; ++i)
    if (!leapfrog(s, eps, metric, target)) return false;
  return true;
}

/// Hamiltonian H = -log density + K.
template <class Metric>
double hamiltonian(const TrajectoryState& s, const Metric& metric) {
  return -s.log_density + metric.kinetic(s.point.phi);
}

struct HmcResult {
  TrajectoryState state;
  bool accepted = false;
  double accept_prob = 0.0;
};

/// Fixed-length HMC transition: momentum refresh, `steps` leapfrog steps,
/// momentum negation, Metropolis accept with min(1, exp(H_start - H_prop)).
HmcResult hmc_step(const TrajectoryState& current, double eps, int steps, const MassMatrix& mass,
                   const LogDensity& target, Rng& rng);

struct NutsTransition {
  TrajectoryState state;
  int tree_depth = 0;      // number of doublings performed
  int n_leapfrog = 0;
  bool divergent = false;
  double accept_stat = 0.0;  // mean min(1, exp(H0 - H)) over the tree
  double energy = 0.0;       // Hamiltonian at the start of the transition
};

inline constexpr double kDivergenceThreshold = 1000.0;

/// Slice-based NUTS transition. Doubling continues until a U-turn, a
/// divergence (H - H0 > 1000) or after a subtree of depth `max_tree_depth`
/// has been added; `max_tree_depth = 0` is a single leapfrog proposal.
NutsTransition nuts_step(const TrajectoryState& current, double eps, int max_tree_depth,
                         const MassMatrix& mass, const LogDensity& target, Rng& rng);

struct MhResult {
  Eigen::VectorXd x;
  double log_density;
  bool accepted;
};

/// Gaussian random-walk Metropolis with isotropic `scale`.
MhResult mh_step(const Eigen::VectorXd& x, double log_density, double scale,
                 const LogDensity& target, Rng& rng);

/// Nesterov dual averaging of log step size toward a target acceptance.
class DualAveraging {
 public:
  explicit DualAveraging(double target_accept, double gamma = 0.05, double t0 = 10.0,
                         double kappa = 0.75);

  void restart(double step_size);
  void update(double accept_stat);
  double step_size() const { return std::exp(log_eps_); }
  /// The averaged iterate, used once adaptation stops.
  double final_step_size() const { return std::exp(log_eps_bar_); }

 private:
  double delta_, gamma_, t0_, kappa_;
  double mu_ = 0.0;
  double log_eps_ = 0.0;
  double log_eps_bar_ = 0.0;
  double h_bar_ = 0.0;
  double counter_ = 0.0;
};

/// Heuristic initial step size: doubles or halves until the one-step
/// acceptance ratio crosses 0.5.
double find_reasonable_step_size(const TrajectoryState& s, double eps, const MassMatrix& mass,
                                 const LogDensity& target, Rng& rng);

struct SamplerConfig {
  double step_size = 0.0;  // initial step size; 0 picks one heuristically
  double target_accept = 0.8;
  int max_tree_depth = 10;
  std::size_t warmup = 1000;
  std::size_t draws = 9000;
  std::size_t chains = 4;
  std::uint64_t seed = 1;
  bool adapt_mass = true;
  bool parallel = true;

  void validate() const;
};

/// Warmup schedule: an initial fast interval, doubling slow windows for the
/// metric, and a terminal fast interval.
struct AdaptationWindows {
  std::size_t init_buffer;
  std::size_t term_buffer;
  std::vector<std::size_t> window_ends;  // iteration index (exclusive) where each slow window closes

  static AdaptationWindows make(std::size_t warmup);
};

struct ChainDraws {
  Eigen::MatrixXd draws;          // retained draws x d, constrained space
  Eigen::MatrixXd unconstrained;  // retained draws x d, sampling space
  std::vector<double> log_density;
  std::vector<double> energy;
  std::vector<double> accept_stat;
  std::vector<int> tree_depth;
  std::vector<int> n_leapfrog;
  std::vector<char> divergent;

  double step_size = 0.0;
  MassMatrix mass;
  std::vector<double> warmup_step_size;  // adaptation history per warmup iteration
  std::vector<double> warmup_accept_stat;
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return static_cast<std::size_t>(draws.rows()); }
  std::size_t divergences() const;
  double mean_accept_stat() const;
};

struct ChainSet {
  std::vector<std::string> names;
  std::vector<ChainDraws> chains;

  std::size_t num_chains() const noexcept { return chains.size(); }
  std::size_t num_params() const noexcept { return names.size(); }
  std::size_t draws_per_chain() const { return chains.empty() ? 0 : chains.front().size(); }
  std::size_t total_draws() const;
  /// Per-chain draws of parameter `j` (constrained).
  std::vector<std::vector<double>> parameter(std::size_t j) const;
  /// All retained draws stacked chain after chain; rows are draws.
  Eigen::MatrixXd pooled() const;
  Eigen::MatrixXd pooled_unconstrained() const;
  std::vector<std::string> warnings() const;
};

/// One adapted NUTS chain. `chain_id` selects the RNG substream.
ChainDraws run_chain(const LogDensity& target, const SamplerConfig& config,
                     std::size_t chain_id);

/// `config.chains` independent chains, concurrent when `config.parallel`.
/// The result depends only on (target, config), never on scheduling.
ChainSet run_chains(const LogDensity& target, const SamplerConfig& config);

/// Deterministic per-chain generator derived from (seed, chain_id).
Rng make_chain_rng(std::uint64_t seed, std::size_t chain_id);

}  // namespace cosmofit
