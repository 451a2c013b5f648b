#include "cosmofit/sampler.hpp"

#include <algorithm>
#include <exception>
#include <numeric>
#include <thread>

#include "cosmofit/error.hpp"

namespace cosmofit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double standard_uniform(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

bool no_uturn(const TrajectoryState& minus, const TrajectoryState& plus, const MassMatrix& m) {
  const Eigen::VectorXd span = plus.point.theta - minus.point.theta;
  return span.dot(m.velocity(minus.point.phi)) >= 0.0 &&
         span.dot(m.velocity(plus.point.phi)) >= 0.0;
}

struct Subtree {
  TrajectoryState minus;
  TrajectoryState plus;
  TrajectoryState proposal;
  long n_valid = 0;  // leaves inside the slice
  bool ok = true;    // no U-turn and no divergence anywhere inside
  bool divergent = false;
  double alpha_sum = 0.0;
  int n_alpha = 0;
};

struct TreeContext {
  const LogDensity& target;
  const MassMatrix& mass;
  double eps;
  double log_u;  // log of the slice variable
  double h0;     // Hamiltonian at the start of the transition
  Rng& rng;
};

Subtree build_tree(const TrajectoryState& edge, int direction, int depth, TreeContext& ctx) {
  if (depth == 0) {
    Subtree t;
    TrajectoryState s = edge;
    const bool finite = leapfrog(s, direction * ctx.eps, ctx.mass, ctx.target);
    double h = finite ? hamiltonian(s, ctx.mass) : kInf;
    if (!std::isfinite(h)) h = kInf;
    t.divergent = !(h - ctx.h0 <= kDivergenceThreshold);
    t.ok = !t.divergent;
    t.n_valid = (ctx.log_u <= -h) ? 1 : 0;
    t.alpha_sum = std::isfinite(h) ? std::min(1.0, std::exp(ctx.h0 - h)) : 0.0;
    t.n_alpha = 1;
    t.minus = s;
    t.plus = s;
    t.proposal = std::move(s);
    return t;
  }

  Subtree t = build_tree(edge, direction, depth - 1, ctx);
  if (!t.ok) return t;
  const TrajectoryState& outer = direction < 0 ? t.minus : t.plus;
  Subtree u = build_tree(outer, direction, depth - 1, ctx);

  if (direction < 0)
    t.minus = std::move(u.minus);
  else
    t.plus = std::move(u.plus);

  const long total = t.n_valid + u.n_valid;
  if (total > 0 && standard_uniform(ctx.rng) < static_cast<double>(u.n_valid) / total)
    t.proposal = std::move(u.proposal);
  t.n_valid = total;
  t.alpha_sum += u.alpha_sum;
  t.n_alpha += u.n_alpha;
  t.divergent = t.divergent || u.divergent;
  t.ok = u.ok && no_uturn(t.minus, t.plus, ctx.mass);
  return t;
}

}  // namespace

Eigen::VectorXd MassMatrix::sample_momentum(Rng& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd phi(inv_diag.size());
  for (Eigen::Index i = 0; i < phi.size(); ++i) phi[i] = normal(rng) / std::sqrt(inv_diag[i]);
  return phi;
}

TrajectoryState TrajectoryState::at(const LogDensity& target, const Eigen::VectorXd& theta) {
  TrajectoryState s;
  s.point.theta = theta;
  s.point.phi = Eigen::VectorXd::Zero(theta.size());
  s.log_density = target.log_density_gradient(theta, s.grad);
  return s;
}

HmcResult hmc_step(const TrajectoryState& current, double eps, int steps, const MassMatrix& mass,
                   const LogDensity& target, Rng& rng) {
  TrajectoryState start = current;
  start.point.phi = mass.sample_momentum(rng);
  const double h_start = hamiltonian(start, mass);

  TrajectoryState prop = start;
  const bool finite = leapfrog(prop, eps, steps, mass, target);
  prop.point.phi = -prop.point.phi;
  const double h_prop = finite ? hamiltonian(prop, mass) : kInf;

  HmcResult out;
  const double log_rho = h_start - h_prop;
  out.accept_prob = std::isfinite(log_rho) ? std::min(1.0, std::exp(log_rho)) : 0.0;
  const double u = standard_uniform(rng);
  if (u < out.accept_prob) {
    out.state = std::move(prop);
    out.accepted = true;
  } else {
    out.state = current;
  }
  return out;
}

NutsTransition nuts_step(const TrajectoryState& current, double eps, int max_tree_depth,
                         const MassMatrix& mass, const LogDensity& target, Rng& rng) {
  TrajectoryState start = current;
  start.point.phi = mass.sample_momentum(rng);
  const double h0 = hamiltonian(start, mass);

  // u ~ Uniform(0, exp(-H0)), kept on the log scale
  TreeContext ctx{target, mass, eps, -h0 + std::log(standard_uniform(rng)), h0, rng};

  NutsTransition out;
  out.energy = h0;
  TrajectoryState minus = start;
  TrajectoryState plus = start;
  out.state = current;
  long n_valid = 1;
  double alpha_sum = 0.0;
  int n_alpha = 0;

  for (int depth = 0; depth <= std::max(0, max_tree_depth); ++depth) {
    const int direction = standard_uniform(rng) < 0.5 ? -1 : 1;
    Subtree t = build_tree(direction < 0 ? minus : plus, direction, depth, ctx);
    if (direction < 0)
      minus = t.minus;
    else
      plus = t.plus;

    out.tree_depth = depth + 1;
    alpha_sum += t.alpha_sum;
    n_alpha += t.n_alpha;
    out.divergent = out.divergent || t.divergent;

    if (t.ok && t.n_valid > 0 &&
        standard_uniform(rng) < std::min(1.0, static_cast<double>(t.n_valid) / n_valid))
      out.state = t.proposal;
    n_valid += t.n_valid;
    if (!t.ok || !no_uturn(minus, plus, mass)) break;
  }

  out.n_leapfrog = n_alpha;
  out.accept_stat = n_alpha > 0 ? alpha_sum / n_alpha : 0.0;
  out.state.point.phi.setZero();
  return out;
}

MhResult mh_step(const Eigen::VectorXd& x, double log_density, double scale,
                 const LogDensity& target, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd proposal(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) proposal[i] = x[i] + scale * normal(rng);
  const double lp = target.log_density(proposal);
  const double u = standard_uniform(rng);
  if (std::isfinite(lp) && std::log(u) < lp - log_density) return {proposal, lp, true};
  return {x, log_density, false};
}

DualAveraging::DualAveraging(double target_accept, double gamma, double t0, double kappa)
    : delta_(target_accept), gamma_(gamma), t0_(t0), kappa_(kappa) {}

void DualAveraging::restart(double step_size) {
  mu_ = std::log(10.0 * step_size);
  log_eps_ = std::log(step_size);
  log_eps_bar_ = 0.0;
  h_bar_ = 0.0;
  counter_ = 0.0;
}

void DualAveraging::update(double accept_stat) {
  counter_ += 1.0;
  const double a = std::isfinite(accept_stat) ? std::min(1.0, accept_stat) : 0.0;
  const double eta = 1.0 / (counter_ + t0_);
  h_bar_ = (1.0 - eta) * h_bar_ + eta * (delta_ - a);
  log_eps_ = mu_ - std::sqrt(counter_) / gamma_ * h_bar_;
  const double x_eta = std::pow(counter_, -kappa_);
  log_eps_bar_ = x_eta * log_eps_ + (1.0 - x_eta) * log_eps_bar_;
}

double find_reasonable_step_size(const TrajectoryState& s, double eps, const MassMatrix& mass,
                                 const LogDensity& target, Rng& rng) {
  TrajectoryState start = s;
  start.point.phi = mass.sample_momentum(rng);
  const double h0 = hamiltonian(start, mass);
  auto log_ratio = [&](double e) {
    TrajectoryState t = start;
    if (!leapfrog(t, e, mass, target)) return -kInf;
    const double r = h0 - hamiltonian(t, mass);
    return std::isfinite(r) ? r : -kInf;
  };
  double r = log_ratio(eps);
  const int a = r > std::log(0.5) ? 1 : -1;
  for (int k = 0; k < 60 && a * r > -a * std::log(2.0); ++k) {
    eps *= a > 0 ? 2.0 : 0.5;
    r = log_ratio(eps);
  }
  return std::clamp(eps, 1e-12, 1e3);
}

void SamplerConfig::validate() const {
  if (step_size < 0 || !std::isfinite(step_size))
    throw InvalidArgument("sampler", "step size must be non-negative");
  if (!(target_accept > 0 && target_accept < 1))
    throw InvalidArgument("sampler", "target_accept must lie in (0, 1)");
  if (max_tree_depth < 0) throw InvalidArgument("sampler", "max tree depth must be >= 0");
  if (draws == 0) throw InvalidArgument("sampler", "draws must be positive");
  if (chains == 0) throw InvalidArgument("sampler", "chains must be positive");
}

AdaptationWindows AdaptationWindows::make(std::size_t warmup) {
  AdaptationWindows w{0, 0, {}};
  if (warmup < 20) return w;
  std::size_t init = 75, term = 50, base = 25;
  if (init + term + base > warmup) {
    init = static_cast<std::size_t>(0.15 * static_cast<double>(warmup));
    term = static_cast<std::size_t>(0.1 * static_cast<double>(warmup));
    base = warmup - init - term;
  }
  w.init_buffer = init;
  w.term_buffer = term;
  const std::size_t slow_end = warmup - term;
  std::size_t start = init;
  std::size_t size = base;
  while (start < slow_end) {
    std::size_t end = start + size;
    if (end + 2 * size > slow_end) end = slow_end;
    w.window_ends.push_back(end);
    start = end;
    size *= 2;
  }
  return w;
}

std::size_t ChainDraws::divergences() const {
  return static_cast<std::size_t>(std::count(divergent.begin(), divergent.end(), 1));
}

double ChainDraws::mean_accept_stat() const {
  if (accept_stat.empty()) return 0.0;
  return std::accumulate(accept_stat.begin(), accept_stat.end(), 0.0) /
         static_cast<double>(accept_stat.size());
}

std::size_t ChainSet::total_draws() const {
  std::size_t n = 0;
  for (const auto& c : chains) n += c.size();
  return n;
}

std::vector<std::vector<double>> ChainSet::parameter(std::size_t j) const {
  std::vector<std::vector<double>> out;
  out.reserve(chains.size());
  for (const auto& c : chains) {
    const auto col = c.draws.col(static_cast<Eigen::Index>(j));
    out.emplace_back(col.data(), col.data() + col.size());
  }
  return out;
}

namespace {

Eigen::MatrixXd stack(const std::vector<ChainDraws>& chains, bool unconstrained,
                      std::size_t d) {
  std::size_t rows = 0;
  for (const auto& c : chains) rows += c.size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
  Eigen::Index r = 0;
  for (const auto& c : chains) {
    const Eigen::MatrixXd& m = unconstrained ? c.unconstrained : c.draws;
    out.middleRows(r, m.rows()) = m;
    r += m.rows();
  }
  return out;
}

}  // namespace

Eigen::MatrixXd ChainSet::pooled() const { return stack(chains, false, num_params()); }

Eigen::MatrixXd ChainSet::pooled_unconstrained() const {
  return stack(chains, true, num_params());
}

std::vector<std::string> ChainSet::warnings() const {
  std::vector<std::string> out;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (const auto& w : chains[c].warnings) out.push_back("chain " + std::to_string(c) + ": " + w);
  return out;
}

Rng make_chain_rng(std::uint64_t seed, std::size_t chain_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(chain_id), 0x5eedu};
  return Rng(seq);
}

ChainDraws run_chain(const LogDensity& target, const SamplerConfig& config,
                     std::size_t chain_id) {
  config.validate();
  const std::size_t d = target.dim();
  Rng rng = make_chain_rng(config.seed, chain_id);

  TrajectoryState state;
  for (int attempt = 0;; ++attempt) {
    state = TrajectoryState::at(target, target.initial_point(rng));
    if (std::isfinite(state.log_density) && state.grad.allFinite()) break;
    if (attempt == 100)
      throw Error("sampler", "no finite starting point after 100 attempts (chain " +
                                 std::to_string(chain_id) + ")");
  }

  ChainDraws out;
  out.mass = MassMatrix::identity(d);
  double eps = config.step_size > 0 ? config.step_size
                                    : find_reasonable_step_size(state, 1.0, out.mass, target, rng);
  DualAveraging dual(config.target_accept);
  dual.restart(eps);

  const AdaptationWindows windows = AdaptationWindows::make(config.warmup);
  std::size_t window = 0;
  std::size_t n_acc = 0;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));

  for (std::size_t it = 0; it < config.warmup; ++it) {
    NutsTransition tr = nuts_step(state, eps, config.max_tree_depth, out.mass, target, rng);
    state = std::move(tr.state);
    dual.update(tr.accept_stat);
    eps = dual.step_size();
    out.warmup_step_size.push_back(eps);
    out.warmup_accept_stat.push_back(tr.accept_stat);

    const bool slow = config.adapt_mass && window < windows.window_ends.size() &&
                      it >= windows.init_buffer;
    if (slow) {
      ++n_acc;
      const Eigen::VectorXd delta = state.point.theta - mean;
      mean += delta / static_cast<double>(n_acc);
      m2 += delta.cwiseProduct(state.point.theta - mean);
      if (it + 1 == windows.window_ends[window]) {
        const double n = static_cast<double>(n_acc);
        Eigen::VectorXd var = m2 / std::max(1.0, n - 1.0);
        // shrink toward a small constant, as a guard against short windows
        var = (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0));
        out.mass.inv_diag = var;
        n_acc = 0;
        mean.setZero();
        m2.setZero();
        ++window;
        eps = find_reasonable_step_size(state, eps, out.mass, target, rng);
        dual.restart(eps);
      }
    }
  }
  if (config.warmup > 0) {
    eps = dual.final_step_size();
    const std::size_t tail = std::min<std::size_t>(config.warmup, std::max<std::size_t>(
                                                                      windows.term_buffer, 10));
    double acc = 0.0;
    for (std::size_t i = config.warmup - tail; i < config.warmup; ++i)
      acc += out.warmup_accept_stat[i];
    if (acc / static_cast<double>(tail) < 0.1)
      out.warnings.push_back("tuning failure: mean acceptance below 0.1 at the end of warmup");
  }
  out.step_size = eps;

  const auto rows = static_cast<Eigen::Index>(config.draws);
  out.draws.resize(rows, static_cast<Eigen::Index>(d));
  out.unconstrained.resize(rows, static_cast<Eigen::Index>(d));
  out.log_density.reserve(config.draws);
  out.energy.reserve(config.draws);
  out.accept_stat.reserve(config.draws);
  out.tree_depth.reserve(config.draws);
  out.n_leapfrog.reserve(config.draws);
  out.divergent.reserve(config.draws);
  for (Eigen::Index i = 0; i < rows; ++i) {
    NutsTransition tr = nuts_step(state, eps, config.max_tree_depth, out.mass, target, rng);
    state = std::move(tr.state);
    out.unconstrained.row(i) = state.point.theta.transpose();
    out.draws.row(i) = target.constrain(state.point.theta).transpose();
    out.log_density.push_back(state.log_density);
    out.energy.push_back(tr.energy);
    out.accept_stat.push_back(tr.accept_stat);
    out.tree_depth.push_back(tr.tree_depth);
    out.n_leapfrog.push_back(tr.n_leapfrog);
    out.divergent.push_back(tr.divergent ? 1 : 0);
  }
  if (const std::size_t nd = out.divergences(); nd > 0)
    out.warnings.push_back(std::to_string(nd) + " divergent transitions after warmup");
  return out;
}

ChainSet run_chains(const LogDensity& target, const SamplerConfig& config) {
  config.validate();
  ChainSet set;
  set.names = target.parameter_names();
  set.chains.resize(config.chains);
  std::vector<std::exception_ptr> errors(config.chains);

  auto work = [&](std::size_t c) {
    try {
      set.chains[c] = run_chain(target, config, c);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  if (config.parallel && config.chains > 1) {
    std::vector<std::thread> threads;
    threads.reserve(config.chains);
    for (std::size_t c = 0; c < config.chains; ++c) threads.emplace_back(work, c);
    for (auto& t : threads) t.join();
  } else {
    for (std::size_t c = 0; c < config.chains; ++c) work(c);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return set;
}

}  // namespace cosmofit
