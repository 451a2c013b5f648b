#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cosmofit/diagnostics.hpp"
#include "cosmofit/error.hpp"
#include "cosmofit/sampler.hpp"
#include "support.hpp"

using namespace cosmofit;

namespace {

testing::GaussianTarget standard_normal(std::size_t d) {
  return testing::GaussianTarget(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d)),
                                 Eigen::MatrixXd::Identity(d, d));
}

// Uniform density on R^d (log density 0); every proposal is equally likely.
class FlatTarget : public LogDensity {
 public:
  std::size_t dim() const override { return 1; }
  double log_density_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& g) const override {
    g = Eigen::VectorXd::Zero(x.size());
    return 0.0;
  }
};

double max_energy_error(double eps, int steps) {
  const auto target = standard_normal(1);
  const MassMatrix mass = MassMatrix::identity(1);
  TrajectoryState s = TrajectoryState::at(target, Eigen::VectorXd::Constant(1, 1.0));
  s.point.phi = Eigen::VectorXd::Zero(1);
  const double h0 = hamiltonian(s, mass);
  double worst = 0.0;
  for (int i = 0; i < steps; ++i) {
    leapfrog(s, eps, mass, target);
    worst = std::max(worst, std::abs(hamiltonian(s, mass) - h0));
  }
  return worst;
}

}  // namespace

TEST_SUITE("sampler") {
  TEST_CASE("single leapfrog step on the standard normal") {
    const auto target = standard_normal(1);
    TrajectoryState s = TrajectoryState::at(target, Eigen::VectorXd::Constant(1, 1.0));
    s.point.phi = Eigen::VectorXd::Zero(1);
    leapfrog(s, 0.1, MassMatrix::identity(1), target);
    CHECK(s.point.theta[0] == doctest::Approx(0.995).epsilon(1e-14));
    CHECK(s.point.phi[0] == doctest::Approx(-0.09975).epsilon(1e-13));
  }

  TEST_CASE("zero step size is the identity") {
    const auto target = standard_normal(2);
    TrajectoryState s = TrajectoryState::at(target, Eigen::Vector2d(0.3, -1.2));
    s.point.phi = Eigen::Vector2d(0.7, 0.1);
    const TrajectoryState start = s;
    leapfrog(s, 0.0, MassMatrix::identity(2), target);
    CHECK(s.point.theta == start.point.theta);
    CHECK(s.point.phi == start.point.phi);
  }

  TEST_CASE("leapfrog energy error is bounded and second order") {
    const double coarse = max_energy_error(0.1, 10000);
    const double fine = max_energy_error(0.05, 10000);
    CHECK(coarse < 0.01);
    const double ratio = coarse / fine;
    CHECK(ratio >= 3.5);
    CHECK(ratio <= 4.5);
  }

  TEST_CASE("leapfrog with momentum flip is self-inverse") {
    Eigen::MatrixXd cov(3, 3);
    cov << 2, 0.3, 0.1, 0.3, 1, -0.2, 0.1, -0.2, 0.5;
    const testing::GaussianTarget target(Eigen::Vector3d(1, -1, 0.5), cov);
    MassMatrix mass{Eigen::Vector3d(1.5, 0.7, 0.4)};
    TrajectoryState s = TrajectoryState::at(target, Eigen::Vector3d(0.2, 0.4, -0.3));
    s.point.phi = Eigen::Vector3d(0.5, -1.0, 0.25);
    const TrajectoryState start = s;
    leapfrog(s, 0.13, 40, mass, target);
    s.point.phi = -s.point.phi;
    leapfrog(s, 0.13, 40, mass, target);
    CHECK((s.point.theta - start.point.theta).norm() < 1e-12);
    CHECK((s.point.phi + start.point.phi).norm() < 1e-12);
  }

  TEST_CASE("HMC draws follow the target distribution") {
    const auto target = standard_normal(1);
    Rng rng(314);
    TrajectoryState s = TrajectoryState::at(target, Eigen::VectorXd::Zero(1));
    std::vector<double> draws;
    // thinned so the KS critical value for independent draws applies
    for (int i = 0; i < 100000; ++i) {
      s = hmc_step(s, 0.3, 5, MassMatrix::identity(1), target, rng).state;
      if (i % 5 == 4) draws.push_back(s.point.theta[0]);
    }
    std::sort(draws.begin(), draws.end());
    double ks = 0.0;
    const double n = static_cast<double>(draws.size());
    for (std::size_t i = 0; i < draws.size(); ++i) {
      const double cdf = 0.5 * std::erfc(-draws[i] / std::sqrt(2.0));
      ks = std::max({ks, std::abs(cdf - static_cast<double>(i) / n),
                     std::abs(cdf - static_cast<double>(i + 1) / n)});
    }
    CHECK(ks < 1.628 / std::sqrt(n));  // 1% critical value
  }

  TEST_CASE("HMC moments and the small step-size limit") {
    const auto target = standard_normal(1);
    Rng rng(21);
    TrajectoryState s = TrajectoryState::at(target, Eigen::VectorXd::Zero(1));
    double sum = 0.0, sum2 = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      s = hmc_step(s, 0.3, 5, MassMatrix::identity(1), target, rng).state;
      sum += s.point.theta[0];
      sum2 += s.point.theta[0] * s.point.theta[0];
    }
    CHECK(std::abs(sum / n) < 0.05);
    CHECK(std::abs(sum2 / n - (sum / n) * (sum / n) - 1.0) < 0.05);

    int accepted = 0;
    for (int i = 0; i < 1000; ++i) {
      const HmcResult r = hmc_step(s, 1e-4, 3, MassMatrix::identity(1), target, rng);
      accepted += r.accepted;
      s = r.state;
    }
    CHECK(accepted > 990);
  }

  TEST_CASE("Metropolis steps") {
    FlatTarget flat;
    Rng rng(1);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
    for (int i = 0; i < 100; ++i) {
      const MhResult r = mh_step(x, 0.0, 1.0, flat, rng);
      CHECK(r.accepted);
      x = r.x;
    }

    const auto target = standard_normal(1);
    x = Eigen::VectorXd::Zero(1);
    double lp = target.log_density(x);
    double sum = 0.0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
      const MhResult r = mh_step(x, lp, 2.4, target, rng);
      x = r.x;
      lp = r.log_density;
      sum += x[0];
    }
    CHECK(std::abs(sum / n) < 0.05);
  }

  TEST_CASE("adaptation windows") {
    const AdaptationWindows w = AdaptationWindows::make(1000);
    CHECK(w.init_buffer == 75);
    CHECK(w.term_buffer == 50);
    CHECK(w.window_ends == std::vector<std::size_t>{100, 150, 250, 450, 950});

    const AdaptationWindows s = AdaptationWindows::make(100);
    CHECK(s.init_buffer == 15);
    CHECK(s.term_buffer == 10);
    CHECK(s.window_ends == std::vector<std::size_t>{90});

    CHECK(AdaptationWindows::make(10).window_ends.empty());
  }

  TEST_CASE("dual averaging moves the step size toward the target acceptance") {
    DualAveraging da(0.8);
    da.restart(1.0);
    for (int i = 0; i < 50; ++i) da.update(0.2);
    CHECK(da.step_size() < 1.0);
    DualAveraging up(0.8);
    up.restart(1.0);
    for (int i = 0; i < 50; ++i) up.update(1.0);
    CHECK(up.step_size() > 1.0);
  }

  // Dual averaging drives the running mean of the acceptance statistic over
  // the adapted iterates to the target. The averaged step size used for
  // sampling sits below the iterates, so realized acceptance is higher.
  TEST_CASE("adapted NUTS reaches the requested acceptance rate") {
    Eigen::MatrixXd cov(2, 2);
    cov << 4.0, 0.0, 0.0, 0.01;
    const testing::GaussianTarget target(Eigen::Vector2d(1.0, -2.0), cov);
    SamplerConfig cfg;
    cfg.chains = 2;
    cfg.warmup = 500;
    cfg.draws = 2000;
    cfg.seed = 5;
    const ChainSet set = run_chains(target, cfg);
    const AdaptationWindows w = AdaptationWindows::make(cfg.warmup);
    for (const auto& c : set.chains) {
      double adapting = 0.0;
      for (std::size_t i = w.init_buffer; i < cfg.warmup; ++i) adapting += c.warmup_accept_stat[i];
      adapting /= static_cast<double>(cfg.warmup - w.init_buffer);
      CHECK(std::abs(adapting - cfg.target_accept) < 0.05);
      CHECK(c.mean_accept_stat() >= cfg.target_accept - 0.05);
      // the metric adapts to the marginal variances
      CHECK(c.mass.inv_diag[0] / c.mass.inv_diag[1] > 100.0);
      CHECK(c.divergences() == 0);
    }
    const Eigen::MatrixXd pool = set.pooled();
    CHECK(std::abs(pool.col(0).mean() - 1.0) < 0.2);
    CHECK(std::abs(pool.col(1).mean() + 2.0) < 0.01);
  }

  TEST_CASE("NUTS moments on a standard normal") {
    const auto target = standard_normal(2);
    SamplerConfig cfg;
    cfg.chains = 4;
    cfg.warmup = 1000;
    cfg.draws = 5000;
    cfg.seed = 8;
    const ChainSet set = run_chains(target, cfg);
    const Eigen::MatrixXd pool = set.pooled();
    const Eigen::RowVectorXd m = pool.colwise().mean();
    const Eigen::MatrixXd centred = pool.rowwise() - m;
    const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(pool.rows() - 1);
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(std::abs(m[static_cast<Eigen::Index>(j)]) < 3.0 * mcse(set.parameter(j), McseKind::Mean));
      CHECK(std::abs(cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) - 1.0) < 0.05);
    }
    CHECK(std::abs(cov(0, 1)) < 0.05);
    for (const auto& c : set.chains)
      for (Eigen::Index j = 0; j < 2; ++j) CHECK(std::abs(c.mass.inv_diag[j] - 1.0) < 0.2);
  }

  TEST_CASE("metric adapts to a wide target") {
    const testing::GaussianTarget target(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 100.0));
    SamplerConfig cfg;
    cfg.chains = 2;
    cfg.warmup = 1000;
    cfg.draws = 100;
    cfg.seed = 12;
    for (const auto& c : run_chains(target, cfg).chains) CHECK(std::abs(c.mass.inv_diag[0] / 100.0 - 1.0) < 0.2);
  }

  TEST_CASE("same seed gives identical chains, parallel or not") {
    const auto target = standard_normal(3);
    SamplerConfig cfg;
    cfg.chains = 3;
    cfg.warmup = 100;
    cfg.draws = 200;
    cfg.seed = 42;
    const ChainSet a = run_chains(target, cfg);
    cfg.parallel = false;
    const ChainSet b = run_chains(target, cfg);
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(a.chains[c].draws == b.chains[c].draws);
      CHECK(a.chains[c].n_leapfrog == b.chains[c].n_leapfrog);
    }
    CHECK(a.chains[0].draws != a.chains[1].draws);
  }

  TEST_CASE("independent chains agree on a Gaussian target") {
    const auto target = standard_normal(2);
    SamplerConfig cfg;
    cfg.chains = 4;
    cfg.warmup = 300;
    cfg.draws = 1000;
    cfg.seed = 9;
    const ChainSet set = run_chains(target, cfg);
    for (std::size_t j = 0; j < 2; ++j) CHECK(rhat(set.parameter(j)) < 1.01);
  }

  TEST_CASE("tree depth limit and divergence flag") {
    const auto target = standard_normal(2);
    Rng rng(3);
    const TrajectoryState s = TrajectoryState::at(target, Eigen::Vector2d(0.5, 0.5));
    const NutsTransition one = nuts_step(s, 0.1, 0, MassMatrix::identity(2), target, rng);
    CHECK(one.n_leapfrog == 1);
    CHECK(one.tree_depth == 1);
    const NutsTransition capped = nuts_step(s, 1e-4, 3, MassMatrix::identity(2), target, rng);
    CHECK(capped.n_leapfrog == 15);
    const NutsTransition wild = nuts_step(s, 200.0, 5, MassMatrix::identity(2), target, rng);
    CHECK(wild.divergent);
    CHECK(wild.state.point.theta == s.point.theta);
  }

  TEST_CASE("step-size heuristic and configuration checks") {
    const auto target = standard_normal(2);
    Rng rng(1);
    const TrajectoryState s = TrajectoryState::at(target, Eigen::Vector2d(0.1, 0.2));
    const double eps = find_reasonable_step_size(s, 1.0, MassMatrix::identity(2), target, rng);
    CHECK(eps > 0.1);
    CHECK(eps < 10.0);

    SamplerConfig cfg;
    cfg.draws = 0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = SamplerConfig{};
    cfg.target_accept = 1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = SamplerConfig{};
    cfg.chains = 0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  }

  TEST_CASE("NUTS recovers a cosmological posterior") {
    const auto s = testing::make_synthetic(ModelKind::LCDM, CosmoParams{70.0, 0.3}, 150, 77);
    const auto spec = testing::posterior_for(ModelKind::LCDM, s);
    SamplerConfig cfg;
    cfg.chains = 2;
    cfg.warmup = 300;
    cfg.draws = 600;
    cfg.seed = 3;
    const ChainSet set = run_chains(*spec, cfg);
    CHECK(set.names == std::vector<std::string>{"H0", "Omega_m"});
    const Eigen::VectorXd h0 = set.pooled().col(0);
    const auto h = hdi(std::vector<double>(h0.data(), h0.data() + h0.size()), 0.999);
    CHECK(h.first < 70.0);
    CHECK(h.second > 70.0);
    CHECK(set.warnings().empty());
  }
}
