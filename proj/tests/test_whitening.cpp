#include <doctest.h>

#include <cmath>
#include <random>

#include "cosmofit/error.hpp"
#include "cosmofit/sampler.hpp"
#include "cosmofit/whitening.hpp"
#include "support.hpp"

using namespace cosmofit;

namespace {

Eigen::MatrixXd example_sigma() {
  Eigen::MatrixXd s(2, 2);
  s << 4, 2, 2, 3;
  return s;
}

Eigen::MatrixXd random_spd(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(n, n);
  for (auto& v : a.reshaped()) v = normal(rng);
  return a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
}

// log N(x | 0, S) evaluated with a full inverse and determinant
double dense_logpdf(const Eigen::MatrixXd& s, const Eigen::VectorXd& r) {
  const double n = static_cast<double>(r.size());
  return -0.5 * n * std::log(2 * M_PI) - 0.5 * std::log(s.determinant()) -
         0.5 * r.dot(s.inverse() * r);
}

}  // namespace

TEST_SUITE("whitening") {
  TEST_CASE("identity factor") {
    const CholeskyFactor f = cholesky_factorize(Eigen::MatrixXd::Identity(2, 2));
    CHECK(f.lower().isApprox(Eigen::MatrixXd::Identity(2, 2)));
    CHECK(f.log_det_l() == 0.0);
    Eigen::VectorXd r(2);
    r << 0.3, -1.2;
    CHECK(f.whiten(r) == r);
    CHECK(f.unwhiten(r) == r);
  }

  TEST_CASE("hand-factored 2x2 example") {
    const CholeskyFactor f = cholesky_factorize(example_sigma());
    Eigen::MatrixXd expected(2, 2);
    expected << 2, 0, 1, std::sqrt(2.0);
    CHECK((f.lower() - expected).norm() < 1e-15);
    CHECK(f.log_det_l() == doctest::Approx(1.0397207708399179).epsilon(1e-15));
    CHECK(f.log_det_t() == doctest::Approx(-1.0397207708399179).epsilon(1e-15));

    Eigen::VectorXd r(2);
    r << 2, 3;
    const Eigen::VectorXd y = f.whiten(r);
    CHECK(y[0] == doctest::Approx(1.0));
    CHECK(y[1] == doctest::Approx(std::sqrt(2.0)));
    const Eigen::VectorXd back = f.unwhiten(y);
    CHECK(back[0] == doctest::Approx(2.0));
    CHECK(back[1] == doctest::Approx(3.0));
    CHECK(f.whiten(Eigen::VectorXd::Zero(2)).isZero());
    CHECK(f.unwhiten(Eigen::VectorXd::Zero(2)).isZero());
  }

  TEST_CASE("indefinite matrix fails at the second pivot") {
    Eigen::MatrixXd s(2, 2);
    s << 1, 2, 2, 1;
    try {
      cholesky_factorize(s);
      FAIL("expected failure");
    } catch (const NotPositiveDefinite& e) {
      CHECK(e.pivot() == 2);
    }
  }

  TEST_CASE("pointwise log-likelihood examples") {
    const CholeskyFactor id = cholesky_factorize(Eigen::MatrixXd::Identity(2, 2));
    const WhitenedLogLik zero = whitened_pointwise_loglik(id, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2));
    CHECK(zero.ell[0] == doctest::Approx(-0.9189385332046727).epsilon(1e-15));
    CHECK(zero.ell[1] == doctest::Approx(-0.9189385332046727).epsilon(1e-15));
    CHECK(zero.log_det_t == 0.0);

    Eigen::VectorXd obs(2);
    obs << 1, 0;
    const WhitenedLogLik one = whitened_pointwise_loglik(id, obs, Eigen::VectorXd::Zero(2));
    CHECK(one.ell[0] == doctest::Approx(-1.4189385332046727).epsilon(1e-15));

    const CholeskyFactor f = cholesky_factorize(example_sigma());
    Eigen::VectorXd r(2);
    r << 2, 3;
    const WhitenedLogLik w = whitened_pointwise_loglik(f, r, Eigen::VectorXd::Zero(2));
    CHECK(w.total() == doctest::Approx(-4.377597837249263).epsilon(1e-14));
  }

  TEST_CASE("factor reconstructs random SPD matrices") {
    std::mt19937_64 rng(3);
    for (std::size_t n : {1u, 3u, 8u, 20u, 60u}) {
      const Eigen::MatrixXd s = random_spd(n, rng);
      const CholeskyFactor f = cholesky_factorize(s);
      const Eigen::MatrixXd l = f.lower();
      CHECK(l.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().isZero());
      CHECK((l.diagonal().array() > 0).all());
      CHECK((l * l.transpose() - s).norm() / s.norm() < 1e-12);
    }
  }

  TEST_CASE("dense Gaussian density equals whitened form for random problems") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t n = 1 + static_cast<std::size_t>(trial % 20);
      const Eigen::MatrixXd s = random_spd(n, rng);
      Eigen::VectorXd obs(static_cast<Eigen::Index>(n)), model(static_cast<Eigen::Index>(n));
      for (auto& v : obs) v = normal(rng);
      for (auto& v : model) v = normal(rng);
      const WhitenedLogLik w = whitened_pointwise_loglik(cholesky_factorize(s), obs, model);
      CHECK(std::abs(w.total() - dense_logpdf(s, obs - model)) < 1e-8);
    }
  }

  TEST_CASE("whiten and unwhiten are inverse maps") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::MatrixXd s = random_spd(15, rng);
    const CholeskyFactor f = cholesky_factorize(s);
    Eigen::VectorXd r(15);
    for (auto& v : r) v = normal(rng);
    CHECK((f.unwhiten(f.whiten(r)) - r).norm() < 1e-12 * r.norm() * 100);
    // y^T y equals the Mahalanobis form
    const Eigen::VectorXd y = f.whiten(r);
    CHECK(y.squaredNorm() == doctest::Approx(r.dot(s.inverse() * r)).epsilon(1e-10));
    // L^{-T} y
    CHECK((s * f.solve_transpose(y) - r).norm() < 1e-9);
  }

  TEST_CASE("mismatched vector length is rejected") {
    const CholeskyFactor f = cholesky_factorize(example_sigma());
    CHECK_THROWS_AS(f.whiten(Eigen::VectorXd::Zero(3)), InvalidArgument);
  }

  TEST_CASE("gradients of dense and whitened posteriors agree") {
    for (ModelKind kind : {ModelKind::LCDM, ModelKind::WCDM, ModelKind::CPL}) {
      const auto s = testing::make_synthetic(kind, CosmoParams{}, 40, 21);
      const auto spec = testing::posterior_for(kind, s);
      const testing::DensePosterior dense(spec, s.total.sigma);
      std::mt19937_64 rng(4);
      for (int k = 0; k < 20; ++k) {
        const Eigen::VectorXd xi = spec->initial_point(rng);
        Eigen::VectorXd gw, gd;
        const double lw = spec->log_density_gradient(xi, gw);
        const double ld = dense.log_density_gradient(xi, gd);
        CHECK(lw == doctest::Approx(ld).epsilon(1e-10));
        CHECK((gw - gd).norm() <= 1e-10 * std::max(1.0, gd.norm()));
      }
    }
  }

  TEST_CASE("Metropolis chains on dense and whitened posteriors coincide") {
    const auto s = testing::make_synthetic(ModelKind::LCDM, CosmoParams{}, 30, 8);
    const auto spec = testing::posterior_for(ModelKind::LCDM, s);
    const testing::DensePosterior dense(spec, s.total.sigma);
    Rng rng_w(77), rng_d(77);
    Eigen::VectorXd xw = spec->initial_point(rng_w);
    Eigen::VectorXd xd = xw;
    rng_d = rng_w;
    double lw = spec->log_density(xw);
    double ld = dense.log_density(xd);
    int accepted = 0;
    for (int k = 0; k < 2000; ++k) {
      const MhResult a = mh_step(xw, lw, 0.02, *spec, rng_w);
      const MhResult b = mh_step(xd, ld, 0.02, dense, rng_d);
      REQUIRE(a.accepted == b.accepted);
      accepted += a.accepted;
      xw = a.x;
      lw = a.log_density;
      xd = b.x;
      ld = b.log_density;
      REQUIRE((xw - xd).norm() <= 1e-12);
    }
    CHECK(accepted > 100);
  }

  TEST_CASE("NUTS trajectories on dense and whitened posteriors coincide") {
    const auto s = testing::make_synthetic(ModelKind::WCDM, CosmoParams{}, 30, 10);
    const auto spec = testing::posterior_for(ModelKind::WCDM, s);
    const testing::DensePosterior dense(spec, s.total.sigma);
    Rng rng_w(5), rng_d(5);
    const Eigen::VectorXd x0 = spec->initial_point(rng_w);
    rng_d = rng_w;
    TrajectoryState tw = TrajectoryState::at(*spec, x0);
    TrajectoryState td = TrajectoryState::at(dense, x0);
    const MassMatrix mass = MassMatrix::identity(3);
    for (int k = 0; k < 50; ++k) {
      const NutsTransition a = nuts_step(tw, 0.05, 6, mass, *spec, rng_w);
      const NutsTransition b = nuts_step(td, 0.05, 6, mass, dense, rng_d);
      REQUIRE(a.n_leapfrog == b.n_leapfrog);
      REQUIRE((a.state.point.theta - b.state.point.theta).norm() <= 1e-10);
      tw = a.state;
      td = b.state;
    }
  }

  TEST_CASE("leapfrog is equivariant under affine reparameterization") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t d = 1; d <= 4; ++d) {
      Eigen::MatrixXd cov = random_spd(d, rng);
      Eigen::VectorXd mean(static_cast<Eigen::Index>(d));
      for (auto& v : mean) v = normal(rng);
      const testing::GaussianTarget theta_target(mean, cov);

      Eigen::MatrixXd j(d, d);
      for (auto& v : j.reshaped()) v = normal(rng);
      j += 2.0 * Eigen::MatrixXd::Identity(d, d);
      Eigen::VectorXd b(static_cast<Eigen::Index>(d));
      for (auto& v : b) v = normal(rng);
      // xi = J^{-1}(theta - b) is Gaussian with mean J^{-1}(mean - b), cov J^{-1} cov J^{-T}
      const Eigen::MatrixXd jinv = j.inverse();
      const testing::GaussianTarget xi_target(jinv * (mean - b), jinv * cov * jinv.transpose());

      // identity metric for theta; induced metric M_xi = J^T J, inverse J^{-1} J^{-T}
      const DenseMetric theta_metric{Eigen::MatrixXd::Identity(d, d)};
      const DenseMetric xi_metric{jinv * jinv.transpose()};

      Eigen::VectorXd theta0(static_cast<Eigen::Index>(d)), phi0(static_cast<Eigen::Index>(d));
      for (auto& v : theta0) v = normal(rng);
      for (auto& v : phi0) v = normal(rng);
      TrajectoryState ts = TrajectoryState::at(theta_target, theta0);
      ts.point.phi = phi0;
      TrajectoryState xs = TrajectoryState::at(xi_target, jinv * (theta0 - b));
      xs.point.phi = j.transpose() * phi0;  // momenta transform covariantly

      for (int step = 0; step < 25; ++step) {
        leapfrog(ts, 0.07, theta_metric, theta_target);
        leapfrog(xs, 0.07, xi_metric, xi_target);
        const Eigen::VectorXd mapped = j * xs.point.theta + b;
        CHECK((mapped - ts.point.theta).norm() <= 1e-10 * std::max(1.0, ts.point.theta.norm()));
      }
    }
  }
}
