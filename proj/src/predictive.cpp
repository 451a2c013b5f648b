#include "cosmofit/predictive.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include <boost/math/distributions/normal.hpp>

#include "cosmofit/diagnostics.hpp"
#include "cosmofit/error.hpp"

namespace cosmofit {

namespace {

std::string full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Eigen::VectorXd standard_normal(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = normal(rng);
  return y;
}

}  // namespace

Eigen::VectorXd predictive_replicate(const CholeskyFactor& factor, const Eigen::VectorXd& mu_model,
                                     Rng& rng) {
  return mu_model + factor.unwhiten(standard_normal(mu_model.size(), rng));
}

PredictiveDraws predictive_prior(const PosteriorSpec& spec, Rng& rng, std::size_t count) {
  if (count == 0) throw InvalidArgument("predictive", "replicate count must be positive");
  const auto d = static_cast<Eigen::Index>(spec.dim());
  PredictiveDraws out;
  out.source = PredictiveSource::Prior;
  out.mu.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(spec.data().size()));
  out.params.resize(static_cast<Eigen::Index>(count), d);
  for (Eigen::Index r = 0; r < out.mu.rows(); ++r) {
    for (int attempt = 0;; ++attempt) {
      const CosmoParams p = sample_prior(spec.kind(), spec.priors(), rng);
      try {
        const Eigen::VectorXd mu = spec.model_moduli(p);
        if (!mu.allFinite()) throw DomainError("non-finite distance modulus", 0.0);
        out.mu.row(r) = predictive_replicate(spec.factor(), mu, rng).transpose();
        out.params.row(r) = p.to_vector(spec.kind()).transpose();
        break;
      } catch (const DomainError&) {
        if (attempt == 100)
          throw Error("predictive", "no valid prior draw after 100 retries");
      }
    }
  }
  return out;
}

PredictiveDraws predictive_posterior(const PosteriorSpec& spec, const ChainSet& chains, Rng& rng,
                                     std::size_t count) {
  if (count == 0) throw InvalidArgument("predictive", "replicate count must be positive");
  const Eigen::MatrixXd pool = chains.pooled();
  if (pool.rows() == 0) throw InvalidArgument("predictive", "no posterior draws");
  std::uniform_int_distribution<Eigen::Index> pick(0, pool.rows() - 1);
  PredictiveDraws out;
  out.source = PredictiveSource::Posterior;
  out.mu.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(spec.data().size()));
  out.params.resize(static_cast<Eigen::Index>(count), pool.cols());
  for (Eigen::Index r = 0; r < out.mu.rows(); ++r) {
    const Eigen::VectorXd theta = pool.row(pick(rng)).transpose();
    const CosmoParams p = CosmoParams::from_vector(spec.kind(), theta);
    out.mu.row(r) = predictive_replicate(spec.factor(), spec.model_moduli(p), rng).transpose();
    out.params.row(r) = theta.transpose();
  }
  return out;
}

ResidualReport residual_report_at(const PosteriorSpec& spec, const CosmoParams& p) {
  const SupernovaCatalog& data = spec.data();
  const auto n = static_cast<Eigen::Index>(data.size());
  ResidualReport r;
  r.params = p;
  r.z = data.z;
  r.raw = spec.mu_obs() - spec.model_moduli(p);
  r.whitened = spec.factor().whiten(r.raw);
  r.whitened_mean = r.whitened.mean();
  r.whitened_var = n > 1 ? (r.whitened.array() - r.whitened_mean).square().sum() /
                               static_cast<double>(n - 1)
                         : 0.0;

  // residual = a + b z under the data covariance
  Eigen::MatrixXd x(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = data.z[static_cast<std::size_t>(i)];
  }
  Eigen::MatrixXd xw(n, 2);
  xw.col(0) = spec.factor().whiten(x.col(0));
  xw.col(1) = spec.factor().whiten(x.col(1));
  const Eigen::Matrix2d normal = xw.transpose() * xw;
  const Eigen::Vector2d coef = normal.ldlt().solve(xw.transpose() * r.whitened);
  r.trend_slope = coef[1];
  r.trend_slope_se = std::sqrt(normal.inverse()(1, 1));

  std::vector<double> sorted(r.whitened.data(), r.whitened.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const boost::math::normal standard;
  r.qq_empirical = sorted;
  r.qq_theoretical.resize(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i)
    r.qq_theoretical[i] = boost::math::quantile(
        standard, (static_cast<double>(i) + 0.625) / (static_cast<double>(n) + 0.25));
  return r;
}

ResidualReport residual_report(const PosteriorSpec& spec, const ChainSet& chains,
                               PointEstimate estimate) {
  const Eigen::MatrixXd pool = chains.pooled();
  if (pool.rows() == 0) throw InvalidArgument("predictive", "no posterior draws");
  Eigen::VectorXd theta(pool.cols());
  for (Eigen::Index j = 0; j < pool.cols(); ++j) {
    if (estimate == PointEstimate::Mean) {
      theta[j] = pool.col(j).mean();
    } else {
      std::vector<double> col(pool.col(j).data(), pool.col(j).data() + pool.rows());
      theta[j] = quantile(std::move(col), 0.5);
    }
  }
  return residual_report_at(spec, CosmoParams::from_vector(spec.kind(), theta));
}

HubbleBands hubble_bands(ModelKind kind, const ChainSet& chains, const RedshiftGrid& grid,
                         const std::vector<double>& levels, std::size_t max_draws) {
  const Eigen::MatrixXd pool = chains.pooled();
  if (pool.rows() == 0) throw InvalidArgument("predictive", "no posterior draws");
  for (double level : levels)
    if (!(level > 0 && level < 1)) throw InvalidArgument("predictive", "band levels must lie in (0, 1)");

  const auto total = static_cast<std::size_t>(pool.rows());
  const std::size_t used = max_draws == 0 ? total : std::min(total, max_draws);
  const QuadraturePlan plan(grid.values());
  const std::size_t g = grid.size();

  // rows are grid points so each quantile reads a contiguous column
  std::vector<std::vector<double>> curves(g, std::vector<double>(used));
  std::vector<double> mu(g);
  for (std::size_t s = 0; s < used; ++s) {
    const std::size_t row = used == total ? s : s * total / used;
    const CosmoParams p =
        CosmoParams::from_vector(kind, pool.row(static_cast<Eigen::Index>(row)).transpose());
    plan.distance_modulus(kind, p, mu);
    for (std::size_t i = 0; i < g; ++i) curves[i][s] = mu[i];
  }

  HubbleBands out;
  out.kind = kind;
  out.z.assign(grid.values().begin(), grid.values().end());
  out.mean.resize(g);
  out.median.resize(g);
  for (std::size_t i = 0; i < g; ++i) {
    double sum = 0.0;
    for (double v : curves[i]) sum += v;
    out.mean[i] = sum / static_cast<double>(used);
    out.median[i] = quantile(curves[i], 0.5);
  }
  for (double level : levels) {
    Band b{level, std::vector<double>(g), std::vector<double>(g)};
    for (std::size_t i = 0; i < g; ++i) {
      b.lower[i] = quantile(curves[i], 0.5 - 0.5 * level);
      b.upper[i] = quantile(curves[i], 0.5 + 0.5 * level);
    }
    out.bands.push_back(std::move(b));
  }
  return out;
}

double band_overlap(const HubbleBands& a, const HubbleBands& b, double level) {
  if (a.z != b.z) throw InvalidArgument("predictive", "bands were computed on different grids");
  auto find = [&](const HubbleBands& h) -> const Band& {
    for (const auto& band : h.bands)
      if (std::abs(band.level - level) < 1e-12) return band;
    throw InvalidArgument("predictive", "band level not available");
  };
  const Band& ba = find(a);
  const Band& bb = find(b);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < a.z.size(); ++i)
    if (ba.lower[i] <= bb.upper[i] && bb.lower[i] <= ba.upper[i]) ++hits;
  return a.z.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(a.z.size());
}

SupernovaCatalog simulate_catalog(ModelKind kind, const CosmoParams& p,
                                  const SupernovaCatalog& tmpl, const CholeskyFactor& total,
                                  Rng& rng, bool zero_noise) {
  p.validate(kind);
  if (total.size() != tmpl.size())
    throw InvalidArgument("predictive", "template covariance does not match the catalog");
  const QuadraturePlan plan(tmpl.z);
  Eigen::VectorXd mu(static_cast<Eigen::Index>(tmpl.size()));
  plan.distance_modulus(kind, p, std::span<double>(mu.data(), tmpl.size()));
  SupernovaCatalog out = tmpl;
  const Eigen::VectorXd rep = zero_noise ? mu : predictive_replicate(total, mu, rng);
  out.mu_obs.assign(rep.data(), rep.data() + rep.size());
  return out;
}

void write_bands_csv(std::ostream& out, const HubbleBands& bands) {
  out << "z,mean,median";
  for (const auto& b : bands.bands) {
    char tag[32];
    std::snprintf(tag, sizeof tag, "%g", b.level);
    out << ",lower_" << tag << ",upper_" << tag;
  }
  out << '\n';
  for (std::size_t i = 0; i < bands.z.size(); ++i) {
    out << full(bands.z[i]) << ',' << full(bands.mean[i]) << ',' << full(bands.median[i]);
    for (const auto& b : bands.bands) out << ',' << full(b.lower[i]) << ',' << full(b.upper[i]);
    out << '\n';
  }
}

void write_residuals_csv(std::ostream& out, const ResidualReport& report) {
  out << "z,residual,whitened\n";
  for (std::size_t i = 0; i < report.z.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    out << full(report.z[i]) << ',' << full(report.raw[k]) << ',' << full(report.whitened[k])
        << '\n';
  }
}

void write_qq_csv(std::ostream& out, const ResidualReport& report) {
  out << "theoretical,empirical\n";
  for (std::size_t i = 0; i < report.qq_empirical.size(); ++i)
    out << full(report.qq_theoretical[i]) << ',' << full(report.qq_empirical[i]) << '\n';
}

}  // namespace cosmofit
