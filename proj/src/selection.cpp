#include "cosmofit/selection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include "cosmofit/diagnostics.hpp"
#include "cosmofit/error.hpp"

namespace cosmofit {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kHalfLog2Pi = 0.91893853320467274178;

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double m = v.maxCoeff();
  if (m == kNegInf) return kNegInf;
  return m + std::log((v.array() - m).exp().sum());
}

double population_variance(const Eigen::VectorXd& v) {
  return (v.array() - v.mean()).square().mean();
}

std::string num(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string aligned(const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& row : cells)
    for (std::size_t j = 0; j < row.size(); ++j) width[j] = std::max(width[j], row[j].size());
  std::string out;
  for (const auto& row : cells) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      const std::string pad(width[j] - row[j].size(), ' ');
      out += j == 0 ? row[j] + pad : "  " + pad + row[j];
    }
    out += '\n';
  }
  return out;
}

// Normal proposal in the unconstrained space.
struct NormalProposal {
  Eigen::VectorXd mean;
  Eigen::MatrixXd chol;  // lower factor of the covariance
  double log_norm = 0.0;

  explicit NormalProposal(const Eigen::MatrixXd& x) {
    const auto n = static_cast<double>(x.rows());
    mean = x.colwise().mean().transpose();
    const Eigen::MatrixXd centred = x.rowwise() - mean.transpose();
    const Eigen::MatrixXd cov = centred.transpose() * centred / (n - 1.0);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
      throw Error("selection", "proposal covariance is not positive definite");
    chol = llt.matrixL();
    log_norm = -static_cast<double>(mean.size()) * kHalfLog2Pi -
               chol.diagonal().array().log().sum();
  }

  double log_pdf(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd z = chol.triangularView<Eigen::Lower>().solve(x - mean);
    return log_norm - 0.5 * z.squaredNorm();
  }

  Eigen::VectorXd draw(Rng& rng) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
    return mean + chol * z;
  }
};

}  // namespace

PointwiseLogLik pointwise_loglik(const PosteriorSpec& spec, const ChainSet& chains) {
  const Eigen::MatrixXd draws = chains.pooled();
  PointwiseLogLik out;
  out.log_det_t = spec.factor().log_det_t();
  out.ell.resize(draws.rows(), static_cast<Eigen::Index>(spec.data().size()));
  for (Eigen::Index s = 0; s < draws.rows(); ++s) {
    const CosmoParams p = CosmoParams::from_vector(spec.kind(), draws.row(s).transpose());
    try {
      out.ell.row(s) = spec.pointwise_loglik(p).ell.transpose();
    } catch (const Error& e) {
      throw Error("selection", "model evaluation failed at stored draw " + std::to_string(s) +
                                   ": " + e.what());
    }
  }
  return out;
}

WaicReport waic(const PointwiseLogLik& pl, std::string name) {
  const Eigen::Index s = pl.ell.rows();
  const Eigen::Index n = pl.ell.cols();
  if (s < 100) throw InvalidArgument("selection", "WAIC needs at least 100 draws");
  if (n < 1) throw InvalidArgument("selection", "WAIC needs at least one data point");
  if (!pl.ell.allFinite()) throw InvalidArgument("selection", "non-finite pointwise log-likelihood");

  WaicReport r;
  r.name = std::move(name);
  r.log_det_t = pl.log_det_t;
  r.elpd_pointwise.resize(n);
  r.p_waic_pointwise.resize(n);
  const double log_s = std::log(static_cast<double>(s));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto col = pl.ell.col(i);
    const double lppd_i = log_sum_exp(col) - log_s;
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / static_cast<double>(s - 1);
    r.p_waic_pointwise[i] = var;
    r.elpd_pointwise[i] = lppd_i - var;
    r.lppd += lppd_i;
    if (var > kWaicVarianceWarning) r.high_variance_points.push_back(static_cast<std::size_t>(i));
  }
  r.p_waic = r.p_waic_pointwise.sum();
  r.elpd = r.lppd - r.p_waic;
  r.se = std::sqrt(static_cast<double>(n) * population_variance(r.elpd_pointwise));
  return r;
}

std::vector<WaicComparisonRow> compare_waic(const std::vector<WaicReport>& reports) {
  if (reports.empty()) throw InvalidArgument("selection", "no WAIC reports to compare");
  const std::size_t n = reports.front().points();
  for (const auto& r : reports)
    if (r.points() != n)
      throw InvalidArgument("selection", "WAIC reports were computed on different datasets");

  std::vector<std::size_t> order(reports.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return reports[a].elpd > reports[b].elpd; });
  const WaicReport& best = reports[order.front()];

  Eigen::VectorXd elpds(static_cast<Eigen::Index>(reports.size()));
  for (std::size_t k = 0; k < reports.size(); ++k)
    elpds[static_cast<Eigen::Index>(k)] = reports[order[k]].elpd;
  const double log_total = log_sum_exp(elpds);

  std::vector<WaicComparisonRow> rows;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const WaicReport& r = reports[order[k]];
    WaicComparisonRow row;
    row.name = r.name;
    row.rank = k;
    row.elpd = r.elpd;
    row.p_waic = r.p_waic;
    row.se = r.se;
    row.elpd_diff = best.elpd - r.elpd;
    const Eigen::VectorXd diff = best.elpd_pointwise - r.elpd_pointwise;
    row.dse = std::sqrt(static_cast<double>(n) * population_variance(diff));
    row.weight = std::exp(r.elpd - log_total);
    row.warning = !r.high_variance_points.empty();
    rows.push_back(row);
  }
  return rows;
}

void write_waic_csv(std::ostream& out, const std::vector<WaicComparisonRow>& rows) {
  out << "model,rank,elpd_waic,p_waic,elpd_diff,weight_pseudo_bma,se,dse,warning,scale\n";
  for (const auto& r : rows)
    out << r.name << ',' << r.rank << ',' << full(r.elpd) << ',' << full(r.p_waic) << ','
        << full(r.elpd_diff) << ',' << full(r.weight) << ',' << full(r.se) << ',' << full(r.dse)
        << ',' << (r.warning ? "True" : "False") << ",log\n";
}

std::string format_waic_table(const std::vector<WaicComparisonRow>& rows) {
  std::vector<std::vector<std::string>> cells{{"", "rank", "elpd_waic", "p_waic", "elpd_diff",
                                               "weight", "se", "dse", "warning", "scale"}};
  for (const auto& r : rows)
    cells.push_back({r.name, std::to_string(r.rank), num(r.elpd, 2), num(r.p_waic, 2),
                     num(r.elpd_diff, 2), num(r.weight, 2), num(r.se, 2), num(r.dse, 2),
                     r.warning ? "True" : "False", "log"});
  return aligned(cells);
}

EvidenceEstimate bridge_evidence(const LogDensity& target, const ChainSet& chains, Rng& rng,
                                 const BridgeOptions& options) {
  if (chains.total_draws() < options.min_draws)
    throw InvalidArgument("selection", "bridge sampling needs at least " +
                                           std::to_string(options.min_draws) + " draws");
  const auto d = static_cast<Eigen::Index>(target.dim());

  // first half of every chain fits the proposal, second half enters the estimator
  std::vector<Eigen::MatrixXd> fit_parts, iter_parts;
  Eigen::Index fit_rows = 0;
  Eigen::Index iter_rows = 0;
  for (const auto& c : chains.chains) {
    const Eigen::Index half = c.unconstrained.rows() / 2;
    fit_parts.push_back(c.unconstrained.topRows(half));
    iter_parts.push_back(c.unconstrained.bottomRows(c.unconstrained.rows() - half));
    fit_rows += half;
    iter_rows += c.unconstrained.rows() - half;
  }
  Eigen::MatrixXd fit(fit_rows, d);
  for (Eigen::Index r = 0; const auto& part : fit_parts) {
    fit.middleRows(r, part.rows()) = part;
    r += part.rows();
  }
  const NormalProposal q(fit);

  const std::size_t n1 = static_cast<std::size_t>(iter_rows);
  const std::size_t n2 = n1;
  EvidenceEstimate out;
  out.posterior_draws = n1;
  out.proposal_draws = n2;

  // log posterior and log proposal at both sample sets
  std::vector<double> post_at_post, q_at_post, post_at_q(n2), q_at_q(n2);
  std::vector<std::size_t> chain_len;
  for (const auto& part : iter_parts) {
    chain_len.push_back(static_cast<std::size_t>(part.rows()));
    for (Eigen::Index r = 0; r < part.rows(); ++r) {
      const Eigen::VectorXd x = part.row(r).transpose();
      post_at_post.push_back(target.log_density(x));
      q_at_post.push_back(q.log_pdf(x));
    }
  }
  for (std::size_t j = 0; j < n2; ++j) {
    const Eigen::VectorXd x = q.draw(rng);
    const double lp = target.log_density(x);
    post_at_q[j] = std::isfinite(lp) ? lp : kNegInf;
    q_at_q[j] = q.log_pdf(x);
    if (!std::isfinite(lp)) ++out.proposal_outside_support;
  }
  for (double v : post_at_post)
    if (!std::isfinite(v))
      throw Error("selection", "posterior density is not finite at a retained draw");
  if (static_cast<double>(out.proposal_outside_support) > 0.1 * static_cast<double>(n2))
    out.warnings.push_back(std::to_string(out.proposal_outside_support) + " of " +
                           std::to_string(n2) +
                           " proposal draws fall outside the posterior support");

  std::vector<double> l1(n1), l2(n2);
  for (std::size_t i = 0; i < n1; ++i) l1[i] = post_at_post[i] - q_at_post[i];
  for (std::size_t j = 0; j < n2; ++j) l2[j] = post_at_q[j] - q_at_q[j];
  const double lstar = quantile(l1, 0.5);

  const double s1 = static_cast<double>(n1) / static_cast<double>(n1 + n2);
  const double s2 = static_cast<double>(n2) / static_cast<double>(n1 + n2);
  const double log_s1 = std::log(s1);
  const double log_s2 = std::log(s2);
  const double log_ratio_n = std::log(static_cast<double>(n1) / static_cast<double>(n2));

  Eigen::VectorXd log_num(static_cast<Eigen::Index>(n2));
  Eigen::VectorXd log_den(static_cast<Eigen::Index>(n1));
  double log_r = 0.0;  // r = p(D) / exp(lstar)
  for (std::size_t it = 1; it <= options.max_iterations; ++it) {
    const double log_s2r = log_s2 + log_r;
    for (std::size_t j = 0; j < n2; ++j) {
      const double a = l2[j] - lstar;
      log_num[static_cast<Eigen::Index>(j)] = a == kNegInf ? kNegInf : a - log_add(log_s1 + a, log_s2r);
    }
    for (std::size_t i = 0; i < n1; ++i)
      log_den[static_cast<Eigen::Index>(i)] = -log_add(log_s1 + l1[i] - lstar, log_s2r);
    const double next = log_ratio_n + log_sum_exp(log_num) - log_sum_exp(log_den);
    out.iterations = it;
    const double change = std::abs(std::expm1(log_r - next));  // |r_old - r| / r
    log_r = next;
    if (change < options.rtol) {
      out.converged = true;
      break;
    }
  }
  out.log_marginal = log_r + lstar;
  if (!out.converged)
    out.warnings.push_back("bridge iteration did not converge within " +
                           std::to_string(options.max_iterations) + " iterations");

  // asymptotic relative mean-squared error of the estimate
  std::vector<double> f1(n2);
  for (std::size_t j = 0; j < n2; ++j) {
    const double log_p = post_at_q[j] - out.log_marginal;
    f1[j] = log_p == kNegInf ? 0.0 : 1.0 / (s1 + s2 * std::exp(q_at_q[j] - log_p));
  }
  ChainValues f2_chains;
  std::vector<double> f2;
  for (std::size_t c = 0, i = 0; c < chain_len.size(); ++c) {
    f2_chains.emplace_back();
    for (std::size_t k = 0; k < chain_len[c]; ++k, ++i) {
      const double log_p = post_at_post[i] - out.log_marginal;
      const double v = 1.0 / (s1 * std::exp(log_p - q_at_post[i]) + s2);
      f2_chains.back().push_back(v);
      f2.push_back(v);
    }
  }
  auto mean_var = [](const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, s / static_cast<double>(v.size() - 1)};
  };
  const auto [m1, v1] = mean_var(f1);
  const auto [m2, v2] = mean_var(f2);
  double ess_f2 = static_cast<double>(n1);
  bool equal_lengths = true;
  for (auto len : chain_len) equal_lengths = equal_lengths && len == chain_len.front();
  if (equal_lengths && chain_len.front() >= 4) {
    const double e = ess_raw(f2_chains);
    if (!is_undefined(e) && e > 0) ess_f2 = std::min(e, static_cast<double>(n1));
  }
  const double term1 = v1 / (static_cast<double>(n2) * m1 * m1);
  const double term2 = v2 / (ess_f2 * m2 * m2);
  out.relative_error = std::sqrt(term1 + term2);
  return out;
}

BayesFactor bayes_factor(const EvidenceEstimate& e1, const EvidenceEstimate& e2) {
  BayesFactor bf;
  bf.log_bf = e1.log_marginal - e2.log_marginal;
  bf.bf = std::exp(bf.log_bf);
  bf.degraded = !e1.converged || !e2.converged;
  return bf;
}

void write_evidence_csv(std::ostream& out, const std::vector<std::string>& names,
                        const std::vector<EvidenceEstimate>& estimates) {
  out << "model,log_marginal,relative_error,iterations,converged\n";
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    const auto& e = estimates[k];
    out << names.at(k) << ',' << full(e.log_marginal) << ',' << full(e.relative_error) << ','
        << e.iterations << ',' << (e.converged ? "true" : "false") << '\n';
  }
}

std::string format_evidence_table(const std::vector<std::string>& names,
                                  const std::vector<EvidenceEstimate>& estimates) {
  std::vector<std::vector<std::string>> cells{
      {"model", "log_marginal", "rel_error_%", "iterations", "converged"}};
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    const auto& e = estimates[k];
    cells.push_back({names.at(k), num(e.log_marginal, 2), num(100.0 * e.relative_error, 2),
                     std::to_string(e.iterations), e.converged ? "yes" : "no"});
  }
  return aligned(cells);
}

}  // namespace cosmofit
