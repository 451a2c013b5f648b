#include "cosmofit/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include <boost/math/distributions/normal.hpp>

#include "cosmofit/error.hpp"

namespace cosmofit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_of(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double var_of(const std::vector<double>& x, int ddof) {
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - static_cast<std::size_t>(ddof));
}

std::vector<double> flatten(const ChainValues& chains) {
  std::vector<double> all;
  for (const auto& c : chains) all.insert(all.end(), c.begin(), c.end());
  return all;
}

void check_shape(const ChainValues& chains) {
  if (chains.empty() || chains.front().empty())
    throw InvalidArgument("diagnostics", "no draws");
  for (const auto& c : chains)
    if (c.size() != chains.front().size())
      throw InvalidArgument("diagnostics", "chains have different lengths");
}

bool all_equal(const ChainValues& chains) {
  const double first = chains.front().front();
  for (const auto& c : chains)
    for (double v : c)
      if (v != first) return false;
  return true;
}

bool has_nonfinite(const ChainValues& chains) {
  for (const auto& c : chains)
    for (double v : c)
      if (!std::isfinite(v)) return true;
  return false;
}

// Each chain cut into its first and last floor(n/2) draws.
ChainValues split_chains(const ChainValues& chains) {
  ChainValues out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

// Average ranks (1-based) over all draws, mapped through the normal quantile.
ChainValues z_scale(const ChainValues& chains) {
  const std::vector<double> all = flatten(chains);
  const std::size_t n = all.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return all[a] < all[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && all[order[j + 1]] == all[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  const boost::math::normal standard;
  ChainValues out = chains;
  std::size_t idx = 0;
  for (auto& c : out)
    for (double& v : c)
      v = boost::math::quantile(standard, (rank[idx++] - 0.375) / (static_cast<double>(n) + 0.25));
  return out;
}

double rhat_basic(const ChainValues& chains) {
  const double n = static_cast<double>(chains.front().size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(mean_of(c));
    vars.push_back(var_of(c, 1));
  }
  const double between = n * var_of(means, 1);
  const double within = mean_of(vars);
  return std::sqrt((between / within + n - 1.0) / n);
}

// Biased autocovariance at `lag`, averaged over chains.
double mean_autocov(const ChainValues& chains, const std::vector<double>& means, std::size_t lag) {
  double total = 0.0;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const auto& x = chains[c];
    const double m = means[c];
    double s = 0.0;
    for (std::size_t t = 0; t + lag < x.size(); ++t) s += (x[t] - m) * (x[t + lag] - m);
    total += s / static_cast<double>(x.size());
  }
  return total / static_cast<double>(chains.size());
}

double ess_core(const ChainValues& chains) {
  if (has_nonfinite(chains) || all_equal(chains)) return kNaN;
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  if (n < 4) return kNaN;
  const double nd = static_cast<double>(n);

  std::vector<double> means;
  for (const auto& c : chains) means.push_back(mean_of(c));
  std::vector<double> acov;  // grown lazily; the truncation rarely needs many lags
  auto gamma = [&](std::size_t lag) {
    while (acov.size() <= lag) acov.push_back(mean_autocov(chains, means, acov.size()));
    return acov[lag];
  };

  const double mean_var = gamma(0) * nd / (nd - 1.0);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (m > 1) var_plus += var_of(means, 1);
  if (!(var_plus > 0)) return kNaN;

  std::vector<double> rho(n, 0.0);
  double rho_even = 1.0;
  double rho_odd = 1.0 - (mean_var - gamma(1)) / var_plus;
  rho[0] = rho_even;
  rho[1] = rho_odd;
  const auto nl = static_cast<long>(n);
  long t = 1;
  while (t < nl - 3 && rho_even + rho_odd > 0.0) {
    rho_even = 1.0 - (mean_var - gamma(static_cast<std::size_t>(t + 1))) / var_plus;
    rho_odd = 1.0 - (mean_var - gamma(static_cast<std::size_t>(t + 2))) / var_plus;
    if (rho_even + rho_odd >= 0.0) {
      rho[static_cast<std::size_t>(t + 1)] = rho_even;
      rho[static_cast<std::size_t>(t + 2)] = rho_odd;
    }
    t += 2;
  }
  const long max_t = t - 2;
  if (rho_even > 0.0) rho[static_cast<std::size_t>(max_t + 1)] = rho_even;

  // initial monotone sequence
  for (long k = 1; k <= max_t - 2; k += 2) {
    const auto i = static_cast<std::size_t>(k);
    if (rho[i + 1] + rho[i + 2] > rho[i - 1] + rho[i]) {
      rho[i + 1] = 0.5 * (rho[i - 1] + rho[i]);
      rho[i + 2] = rho[i + 1];
    }
  }
  const double total = static_cast<double>(m) * nd;
  double tau = -1.0;
  for (long k = 0; k <= max_t; ++k) tau += 2.0 * rho[static_cast<std::size_t>(k)];
  tau += rho[static_cast<std::size_t>(max_t + 1)];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

double ess_quantile(const ChainValues& chains, double prob) {
  const double q = quantile(flatten(chains), prob);
  ChainValues ind = chains;
  for (auto& c : ind)
    for (double& v : c) v = v <= q ? 1.0 : 0.0;
  return ess_core(split_chains(ind));
}

std::string fmt(double v, int precision) {
  if (is_undefined(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string csv_num(double v) {
  if (is_undefined(v)) return "nan";
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
      if (j == 0)
        out += row[j] + pad;
      else
        out += "  " + pad + row[j];
    }
    out += '\n';
  }
  return out;
}

}  // namespace

double quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw InvalidArgument("diagnostics", "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = prob * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double rhat(const ChainValues& chains) {
  check_shape(chains);
  if (chains.size() < 2 || chains.front().size() < 4)
    throw InvalidArgument("diagnostics", "R-hat needs at least 2 chains of 4 draws");
  if (has_nonfinite(chains) || all_equal(chains)) return kNaN;
  const ChainValues split = split_chains(chains);
  const double bulk = rhat_basic(z_scale(split));

  const double median = quantile(flatten(chains), 0.5);
  ChainValues folded = chains;
  for (auto& c : folded)
    for (double& v : c) v = std::abs(v - median);
  const double tail = rhat_basic(z_scale(split_chains(folded)));
  if (is_undefined(bulk) || is_undefined(tail)) return kNaN;
  return std::max(bulk, tail);
}

double ess(const ChainValues& chains, EssKind kind) {
  check_shape(chains);
  if (chains.front().size() < 4) throw InvalidArgument("diagnostics", "ESS needs at least 4 draws");
  if (has_nonfinite(chains) || all_equal(chains)) return kNaN;
  if (kind == EssKind::Bulk) return ess_core(z_scale(split_chains(chains)));
  const double lo = ess_quantile(chains, 0.05);
  const double hi = ess_quantile(chains, 0.95);
  if (is_undefined(lo) || is_undefined(hi)) return kNaN;
  return std::min(lo, hi);
}

double ess_mean(const ChainValues& chains) {
  check_shape(chains);
  return ess_core(split_chains(chains));
}

double ess_raw(const ChainValues& chains) {
  check_shape(chains);
  return ess_core(chains);
}

double mcse(const ChainValues& chains, McseKind kind) {
  check_shape(chains);
  const std::vector<double> all = flatten(chains);
  if (all.size() < 2) return kNaN;
  if (kind == McseKind::Mean) {
    const double e = ess_mean(chains);
    if (is_undefined(e)) return kNaN;
    return std::sqrt(var_of(all, 1)) / std::sqrt(e);
  }
  // delta method on the squared deviations
  const double m = mean_of(all);
  ChainValues sq = chains;
  for (auto& c : sq)
    for (double& v : c) v = (v - m) * (v - m);
  const double e = ess_mean(sq);
  if (is_undefined(e)) return kNaN;
  const std::vector<double> s2 = flatten(sq);
  const double evar = mean_of(s2);
  double e4 = 0.0;
  for (double v : s2) e4 += v * v;
  e4 /= static_cast<double>(s2.size());
  const double varvar = (e4 - evar * evar) / e;
  return std::sqrt(varvar / evar / 4.0);
}

std::pair<double, double> hdi(std::vector<double> draws, double mass) {
  if (draws.size() < 10) throw InvalidArgument("diagnostics", "HDI needs at least 10 draws");
  if (!(mass > 0 && mass < 1)) throw InvalidArgument("diagnostics", "HDI mass must lie in (0, 1)");
  std::sort(draws.begin(), draws.end());
  const std::size_t n = draws.size();
  const auto inc = static_cast<std::size_t>(std::floor(mass * static_cast<double>(n)));
  const std::size_t count = n - inc;
  std::size_t best = 0;
  double width = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < count; ++i) {
    const double w = draws[i + inc] - draws[i];
    if (w < width) {
      width = w;
      best = i;
    }
  }
  return {draws[best], draws[best + inc]};
}

double scott_bandwidth(const std::vector<double>& draws) {
  if (draws.size() < 2) throw InvalidArgument("diagnostics", "KDE needs at least 2 draws");
  const double sd = std::sqrt(var_of(draws, 1));
  if (!(sd > 0)) throw InvalidArgument("diagnostics", "KDE of a sample with zero variance");
  return sd * std::pow(static_cast<double>(draws.size()), -0.2);
}

std::vector<double> kde_density(const std::vector<double>& draws, const std::vector<double>& grid) {
  const double h = scott_bandwidth(draws);
  std::vector<double> sorted = draws;
  std::sort(sorted.begin(), sorted.end());
  // kernels beyond 9 bandwidths contribute below 1e-17 relative
  const double reach = 9.0 * h;
  const double norm = 1.0 / (static_cast<double>(draws.size()) * h * std::sqrt(2.0 * M_PI));
  std::vector<double> out(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double x = grid[g];
    auto it = std::lower_bound(sorted.begin(), sorted.end(), x - reach);
    const auto end = std::upper_bound(it, sorted.end(), x + reach);
    double s = 0.0;
    for (; it != end; ++it) {
      const double u = (x - *it) / h;
      s += std::exp(-0.5 * u * u);
    }
    out[g] = s * norm;
  }
  return out;
}

double kl_divergence(const std::vector<double>& draws, const std::function<double(double)>& prior_pdf,
                     const KlOptions& options) {
  if (options.grid_points < 3) throw InvalidArgument("diagnostics", "KL grid needs at least 3 points");
  const double m = mean_of(draws);
  const double sd = std::sqrt(var_of(draws, 1));
  double lo = m - options.half_width_sd * sd;
  double hi = m + options.half_width_sd * sd;
  // keep the grid strictly inside the prior support
  const double inset = 1e-9 * std::max(1.0, hi - lo);
  if (std::isfinite(options.support_lower)) lo = std::max(lo, options.support_lower + inset);
  if (std::isfinite(options.support_upper)) hi = std::min(hi, options.support_upper - inset);

  const std::size_t g = options.grid_points;
  std::vector<double> grid(g);
  const double dx = (hi - lo) / static_cast<double>(g - 1);
  for (std::size_t i = 0; i < g; ++i) grid[i] = lo + dx * static_cast<double>(i);

  std::vector<double> p = kde_density(draws, grid);
  std::vector<double> q(g);
  for (std::size_t i = 0; i < g; ++i) q[i] = prior_pdf(grid[i]);

  auto trapezoid = [&](const std::vector<double>& f) {
    double s = 0.5 * (f.front() + f.back());
    for (std::size_t i = 1; i + 1 < g; ++i) s += f[i];
    return s * dx;
  };
  const double zp = trapezoid(p);
  const double zq = trapezoid(q);
  if (!(zq > 0)) return std::numeric_limits<double>::infinity();

  std::vector<double> integrand(g, 0.0);
  for (std::size_t i = 0; i < g; ++i) {
    const double pi = p[i] / zp;
    const double qi = q[i] / zq;
    if (pi <= 0.0) continue;
    if (qi <= 0.0) {
      if (pi > 1e-12) return std::numeric_limits<double>::infinity();
      continue;
    }
    integrand[i] = pi * std::log(pi / qi);
  }
  return trapezoid(integrand);
}

double shrinkage(double prior_sd, double post_sd) {
  if (!(prior_sd > 0)) throw InvalidArgument("diagnostics", "prior sd must be positive");
  return 1.0 - post_sd / prior_sd;
}

SummaryRow summarize_parameter(const std::string& name, const ChainValues& chains, double hdi_mass) {
  check_shape(chains);
  const std::vector<double> all = flatten(chains);
  SummaryRow row{};
  row.parameter = name;
  row.mean = mean_of(all);
  row.sd = all.size() > 1 ? std::sqrt(var_of(all, 1)) : kNaN;
  std::tie(row.hdi_low, row.hdi_high) = hdi(all, hdi_mass);
  row.mcse_mean = mcse(chains, McseKind::Mean);
  row.mcse_sd = mcse(chains, McseKind::Sd);
  row.ess_bulk = ess(chains, EssKind::Bulk);
  row.ess_tail = ess(chains, EssKind::Tail);
  row.rhat = chains.size() >= 2 ? rhat(chains) : kNaN;
  return row;
}

std::vector<SummaryRow> summarize(const ChainSet& set, double hdi_mass) {
  std::vector<SummaryRow> rows;
  for (std::size_t j = 0; j < set.num_params(); ++j)
    rows.push_back(summarize_parameter(set.names[j], set.parameter(j), hdi_mass));
  return rows;
}

std::vector<InfoRow> information_table(const ChainSet& set, ModelKind kind, const PriorSpec& priors,
                                       std::vector<std::string>* warnings) {
  std::vector<InfoRow> rows;
  for (std::size_t j = 0; j < set.num_params(); ++j) {
    const MarginalPrior prior = marginal_prior(kind, priors, j);
    const std::vector<double> draws = flatten(set.parameter(j));
    InfoRow row{};
    row.parameter = set.names[j];
    row.prior_mean = prior.mean();
    row.prior_sd = prior.sd();
    row.post_mean = mean_of(draws);
    row.post_sd = std::sqrt(var_of(draws, 1));
    row.shrinkage = shrinkage(row.prior_sd, row.post_sd);
    KlOptions opts;
    opts.support_lower = prior.support_lower();
    opts.support_upper = prior.support_upper();
    row.kl_nats = kl_divergence(draws, [&](double x) { return prior.pdf(x); }, opts);
    if (warnings && std::isinf(row.kl_nats))
      warnings->push_back("KL for " + row.parameter +
                          " is infinite: prior density vanishes where the posterior has mass");
    rows.push_back(row);
  }
  return rows;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "parameter,mean,sd,hdi_3%,hdi_97%,mcse_mean,mcse_sd,ess_bulk,ess_tail,r_hat\n";
  for (const auto& r : rows)
    out << r.parameter << ',' << csv_num(r.mean) << ',' << csv_num(r.sd) << ','
        << csv_num(r.hdi_low) << ',' << csv_num(r.hdi_high) << ',' << csv_num(r.mcse_mean) << ','
        << csv_num(r.mcse_sd) << ',' << csv_num(r.ess_bulk) << ',' << csv_num(r.ess_tail) << ','
        << csv_num(r.rhat) << '\n';
}

void write_info_csv(std::ostream& out, const std::vector<InfoRow>& rows) {
  out << "parameter,prior_mean,prior_sd,post_mean,post_sd,shrinkage,kl_nats\n";
  for (const auto& r : rows)
    out << r.parameter << ',' << csv_num(r.prior_mean) << ',' << csv_num(r.prior_sd) << ','
        << csv_num(r.post_mean) << ',' << csv_num(r.post_sd) << ',' << csv_num(r.shrinkage) << ','
        << csv_num(r.kl_nats) << '\n';
}

std::string format_summary_table(const std::vector<SummaryRow>& rows) {
  std::vector<std::vector<std::string>> cells{{"", "mean", "sd", "hdi_3%", "hdi_97%", "mcse_mean",
                                               "mcse_sd", "ess_bulk", "ess_tail", "r_hat"}};
  for (const auto& r : rows)
    cells.push_back({r.parameter, fmt(r.mean, 5), fmt(r.sd, 5), fmt(r.hdi_low, 5),
                     fmt(r.hdi_high, 5), fmt(r.mcse_mean, 5), fmt(r.mcse_sd, 5),
                     fmt(r.ess_bulk, 1), fmt(r.ess_tail, 1), fmt(r.rhat, 5)});
  return aligned(cells);
}

std::string format_info_table(const std::vector<InfoRow>& rows) {
  std::vector<std::vector<std::string>> cells{
      {"", "prior_mean", "prior_sd", "post_mean", "post_sd", "shrinkage_%", "kl_nats"}};
  for (const auto& r : rows)
    cells.push_back({r.parameter, fmt(r.prior_mean, 4), fmt(r.prior_sd, 4), fmt(r.post_mean, 5),
                     fmt(r.post_sd, 5), fmt(100.0 * r.shrinkage, 1), fmt(r.kl_nats, 3)});
  return aligned(cells);
}

}  // namespace cosmofit
