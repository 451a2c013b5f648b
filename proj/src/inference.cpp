#include "cosmofit/inference.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "cosmofit/error.hpp"

namespace cosmofit {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(1 + e^x) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double normal_logpdf(double x, double mean, double sd) {
  const double u = (x - mean) / sd;
  return -0.5 * u * u - std::log(sd) - kHalfLog2Pi;
}

double log_beta_fn(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

}  // namespace

void PriorSpec::validate() const {
  const bool ok = std::isfinite(h0_loc) && h0_scale > 0 && omega_m_alpha > 0 &&
                  omega_m_beta > 0 && std::isfinite(w_mean) && w_sd > 0 &&
                  std::isfinite(w0_mean) && w0_sd > 0 && std::isfinite(wa_mean) && wa_sd > 0;
  if (!ok) throw InvalidArgument("inference", "prior scales and shapes must be positive");
}

void PriorSpec::set(const std::string& key, double value) {
  if (key == "h0_loc") h0_loc = value;
  else if (key == "h0_scale") h0_scale = value;
  else if (key == "omega_m_alpha") omega_m_alpha = value;
  else if (key == "omega_m_beta") omega_m_beta = value;
  else if (key == "w_mean") w_mean = value;
  else if (key == "w_sd") w_sd = value;
  else if (key == "w0_mean") w0_mean = value;
  else if (key == "w0_sd") w0_sd = value;
  else if (key == "wa_mean") wa_mean = value;
  else if (key == "wa_sd") wa_sd = value;
  else throw InvalidArgument("inference", "unknown prior key '" + key + "'");
}

std::vector<std::pair<std::string, double>> PriorSpec::entries() const {
  return {{"h0_loc", h0_loc},       {"h0_scale", h0_scale}, {"omega_m_alpha", omega_m_alpha},
          {"omega_m_beta", omega_m_beta}, {"w_mean", w_mean},   {"w_sd", w_sd},
          {"w0_mean", w0_mean},     {"w0_sd", w0_sd},       {"wa_mean", wa_mean},
          {"wa_sd", wa_sd}};
}

PriorSpec PriorSpec::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("inference", "cannot open prior file " + path);
  PriorSpec spec;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos)
      throw InvalidArgument("inference", "prior file line " + std::to_string(lineno) +
                                             " is not key = value");
    std::istringstream k(line.substr(0, eq)), v(line.substr(eq + 1));
    std::string key;
    double value = 0;
    if (!(k >> key) || !(v >> value))
      throw InvalidArgument("inference", "prior file line " + std::to_string(lineno) +
                                             " is not key = value");
    spec.set(key, value);
  }
  spec.validate();
  return spec;
}

double MarginalPrior::log_pdf(double x) const {
  switch (family) {
    case PriorFamily::LogNormal:
      if (!(x > 0)) return kNegInf;
      return normal_logpdf(std::log(x), a, b) - std::log(x);
    case PriorFamily::Beta:
      if (!(x > 0 && x < 1)) return kNegInf;
      return (a - 1) * std::log(x) + (b - 1) * std::log1p(-x) - log_beta_fn(a, b);
    case PriorFamily::Normal: return normal_logpdf(x, a, b);
  }
  return kNegInf;
}

double MarginalPrior::pdf(double x) const { return std::exp(log_pdf(x)); }

double MarginalPrior::mean() const {
  switch (family) {
    case PriorFamily::LogNormal: return std::exp(a + 0.5 * b * b);
    case PriorFamily::Beta: return a / (a + b);
    case PriorFamily::Normal: return a;
  }
  return 0;
}

double MarginalPrior::sd() const {
  switch (family) {
    case PriorFamily::LogNormal: return mean() * std::sqrt(std::expm1(b * b));
    case PriorFamily::Beta: return std::sqrt(a * b / ((a + b) * (a + b) * (a + b + 1)));
    case PriorFamily::Normal: return b;
  }
  return 0;
}

double MarginalPrior::support_lower() const {
  return family == PriorFamily::Normal ? kNegInf : 0.0;
}

double MarginalPrior::support_upper() const {
  return family == PriorFamily::Beta ? 1.0 : std::numeric_limits<double>::infinity();
}

MarginalPrior marginal_prior(ModelKind kind, const PriorSpec& pr, std::size_t index) {
  if (index == 0) return {PriorFamily::LogNormal, pr.h0_loc, pr.h0_scale};
  if (index == 1) return {PriorFamily::Beta, pr.omega_m_alpha, pr.omega_m_beta};
  if (kind == ModelKind::WCDM && index == 2) return {PriorFamily::Normal, pr.w_mean, pr.w_sd};
  if (kind == ModelKind::CPL && index == 2) return {PriorFamily::Normal, pr.w0_mean, pr.w0_sd};
  if (kind == ModelKind::CPL && index == 3) return {PriorFamily::Normal, pr.wa_mean, pr.wa_sd};
  throw InvalidArgument("inference", "parameter index out of range");
}

double log_prior(ModelKind kind, const CosmoParams& p, const PriorSpec& priors) {
  const Eigen::VectorXd v = p.to_vector(kind);
  double lp = 0.0;
  for (Eigen::Index j = 0; j < v.size(); ++j)
    lp += marginal_prior(kind, priors, static_cast<std::size_t>(j)).log_pdf(v[j]);
  return lp;
}

Eigen::VectorXd transform(ModelKind kind, const CosmoParams& p) {
  Eigen::VectorXd xi = p.to_vector(kind);
  xi[0] = std::log(p.h0);
  xi[1] = std::log(p.omega_m) - std::log1p(-p.omega_m);
  return xi;
}

CosmoParams inverse_transform(ModelKind kind, const Eigen::VectorXd& xi) {
  Eigen::VectorXd v = xi;
  v[0] = std::exp(xi[0]);
  v[1] = 1.0 / (1.0 + std::exp(-xi[1]));
  return CosmoParams::from_vector(kind, v);
}

double log_jacobian(ModelKind kind, const Eigen::VectorXd& xi) {
  if (static_cast<std::size_t>(xi.size()) != dimension(kind))
    throw InvalidArgument("inference", "unconstrained point has wrong length");
  // d om / d x = om (1 - om); ln om = -softplus(-x), ln(1 - om) = -softplus(x)
  return xi[0] - softplus(-xi[1]) - softplus(xi[1]);
}

CosmoParams sample_prior(ModelKind kind, const PriorSpec& pr, Rng& rng) {
  CosmoParams p;
  p.h0 = std::lognormal_distribution<double>(pr.h0_loc, pr.h0_scale)(rng);
  const double ga = std::gamma_distribution<double>(pr.omega_m_alpha, 1.0)(rng);
  const double gb = std::gamma_distribution<double>(pr.omega_m_beta, 1.0)(rng);
  p.omega_m = ga / (ga + gb);
  if (kind == ModelKind::WCDM) p.w = std::normal_distribution<double>(pr.w_mean, pr.w_sd)(rng);
  if (kind == ModelKind::CPL) {
    p.w0 = std::normal_distribution<double>(pr.w0_mean, pr.w0_sd)(rng);
    p.wa = std::normal_distribution<double>(pr.wa_mean, pr.wa_sd)(rng);
  }
  return p;
}

PosteriorSpec::PosteriorSpec(ModelKind kind, PriorSpec priors,
                             std::shared_ptr<const SupernovaCatalog> data,
                             std::shared_ptr<const CholeskyFactor> factor)
    : kind_(kind),
      priors_(priors),
      data_(std::move(data)),
      factor_(std::move(factor)),
      plan_(data_->z) {
  priors_.validate();
  data_->validate();
  if (data_->size() != factor_->size())
    throw InvalidArgument("inference", "catalog has " + std::to_string(data_->size()) +
                                           " rows but the Cholesky factor is " +
                                           std::to_string(factor_->size()) + "x" +
                                           std::to_string(factor_->size()));
  mu_obs_ = Eigen::Map<const Eigen::VectorXd>(data_->mu_obs.data(),
                                              static_cast<Eigen::Index>(data_->size()));
}

std::vector<std::string> PosteriorSpec::parameter_names() const {
  return cosmofit::parameter_names(kind_);
}

Eigen::VectorXd PosteriorSpec::constrain(const Eigen::VectorXd& xi) const {
  return inverse_transform(kind_, xi).to_vector(kind_);
}

double PosteriorSpec::log_prior_unconstrained(const Eigen::VectorXd& xi,
                                              Eigen::VectorXd* grad) const {
  const std::size_t d = dim();
  if (static_cast<std::size_t>(xi.size()) != d)
    throw InvalidArgument("inference", "unconstrained point has wrong length");
  const PriorSpec& pr = priors_;
  const double x1 = xi[1];
  const double log_om = -softplus(-x1);
  const double log_1m_om = -softplus(x1);
  const double om = std::exp(log_om);

  // LogNormal(H0) * dH0/dxi0 is Normal(xi0; loc, scale).
  double lp = normal_logpdf(xi[0], pr.h0_loc, pr.h0_scale);
  // Beta(om) * om (1 - om)
  lp += pr.omega_m_alpha * log_om + pr.omega_m_beta * log_1m_om -
        log_beta_fn(pr.omega_m_alpha, pr.omega_m_beta);
  if (grad) {
    grad->resize(static_cast<Eigen::Index>(d));
    (*grad)[0] = -(xi[0] - pr.h0_loc) / (pr.h0_scale * pr.h0_scale);
    (*grad)[1] = pr.omega_m_alpha * (1.0 - om) - pr.omega_m_beta * om;
  }
  auto add_normal = [&](Eigen::Index j, double mean, double sd) {
    lp += normal_logpdf(xi[j], mean, sd);
    if (grad) (*grad)[j] = -(xi[j] - mean) / (sd * sd);
  };
  if (kind_ == ModelKind::WCDM) add_normal(2, pr.w_mean, pr.w_sd);
  if (kind_ == ModelKind::CPL) {
    add_normal(2, pr.w0_mean, pr.w0_sd);
    add_normal(3, pr.wa_mean, pr.wa_sd);
  }
  return lp;
}

Eigen::VectorXd PosteriorSpec::model_moduli(const CosmoParams& p,
                                            Eigen::MatrixXd* jacobian) const {
  Eigen::VectorXd mu(static_cast<Eigen::Index>(data_->size()));
  plan_.distance_modulus(kind_, p, std::span<double>(mu.data(), data_->size()), jacobian);
  return mu;
}

WhitenedLogLik PosteriorSpec::pointwise_loglik(const CosmoParams& p) const {
  return whitened_pointwise_loglik(*factor_, mu_obs_, model_moduli(p));
}

double PosteriorSpec::log_likelihood(const CosmoParams& p) const {
  const WhitenedLogLik w = pointwise_loglik(p);
  return include_log_det_ ? w.total() : w.ell.sum();
}

double PosteriorSpec::log_density_gradient(const Eigen::VectorXd& xi,
                                           Eigen::VectorXd& grad) const {
  const std::size_t d = dim();
  grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  if (static_cast<std::size_t>(xi.size()) != d)
    throw InvalidArgument("inference", "unconstrained point has wrong length");
  if (!xi.allFinite()) return kNegInf;

  const CosmoParams p = inverse_transform(kind_, xi);
  Eigen::VectorXd prior_grad;
  const double lp = log_prior_unconstrained(xi, &prior_grad);

  Eigen::MatrixXd jac;
  Eigen::VectorXd mu;
  try {
    mu = model_moduli(p, &jac);
  } catch (const DomainError&) {
    return kNegInf;
  }
  const Eigen::VectorXd y = factor_->whiten(mu_obs_ - mu);
  double ll = -0.5 * y.squaredNorm() - static_cast<double>(y.size()) * kHalfLog2Pi;
  if (include_log_det_) ll += factor_->log_det_t();

  // d ll / d params = J^T Sigma^{-1} r = J^T L^{-T} y
  const Eigen::VectorXd g_params = jac.transpose() * factor_->solve_transpose(y);
  Eigen::VectorXd g = prior_grad;
  g[0] += g_params[0] * p.h0;
  g[1] += g_params[1] * p.omega_m * (1.0 - p.omega_m);
  for (std::size_t j = 2; j < d; ++j)
    g[static_cast<Eigen::Index>(j)] += g_params[static_cast<Eigen::Index>(j)];

  const double value = lp + ll;
  if (!std::isfinite(value) || !g.allFinite()) {
    grad.setZero();
    return kNegInf;
  }
  grad = g;
  return value;
}

double PosteriorSpec::log_posterior(const Eigen::VectorXd& xi) const {
  const std::size_t d = dim();
  if (static_cast<std::size_t>(xi.size()) != d)
    throw InvalidArgument("inference", "unconstrained point has wrong length");
  if (!xi.allFinite()) return kNegInf;
  const CosmoParams p = inverse_transform(kind_, xi);
  const double lp = log_prior_unconstrained(xi, nullptr);
  try {
    const double v = lp + log_likelihood(p);
    return std::isfinite(v) ? v : kNegInf;
  } catch (const DomainError&) {
    return kNegInf;
  }
}

Eigen::VectorXd PosteriorSpec::initial_point(Rng& rng) const {
  CosmoParams centre;
  centre.h0 = std::exp(priors_.h0_loc);
  centre.omega_m = priors_.omega_m_alpha / (priors_.omega_m_alpha + priors_.omega_m_beta);
  centre.w = priors_.w_mean;
  centre.w0 = priors_.w0_mean;
  centre.wa = priors_.wa_mean;
  Eigen::VectorXd xi = transform(kind_, centre);
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] += jitter(rng);
  return xi;
}

Eigen::VectorXd PosteriorSpec::grad_log_posterior(const Eigen::VectorXd& xi) const {
  Eigen::VectorXd g;
  log_density_gradient(xi, g);
  return g;
}

}  // namespace cosmofit
