#include "cosmofit/cosmology.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>

#include "cosmofit/error.hpp"

namespace cosmofit {

namespace {

// Five-point Gauss-Legendre rule on [-1, 1].
constexpr std::array<double, 5> kGLNodes = {
    -0.9061798459386639928, -0.5384693101056830910, 0.0,
    0.5384693101056830910, 0.9061798459386639928};
constexpr std::array<double, 5> kGLWeights = {
    0.2369268850561890875, 0.4786286704993664680, 0.5688888888888888889,
    0.4786286704993664680, 0.2369268850561890875};

constexpr double kFiveOverLn10 = 5.0 / std::numbers::ln10;
constexpr double kMaxRedshift = 10.0;

}  // namespace

std::size_t dimension(ModelKind kind) {
  switch (kind) {
    case ModelKind::LCDM: return 2;
    case ModelKind::WCDM: return 3;
    case ModelKind::CPL: return 4;
  }
  return 0;
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::LCDM: return "lcdm";
    case ModelKind::WCDM: return "wcdm";
    case ModelKind::CPL: return "cpl";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "lcdm") return ModelKind::LCDM;
  if (lower == "wcdm") return ModelKind::WCDM;
  if (lower == "cpl") return ModelKind::CPL;
  throw InvalidArgument("cosmology", "unknown model '" + std::string(name) +
                                         "' (expected lcdm, wcdm or cpl)");
}

std::vector<std::string> parameter_names(ModelKind kind) {
  switch (kind) {
    case ModelKind::LCDM: return {"H0", "Omega_m"};
    case ModelKind::WCDM: return {"H0", "Omega_m", "w"};
    case ModelKind::CPL: return {"H0", "Omega_m", "w0", "wa"};
  }
  return {};
}

Eigen::VectorXd CosmoParams::to_vector(ModelKind kind) const {
  Eigen::VectorXd v(dimension(kind));
  v[0] = h0;
  v[1] = omega_m;
  if (kind == ModelKind::WCDM) v[2] = w;
  if (kind == ModelKind::CPL) {
    v[2] = w0;
    v[3] = wa;
  }
  return v;
}

CosmoParams CosmoParams::from_vector(ModelKind kind, const Eigen::VectorXd& v) {
  if (static_cast<std::size_t>(v.size()) != dimension(kind))
    throw InvalidArgument("cosmology", "parameter vector has wrong length for model " +
                                           std::string(to_string(kind)));
  CosmoParams p;
  p.h0 = v[0];
  p.omega_m = v[1];
  if (kind == ModelKind::WCDM) p.w = v[2];
  if (kind == ModelKind::CPL) {
    p.w0 = v[2];
    p.wa = v[3];
  }
  return p;
}

bool CosmoParams::valid() const noexcept {
  return std::isfinite(h0) && h0 > 0 && std::isfinite(omega_m) && omega_m > 0 &&
         omega_m < 1 && std::isfinite(w) && std::isfinite(w0) && std::isfinite(wa);
}

void CosmoParams::validate(ModelKind kind) const {
  if (!(std::isfinite(h0) && h0 > 0))
    throw InvalidArgument("cosmology", "H0 must be positive and finite");
  if (!(std::isfinite(omega_m) && omega_m > 0 && omega_m < 1))
    throw InvalidArgument("cosmology", "Omega_m must lie in (0, 1)");
  if (kind == ModelKind::WCDM && !std::isfinite(w))
    throw InvalidArgument("cosmology", "w must be finite");
  if (kind == ModelKind::CPL && !(std::isfinite(w0) && std::isfinite(wa)))
    throw InvalidArgument("cosmology", "w0 and wa must be finite");
}

RedshiftGrid::RedshiftGrid(std::vector<double> z) : z_(std::move(z)) {
  if (z_.empty()) throw InvalidArgument("cosmology", "redshift grid is empty");
  for (std::size_t i = 0; i < z_.size(); ++i) {
    const double v = z_[i];
    if (!std::isfinite(v) || v <= 0.0)
      throw InvalidArgument("cosmology", "redshift grid entries must be finite and > 0");
    if (v > kMaxRedshift)
      throw InvalidArgument("cosmology", "redshift grid exceeds z = 10");
    if (i > 0 && !(v > z_[i - 1]))
      throw InvalidArgument("cosmology", "redshift grid must be strictly increasing");
  }
}

RedshiftGrid RedshiftGrid::linspace(double lo, double hi, std::size_t count) {
  if (count == 0) throw InvalidArgument("cosmology", "grid count must be positive");
  std::vector<double> z(count);
  if (count == 1) {
    z[0] = lo;
  } else {
    const double step = (hi - lo) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) z[i] = lo + step * static_cast<double>(i);
    z.back() = hi;
  }
  return RedshiftGrid(std::move(z));
}

double cpl_w_of_z(double w0, double wa, double z) { return w0 + wa * z / (1.0 + z); }

double dark_energy_factor(ModelKind kind, const CosmoParams& p, double z) {
  switch (kind) {
    case ModelKind::LCDM: return 1.0;
    case ModelKind::WCDM: return std::pow(1.0 + z, 3.0 * (1.0 + p.w));
    case ModelKind::CPL:
      return std::pow(1.0 + z, 3.0 * (1.0 + p.w0 + p.wa)) *
             std::exp(-3.0 * p.wa * z / (1.0 + z));
  }
  return 1.0;
}

double expansion_rate(ModelKind kind, const CosmoParams& p, double z) {
  const double opz = 1.0 + z;
  const double e2 =
      p.omega_m * opz * opz * opz + (1.0 - p.omega_m) * dark_energy_factor(kind, p, z);
  const double e = std::sqrt(e2);
  if (!std::isfinite(e) || e <= 0.0) {
    std::ostringstream os;
    os << "non-finite expansion rate at z = " << z;
    throw DomainError(os.str(), z);
  }
  return e;
}

double hubble_rate(ModelKind kind, const CosmoParams& p, double z) {
  return p.h0 * expansion_rate(kind, p, z);
}

QuadraturePlan::QuadraturePlan(std::span<const double> z, double max_panel_width, int refine)
    : input_z_(z.begin(), z.end()), max_panel_width_(max_panel_width), refine_(refine) {
  if (input_z_.empty()) throw InvalidArgument("cosmology", "no redshifts to integrate");
  if (!(max_panel_width > 0) || refine < 1)
    throw InvalidArgument("cosmology", "invalid quadrature panel settings");
  for (double v : input_z_) {
    if (!std::isfinite(v) || v <= 0.0)
      throw InvalidArgument("cosmology", "redshifts must be finite and > 0");
  }

  unique_z_ = input_z_;
  std::sort(unique_z_.begin(), unique_z_.end());
  unique_z_.erase(std::unique(unique_z_.begin(), unique_z_.end()), unique_z_.end());

  index_.resize(input_z_.size());
  for (std::size_t i = 0; i < input_z_.size(); ++i) {
    index_[i] = static_cast<std::size_t>(
        std::lower_bound(unique_z_.begin(), unique_z_.end(), input_z_[i]) -
        unique_z_.begin());
  }

  double lo = 0.0;
  segment_end_.reserve(unique_z_.size());
  for (double hi : unique_z_) {
    const double width = hi - lo;
    const auto base = static_cast<long>(std::ceil(width / max_panel_width_));
    const long panels = std::max(1L, base) * refine_;
    const double h = width / static_cast<double>(panels);
    for (long k = 0; k < panels; ++k) {
      const double a = lo + h * static_cast<double>(k);
      const double mid = a + 0.5 * h;
      for (std::size_t q = 0; q < kGLNodes.size(); ++q) {
        const double zz = mid + 0.5 * h * kGLNodes[q];
        const double opz = 1.0 + zz;
        nodes_.push_back(Node{0.5 * h * kGLWeights[q], zz, opz * opz * opz,
                              std::log1p(zz), zz / opz});
      }
    }
    segment_end_.push_back(nodes_.size());
    lo = hi;
  }
}

QuadraturePlan QuadraturePlan::refined() const {
  return QuadraturePlan(input_z_, max_panel_width_, refine_ * 2);
}

namespace {

// Dark-energy factor at a precomputed node.
inline double node_de_factor(ModelKind kind, const CosmoParams& p, double log1p,
                             double z_over_1pz) {
  switch (kind) {
    case ModelKind::LCDM: return 1.0;
    case ModelKind::WCDM: return std::exp(3.0 * (1.0 + p.w) * log1p);
    case ModelKind::CPL:
      return std::exp(3.0 * (1.0 + p.w0 + p.wa) * log1p - 3.0 * p.wa * z_over_1pz);
  }
  return 1.0;
}

[[noreturn]] void throw_domain(double z) {
  std::ostringstream os;
  os << "non-finite integrand 1/E(z) in the quadrature segment at z = " << z;
  throw DomainError(os.str(), z);
}

}  // namespace

std::vector<double> QuadraturePlan::comoving_integral(ModelKind kind,
                                                      const CosmoParams& p) const {
  std::vector<double> cumulative(unique_z_.size());
  const double om = p.omega_m;
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t s = 0; s < segment_end_.size(); ++s) {
    for (; n < segment_end_[s]; ++n) {
      const Node& nd = nodes_[n];
      const double e2 =
          om * nd.cube + (1.0 - om) * node_de_factor(kind, p, nd.log1p, nd.z_over_1pz);
      if (!std::isfinite(e2) || e2 <= 0.0) throw_domain(nd.z);
      acc += nd.weight / std::sqrt(e2);
    }
    cumulative[s] = acc;
  }
  std::vector<double> out(index_.size());
  for (std::size_t i = 0; i < index_.size(); ++i) out[i] = cumulative[index_[i]];
  return out;
}

void QuadraturePlan::distance_modulus(ModelKind kind, const CosmoParams& p,
                                      std::span<double> mu,
                                      Eigen::MatrixXd* jacobian) const {
  if (mu.size() != index_.size())
    throw InvalidArgument("cosmology", "distance modulus output has wrong length");

  const std::size_t d = dimension(kind);
  const std::size_t k = unique_z_.size();
  const double om = p.omega_m;

  std::vector<double> cum(k);
  // ∂D/∂(Omega_m, w...) per unique redshift, row-major k x (d-1).
  std::vector<double> dcum(jacobian ? k * (d - 1) : 0);

  double acc = 0.0;
  std::array<double, 3> dacc{0.0, 0.0, 0.0};
  std::size_t n = 0;
  for (std::size_t s = 0; s < segment_end_.size(); ++s) {
    for (; n < segment_end_[s]; ++n) {
      const Node& nd = nodes_[n];
      const double f = node_de_factor(kind, p, nd.log1p, nd.z_over_1pz);
      const double e2 = om * nd.cube + (1.0 - om) * f;
      if (!std::isfinite(e2) || e2 <= 0.0) throw_domain(nd.z);
      const double inv_e = 1.0 / std::sqrt(e2);
      acc += nd.weight * inv_e;
      if (jacobian) {
        // ∂(1/E)/∂q = -1/2 E^-3 ∂E²/∂q
        const double c = -0.5 * nd.weight * inv_e * inv_e * inv_e;
        dacc[0] += c * (nd.cube - f);
        if (kind == ModelKind::WCDM) {
          dacc[1] += c * (1.0 - om) * f * 3.0 * nd.log1p;
        } else if (kind == ModelKind::CPL) {
          dacc[1] += c * (1.0 - om) * f * 3.0 * nd.log1p;
          dacc[2] += c * (1.0 - om) * f * 3.0 * (nd.log1p - nd.z_over_1pz);
        }
      }
    }
    cum[s] = acc;
    if (jacobian) {
      for (std::size_t j = 0; j + 1 < d; ++j) dcum[s * (d - 1) + j] = dacc[j];
    }
  }

  const double c_over_h0 = kSpeedOfLight / p.h0;
  for (std::size_t i = 0; i < index_.size(); ++i) {
    const double integral = cum[index_[i]];
    const double dl = (1.0 + input_z_[i]) * c_over_h0 * integral;
    mu[i] = kFiveOverLn10 * std::log(dl) + 25.0;
    if (!std::isfinite(mu[i])) throw_domain(input_z_[i]);
  }

  if (jacobian) {
    jacobian->resize(static_cast<Eigen::Index>(index_.size()), static_cast<Eigen::Index>(d));
    const double dmu_dh0 = -kFiveOverLn10 / p.h0;
    for (std::size_t i = 0; i < index_.size(); ++i) {
      const std::size_t u = index_[i];
      const double scale = kFiveOverLn10 / cum[u];
      const auto row = static_cast<Eigen::Index>(i);
      (*jacobian)(row, 0) = dmu_dh0;
      for (std::size_t j = 0; j + 1 < d; ++j)
        (*jacobian)(row, static_cast<Eigen::Index>(j + 1)) = scale * dcum[u * (d - 1) + j];
    }
  }
}

std::vector<double> luminosity_distance(ModelKind kind, const CosmoParams& p,
                                        const RedshiftGrid& grid) {
  p.validate(kind);
  constexpr double kRelTol = 1e-9;
  constexpr int kMaxRefine = 1024;

  QuadraturePlan plan(grid.values());
  std::vector<double> coarse = plan.comoving_integral(kind, p);
  double worst_z = grid[0];
  while (true) {
    QuadraturePlan fine_plan = plan.refined();
    std::vector<double> fine = fine_plan.comoving_integral(kind, p);
    double worst = 0.0;
    for (std::size_t i = 0; i < fine.size(); ++i) {
      const double rel = std::abs(fine[i] - coarse[i]) / std::abs(fine[i]);
      if (!(rel <= worst)) {
        worst = rel;
        worst_z = grid[i];
      }
    }
    if (worst < kRelTol) {
      std::vector<double> dl(fine.size());
      for (std::size_t i = 0; i < fine.size(); ++i)
        dl[i] = (1.0 + grid[i]) * kSpeedOfLight / p.h0 * fine[i];
      return dl;
    }
    if (fine_plan.refine() >= kMaxRefine) {
      std::ostringstream os;
      os << "luminosity-distance quadrature did not converge near z = " << worst_z;
      throw DomainError(os.str(), worst_z);
    }
    plan = std::move(fine_plan);
    coarse = std::move(fine);
  }
}

double distance_modulus_from_distance(double dl_mpc) {
  return 5.0 * std::log10(dl_mpc) + 25.0;
}

std::vector<double> distance_modulus(ModelKind kind, const CosmoParams& p,
                                     const RedshiftGrid& grid) {
  std::vector<double> dl = luminosity_distance(kind, p, grid);
  for (double& v : dl) v = distance_modulus_from_distance(v);
  return dl;
}

}  // namespace cosmofit
