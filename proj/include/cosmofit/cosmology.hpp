#pragma once

// Flat FLRW background for the three dark-energy models: Hubble rate in
// closed form, luminosity distance by cumulative Gauss-Legendre quadrature,
// and the distance modulus together with its parameter derivatives.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace cosmofit {

inline constexpr double kSpeedOfLight = 299792.458;  // km/s

enum class ModelKind { LCDM, WCDM, CPL };

std::size_t dimension(ModelKind kind);
std::string_view to_string(ModelKind kind);
/// Accepts "lcdm", "wcdm", "cpl" (case-insensitive).
ModelKind parse_model_kind(std::string_view name);
/// Display names in sampling order: H0, Omega_m, then w or w0, wa.
std::vector<std::string> parameter_names(ModelKind kind);

/// One parameter point. Omega_Lambda = 1 - omega_m is implied.
/// The equation-of-state fields a model does not use are ignored.
struct CosmoParams {
  double h0 = 70.0;
  double omega_m = 0.3;
  double w = -1.0;
  double w0 = -1.0;
  double wa = 0.0;

  /// Packs the parameters `kind` uses, in parameter_names() order.
  Eigen::VectorXd to_vector(ModelKind kind) const;
  static CosmoParams from_vector(ModelKind kind, const Eigen::VectorXd& v);

  bool valid() const noexcept;
  /// Throws InvalidArgument unless h0 > 0, 0 < omega_m < 1 and all used fields are finite.
  void validate(ModelKind kind) const;
};

/// Strictly increasing, finite redshifts in (0, 10].
class RedshiftGrid {
 public:
  explicit RedshiftGrid(std::vector<double> z);
  /// `count` points evenly spaced over [lo, hi].
  static RedshiftGrid linspace(double lo, double hi, std::size_t count);

  std::span<const double> values() const noexcept { return z_; }
  std::size_t size() const noexcept { return z_.size(); }
  double operator[](std::size_t i) const { return z_[i]; }

 private:
  std::vector<double> z_;
};

/// w(z) = w0 + wa z / (1 + z).
double cpl_w_of_z(double w0, double wa, double z);

/// exp(3 ∫_0^z (1 + w(z')) / (1 + z') dz') in closed form.
double dark_energy_factor(ModelKind kind, const CosmoParams& p, double z);

/// E(z) = H(z) / H0. Throws DomainError when the result is not finite.
double expansion_rate(ModelKind kind, const CosmoParams& p, double z);

/// H(z) in km/s/Mpc.
double hubble_rate(ModelKind kind, const CosmoParams& p, double z);

/// Fixed Gauss-Legendre discretization of ∫_0^z dz'/E(z') over a set of
/// redshifts. Unique sorted redshifts split [0, z_max] into segments; each
/// segment gets ceil(width / max_panel_width) * refine panels of five nodes.
/// Results are accumulated segment by segment, so the shared part of every
/// integral is evaluated once.
class QuadraturePlan {
 public:
  static constexpr double kDefaultPanelWidth = 0.05;

  /// `z` may be unsorted and contain duplicates; every entry must be > 0.
  explicit QuadraturePlan(std::span<const double> z,
                          double max_panel_width = kDefaultPanelWidth,
                          int refine = 1);

  std::size_t size() const noexcept { return index_.size(); }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  int refine() const noexcept { return refine_; }
  QuadraturePlan refined() const;

  /// Comoving integral D(z_i) = ∫_0^{z_i} dz'/E for each input redshift, in input order.
  std::vector<double> comoving_integral(ModelKind kind, const CosmoParams& p) const;

  /// Distance moduli in input order. When `jacobian` is non-null it is resized
  /// to size() x dimension(kind) and receives ∂mu_i/∂(H0, Omega_m, w...) of
  /// this exact discretization.
  void distance_modulus(ModelKind kind, const CosmoParams& p, std::span<double> mu,
                        Eigen::MatrixXd* jacobian = nullptr) const;

  std::span<const double> input_redshifts() const noexcept { return input_z_; }

 private:
  struct Node {
    double weight;
    double z;
    double cube;         // (1+z)^3
    double log1p;        // ln(1+z)
    double z_over_1pz;   // z/(1+z)
  };

  std::vector<double> input_z_;
  std::vector<double> unique_z_;
  std::vector<std::size_t> index_;          // input position -> unique position
  std::vector<std::size_t> segment_end_;    // one past the last node of each segment
  std::vector<Node> nodes_;
  double max_panel_width_;
  int refine_;
};

/// d_L(z) in Mpc. Refines the panel count until successive estimates agree
/// to 1e-9 relative. Throws DomainError on a non-finite integrand.
std::vector<double> luminosity_distance(ModelKind kind, const CosmoParams& p,
                                        const RedshiftGrid& grid);

/// mu = 5 log10(d_L / Mpc) + 25.
double distance_modulus_from_distance(double dl_mpc);
std::vector<double> distance_modulus(ModelKind kind, const CosmoParams& p,
                                     const RedshiftGrid& grid);

}  // namespace cosmofit
