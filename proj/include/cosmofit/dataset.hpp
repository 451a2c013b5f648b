#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cosmofit {

/// Header names the catalog loader looks for. An empty `id` means "use row numbers".
struct ColumnMapping {
  std::string redshift = "zHD";
  std::string modulus = "MU";
  std::string error = "MUERR_FINAL";
  std::string id = "CID";
};

/// Standardized supernova distances, in file order.
struct SupernovaCatalog {
  std::vector<double> z;
  std::vector<double> mu_obs;
  std::vector<double> sigma_mu;
  std::vector<std::string> ids;

  std::size_t size() const noexcept { return z.size(); }
  /// Throws ParseError unless arrays agree in length, z > 0 and sigma_mu > 0.
  void validate() const;
};

/// Sigma = Sigma_stat + Sigma_sys, verified symmetric positive definite.
struct TotalCovariance {
  Eigen::MatrixXd sigma;
  std::size_t size() const noexcept { return static_cast<std::size_t>(sigma.rows()); }
};

/// Reads a comma-separated catalog with a header line. Lines starting with
/// '#' and blank lines are skipped. Row numbers in errors count data rows from 1.
SupernovaCatalog load_catalog(const std::filesystem::path& path,
                              const ColumnMapping& columns = {});

/// Writes `cat` with the mapped header names; round-trips through load_catalog.
void write_catalog(const std::filesystem::path& path, const SupernovaCatalog& cat,
                   const ColumnMapping& columns = {});

/// First token n, then n*n reals in row-major order. Asymmetry below 1e-10
/// (relative to the largest entry) is averaged away; anything larger is an error.
Eigen::MatrixXd load_covariance(const std::filesystem::path& path);
Eigen::MatrixXd parse_covariance(const std::string& text);
void write_covariance(const std::filesystem::path& path, const Eigen::MatrixXd& m);

/// diag(sigma_mu^2) + sys. Throws on dimension mismatch or when the sum is
/// not positive definite.
TotalCovariance assemble_total_covariance(const SupernovaCatalog& cat,
                                          const Eigen::MatrixXd& sys);

/// 64-bit FNV-1a over the file bytes, as 16 hex digits.
std::string file_checksum(const std::filesystem::path& path);
std::string bytes_checksum(const std::string& bytes);

}  // namespace cosmofit
