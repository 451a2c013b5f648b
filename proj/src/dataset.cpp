#include "cosmofit/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cosmofit/error.hpp"
#include "cosmofit/whitening.hpp"

namespace cosmofit {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n\"");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n\"");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(
        start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string read_file(const std::filesystem::path& path, const std::string& module) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(module, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void SupernovaCatalog::validate() const {
  const std::size_t n = z.size();
  if (mu_obs.size() != n || sigma_mu.size() != n || (!ids.empty() && ids.size() != n))
    throw ParseError("catalog arrays have mismatched lengths");
  if (n == 0) throw ParseError("catalog is empty");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(z[i]) || z[i] <= 0.0) throw ParseError("redshift must be > 0", i + 1);
    if (!std::isfinite(mu_obs[i])) throw ParseError("distance modulus is not finite", i + 1);
    if (!std::isfinite(sigma_mu[i]) || sigma_mu[i] <= 0.0)
      throw ParseError("modulus error must be > 0", i + 1);
  }
}

SupernovaCatalog load_catalog(const std::filesystem::path& path, const ColumnMapping& columns) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open catalog " + path.string());

  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    header = split_csv(t);
    break;
  }
  if (header.empty()) throw ParseError("catalog " + path.string() + " has no header");

  auto find = [&](const std::string& name, bool required) -> long {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<long>(i);
    if (required) throw ParseError("catalog is missing column '" + name + "'");
    return -1;
  };
  const long iz = find(columns.redshift, true);
  const long imu = find(columns.modulus, true);
  const long ierr = find(columns.error, true);
  const long iid = columns.id.empty() ? -1 : find(columns.id, false);

  SupernovaCatalog cat;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    ++row;
    const auto cells = split_csv(t);
    if (cells.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " cells, found " +
                           std::to_string(cells.size()),
                       row);
    double z = 0, mu = 0, err = 0;
    if (!parse_double(cells[static_cast<std::size_t>(iz)], z))
      throw ParseError("non-numeric " + columns.redshift + " cell", row);
    if (!parse_double(cells[static_cast<std::size_t>(imu)], mu))
      throw ParseError("non-numeric " + columns.modulus + " cell", row);
    if (!parse_double(cells[static_cast<std::size_t>(ierr)], err))
      throw ParseError("non-numeric " + columns.error + " cell", row);
    if (!(z > 0.0) || !std::isfinite(z)) throw ParseError("redshift must be > 0", row);
    if (!std::isfinite(mu)) throw ParseError("distance modulus is not finite", row);
    if (!(err > 0.0) || !std::isfinite(err)) throw ParseError("modulus error must be > 0", row);
    cat.z.push_back(z);
    cat.mu_obs.push_back(mu);
    cat.sigma_mu.push_back(err);
    cat.ids.push_back(iid >= 0 ? cells[static_cast<std::size_t>(iid)] : std::to_string(row));
  }
  cat.validate();
  return cat;
}

void write_catalog(const std::filesystem::path& path, const SupernovaCatalog& cat,
                   const ColumnMapping& columns) {
  cat.validate();
  std::ofstream out(path);
  if (!out) throw Error("dataset", "cannot write " + path.string());
  const std::string id_name = columns.id.empty() ? "CID" : columns.id;
  out << id_name << ',' << columns.redshift << ',' << columns.modulus << ',' << columns.error
      << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < cat.size(); ++i) {
    out << (cat.ids.empty() ? std::to_string(i + 1) : cat.ids[i]) << ',' << cat.z[i] << ','
        << cat.mu_obs[i] << ',' << cat.sigma_mu[i] << '\n';
  }
}

Eigen::MatrixXd parse_covariance(const std::string& text) {
  std::istringstream in(text);
  std::string token;
  if (!(in >> token)) throw ParseError("covariance file is empty");
  long n = 0;
  {
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), n);
    if (ec != std::errc() || ptr != token.data() + token.size() || n <= 0)
      throw ParseError("covariance header must be a positive integer, found '" + token + "'");
  }
  const auto count = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
  std::vector<double> values;
  values.reserve(count);
  while (in >> token) {
    double v = 0;
    if (!parse_double(token, v))
      throw ParseError("non-numeric covariance entry '" + token + "' at position " +
                       std::to_string(values.size() + 1));
    values.push_back(v);
  }
  if (values.size() != count)
    throw ParseError("covariance declares n = " + std::to_string(n) + " (" +
                     std::to_string(count) + " entries) but contains " +
                     std::to_string(values.size()));

  Eigen::MatrixXd m(n, n);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j) m(i, j) = values[static_cast<std::size_t>(i * n + j)];

  const double scale = m.cwiseAbs().maxCoeff();
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (scale > 0.0 && asym > 1e-10 * scale)
    throw ParseError("covariance is not symmetric (max |M - M^T| = " + std::to_string(asym) +
                     ")");
  return 0.5 * (m + m.transpose());
}

Eigen::MatrixXd load_covariance(const std::filesystem::path& path) {
  return parse_covariance(read_file(path, "dataset"));
}

void write_covariance(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path);
  if (!out) throw Error("dataset", "cannot write " + path.string());
  out << m.rows() << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << m(i, j);
    out << '\n';
  }
}

TotalCovariance assemble_total_covariance(const SupernovaCatalog& cat,
                                          const Eigen::MatrixXd& sys) {
  const auto n = static_cast<Eigen::Index>(cat.size());
  if (sys.rows() != n || sys.cols() != n)
    throw InvalidArgument("dataset", "systematic covariance is " + std::to_string(sys.rows()) +
                                         "x" + std::to_string(sys.cols()) +
                                         " but the catalog has " + std::to_string(n) + " rows");
  TotalCovariance total;
  total.sigma = sys;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = cat.sigma_mu[static_cast<std::size_t>(i)];
    total.sigma(i, i) += s * s;
  }
  try {
    (void)cholesky_factorize(total.sigma);
  } catch (const NotPositiveDefinite& e) {
    throw NotPositiveDefinite("dataset", e.pivot());
  }
  return total;
}

std::string bytes_checksum(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_checksum(const std::filesystem::path& path) {
  return bytes_checksum(read_file(path, "dataset"));
}

}  // namespace cosmofit
