#include "cosmofit/run.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "cosmofit/error.hpp"
#include "cosmofit/whitening.hpp"

namespace cosmofit {

namespace {

constexpr char kPointwiseMagic[8] = {'C', 'F', 'P', 'W', '0', '0', '0', '1'};

std::string full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const std::string& require(const KeyValues& kv, const std::string& key, const fs::path& where) {
  const auto it = kv.find(key);
  if (it == kv.end())
    throw Error("cli", "missing '" + key + "' in " + where.string());
  return it->second;
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (trim(s.substr(pos)).empty()) return v;
  } catch (const std::exception&) {
  }
  throw Error("cli", "cannot read '" + s + "' as a number for " + what);
}

std::uint64_t to_unsigned(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (trim(s.substr(pos)).empty() && s.find('-') == std::string::npos) return v;
  } catch (const std::exception&) {
  }
  throw Error("cli", "cannot read '" + s + "' as a non-negative integer for " + what);
}

std::string chain_file(std::size_t k) { return "chain_" + std::to_string(k) + ".csv"; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cli", "cannot write " + path.string());
  out << text;
  if (!out) throw Error("cli", "write failed for " + path.string());
}

template <class Fn>
void write_stream(const fs::path& path, Fn&& fn) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cli", "cannot write " + path.string());
  fn(out);
  if (!out) throw Error("cli", "write failed for " + path.string());
}

void write_chain_csv(const fs::path& path, const std::vector<std::string>& names,
                     const ChainDraws& c) {
  write_stream(path, [&](std::ostream& out) {
    for (const auto& n : names) out << n << ',';
    out << "lp__,energy__,divergent__,treedepth__,accept_stat__,n_leapfrog__\n";
    for (Eigen::Index i = 0; i < c.draws.rows(); ++i) {
      const auto k = static_cast<std::size_t>(i);
      for (Eigen::Index j = 0; j < c.draws.cols(); ++j) out << full(c.draws(i, j)) << ',';
      out << full(c.log_density[k]) << ',' << full(c.energy[k]) << ','
          << static_cast<int>(c.divergent[k]) << ',' << c.tree_depth[k] << ','
          << full(c.accept_stat[k]) << ',' << c.n_leapfrog[k] << '\n';
    }
  });
}

ChainDraws read_chain_csv(const fs::path& path, ModelKind kind) {
  std::ifstream in(path);
  if (!in) throw Error("cli", "cannot read " + path.string());
  const std::vector<std::string> names = parameter_names(kind);
  const std::size_t d = names.size();
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(trim(cell));
  }
  if (header.size() != d + 6)
    throw Error("cli", path.filename().string() + " has an unexpected header");
  for (std::size_t j = 0; j < d; ++j)
    if (header[j] != names[j])
      throw Error("cli", path.filename().string() + " does not hold " +
                             std::string(to_string(kind)) + " draws");

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(to_double(cell, path.filename().string()));
    if (row.size() != d + 6)
      throw Error("cli", path.filename().string() + ": row " + std::to_string(rows.size() + 1) +
                             " has " + std::to_string(row.size()) + " fields");
    rows.push_back(std::move(row));
  }

  ChainDraws c;
  const auto n = static_cast<Eigen::Index>(rows.size());
  c.draws.resize(n, static_cast<Eigen::Index>(d));
  c.unconstrained.resize(n, static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    Eigen::VectorXd theta(static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) theta[static_cast<Eigen::Index>(j)] = r[j];
    c.draws.row(i) = theta.transpose();
    c.unconstrained.row(i) = transform(kind, CosmoParams::from_vector(kind, theta)).transpose();
    c.log_density.push_back(r[d]);
    c.energy.push_back(r[d + 1]);
    c.divergent.push_back(static_cast<char>(r[d + 2] != 0.0));
    c.tree_depth.push_back(static_cast<int>(r[d + 3]));
    c.accept_stat.push_back(r[d + 4]);
    c.n_leapfrog.push_back(static_cast<int>(r[d + 5]));
  }
  return c;
}

void write_pointwise(const fs::path& path, const PointwiseLogLik& pl) {
  write_stream(path, [&](std::ostream& out) {
    const std::uint64_t rows = pl.draws();
    const std::uint64_t cols = pl.points();
    out.write(kPointwiseMagic, sizeof kPointwiseMagic);
    out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
    out.write(reinterpret_cast<const char*>(&pl.log_det_t), sizeof pl.log_det_t);
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m = pl.ell;
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * rows * cols));
  });
}

PointwiseLogLik read_pointwise(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[8];
  std::uint64_t rows = 0, cols = 0;
  PointwiseLogLik pl;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  in.read(reinterpret_cast<char*>(&cols), sizeof cols);
  in.read(reinterpret_cast<char*>(&pl.log_det_t), sizeof pl.log_det_t);
  if (!in || std::string(magic, 8) != std::string(kPointwiseMagic, 8) ||
      rows * cols > kMaxStoredPointwise)
    throw Error("cli", path.filename().string() + " is not a pointwise log-likelihood file");
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m(
      static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * rows * cols));
  if (!in) throw Error("cli", path.filename().string() + " is truncated");
  pl.ell = m;
  return pl;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

KeyValues config_entries(const FitOptions& o, const PriorSpec& priors) {
  KeyValues kv;
  kv["model"] = std::string(to_string(o.kind));
  kv["data"] = fs::absolute(o.data).lexically_normal().string();
  kv["cov"] = fs::absolute(o.cov).lexically_normal().string();
  kv["column.redshift"] = o.columns.redshift;
  kv["column.modulus"] = o.columns.modulus;
  kv["column.error"] = o.columns.error;
  kv["column.id"] = o.columns.id;
  kv["chains"] = std::to_string(o.sampler.chains);
  kv["warmup"] = std::to_string(o.sampler.warmup);
  kv["draws"] = std::to_string(o.sampler.draws);
  kv["seed"] = std::to_string(o.sampler.seed);
  kv["target_accept"] = full(o.sampler.target_accept);
  kv["max_tree_depth"] = std::to_string(o.sampler.max_tree_depth);
  kv["step_size"] = full(o.sampler.step_size);
  kv["adapt_mass"] = o.sampler.adapt_mass ? "true" : "false";
  for (const auto& [key, value] : priors.entries()) kv["prior." + key] = full(value);
  return kv;
}

}  // namespace

KeyValues read_key_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cli", "cannot read " + path.string());
  KeyValues kv;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw Error("cli", "malformed line in " + path.string() + ": " + t);
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return kv;
}

void write_key_values(const fs::path& path, const KeyValues& kv) {
  std::string text;
  for (const auto& [k, v] : kv) text += k + " = " + v + "\n";
  write_text(path, text);
}

fs::path default_run_dir(ModelKind kind, std::uint64_t seed) {
  const char* root = std::getenv(kOutputRootEnv);
  const fs::path base = root && *root ? fs::path(root) : fs::path("runs");
  return base / (std::string(to_string(kind)) + "-seed" + std::to_string(seed));
}

std::shared_ptr<PosteriorSpec> build_posterior(ModelKind kind, const PriorSpec& priors,
                                               const fs::path& data, const fs::path& cov,
                                               const ColumnMapping& columns) {
  auto catalog = std::make_shared<SupernovaCatalog>(load_catalog(data, columns));
  const Eigen::MatrixXd sys = load_covariance(cov);
  const TotalCovariance total = assemble_total_covariance(*catalog, sys);
  auto factor = std::make_shared<CholeskyFactor>(cholesky_factorize(total));
  return std::make_shared<PosteriorSpec>(kind, priors, catalog, factor);
}

FitOutcome run_fit(const FitOptions& options) {
  const auto t_start = std::chrono::steady_clock::now();
  options.sampler.validate();
  PriorSpec priors = options.prior_file ? PriorSpec::from_file(options.prior_file->string())
                                        : PriorSpec{};
  priors.validate();

  const fs::path out = options.out.empty() ? default_run_dir(options.kind, options.sampler.seed)
                                           : options.out;
  if (fs::exists(out) && !(fs::is_directory(out) && fs::is_empty(out)))
    throw InvalidArgument("cli", "output directory " + out.string() + " already exists");

  const auto t_load = std::chrono::steady_clock::now();
  auto spec = build_posterior(options.kind, priors, options.data, options.cov, options.columns);
  const double load_seconds = seconds_since(t_load);

  const auto t_sample = std::chrono::steady_clock::now();
  ChainSet chains = run_chains(*spec, options.sampler);
  const double sample_seconds = seconds_since(t_sample);

  FitOutcome outcome;
  outcome.dir = out;
  outcome.warnings = chains.warnings();

  const fs::path stage =
      out.parent_path() / ("." + out.filename().string() + ".partial");
  try {
    fs::remove_all(stage);
    fs::create_directories(stage);

    KeyValues meta;
    meta["model"] = std::string(to_string(options.kind));
    meta["seed"] = std::to_string(options.sampler.seed);
    meta["data_checksum"] = file_checksum(options.data);
    meta["cov_checksum"] = file_checksum(options.cov);
    meta["n_points"] = std::to_string(spec->data().size());
    meta["log_det_t"] = full(spec->factor().log_det_t());
    meta["format_version"] = "1";
    meta["created_utc"] = utc_timestamp();
    meta["time.load_seconds"] = full(load_seconds);
    meta["time.sampling_seconds"] = full(sample_seconds);

    for (std::size_t k = 0; k < chains.num_chains(); ++k) {
      const ChainDraws& c = chains.chains[k];
      const fs::path file = stage / chain_file(k);
      write_chain_csv(file, chains.names, c);
      const std::string key = "chain_" + std::to_string(k);
      meta[key + ".checksum"] = file_checksum(file);
      meta[key + ".step_size"] = full(c.step_size);
      std::string inv;
      for (Eigen::Index j = 0; j < c.mass.inv_diag.size(); ++j)
        inv += (j ? " " : "") + full(c.mass.inv_diag[j]);
      meta[key + ".inv_metric"] = inv;
      meta[key + ".divergences"] = std::to_string(c.divergences());
      meta[key + ".mean_accept_stat"] = full(c.mean_accept_stat());
    }

    const std::size_t entries = chains.total_draws() * spec->data().size();
    if (entries <= kMaxStoredPointwise) {
      const fs::path file = stage / "pointwise_loglik.bin";
      write_pointwise(file, pointwise_loglik(*spec, chains));
      meta["pointwise.checksum"] = file_checksum(file);
    }

    outcome.summary = summarize(chains);
    std::vector<std::string> info_warnings;
    const std::vector<InfoRow> info = information_table(chains, options.kind, priors, &info_warnings);
    for (const auto& row : outcome.summary) {
      if (is_undefined(row.rhat) || row.rhat > 1.01)
        outcome.warnings.push_back("R-hat for " + row.parameter + " is " + full(row.rhat));
    }
    outcome.warnings.insert(outcome.warnings.end(), info_warnings.begin(), info_warnings.end());

    write_stream(stage / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, outcome.summary); });
    write_text(stage / "summary.txt", format_summary_table(outcome.summary));
    write_stream(stage / "info.csv", [&](std::ostream& o) { write_info_csv(o, info); });
    write_text(stage / "info.txt", format_info_table(info));

    for (std::size_t i = 0; i < outcome.warnings.size(); ++i)
      meta["warning." + std::to_string(i)] = outcome.warnings[i];
    meta["time.total_seconds"] = full(seconds_since(t_start));
    write_key_values(stage / "config.txt", config_entries(options, priors));
    write_key_values(stage / "metadata.txt", meta);

    if (fs::exists(out)) fs::remove(out);  // empty directory, checked above
    if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
    fs::rename(stage, out);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(stage, ec);
    throw;
  }
  return outcome;
}

LoadedRun load_run(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("cli", "run directory " + dir.string() + " not found");
  LoadedRun run;
  run.dir = dir;
  run.config = read_key_values(dir / "config.txt");
  run.metadata = read_key_values(dir / "metadata.txt");
  const fs::path cfg = dir / "config.txt";

  run.kind = parse_model_kind(require(run.config, "model", cfg));
  run.data = require(run.config, "data", cfg);
  run.cov = require(run.config, "cov", cfg);
  run.columns.redshift = require(run.config, "column.redshift", cfg);
  run.columns.modulus = require(run.config, "column.modulus", cfg);
  run.columns.error = require(run.config, "column.error", cfg);
  run.columns.id = run.config.count("column.id") ? run.config.at("column.id") : "";
  run.sampler.chains = to_unsigned(require(run.config, "chains", cfg), "chains");
  run.sampler.warmup = to_unsigned(require(run.config, "warmup", cfg), "warmup");
  run.sampler.draws = to_unsigned(require(run.config, "draws", cfg), "draws");
  run.sampler.seed = to_unsigned(require(run.config, "seed", cfg), "seed");
  run.sampler.target_accept = to_double(require(run.config, "target_accept", cfg), "target_accept");
  run.sampler.max_tree_depth =
      static_cast<int>(to_unsigned(require(run.config, "max_tree_depth", cfg), "max_tree_depth"));
  for (const auto& [key, value] : run.config)
    if (key.rfind("prior.", 0) == 0) run.priors.set(key.substr(6), to_double(value, key));

  const fs::path meta = dir / "metadata.txt";
  run.data_checksum = require(run.metadata, "data_checksum", meta);
  if (!fs::exists(run.data)) throw Error("cli", "data file " + run.data.string() + " is missing");
  if (file_checksum(run.data) != run.data_checksum)
    throw Error("cli", "checksum mismatch: " + run.data.string() + " changed since the fit");
  if (file_checksum(run.cov) != require(run.metadata, "cov_checksum", meta))
    throw Error("cli", "checksum mismatch: " + run.cov.string() + " changed since the fit");

  run.spec = build_posterior(run.kind, run.priors, run.data, run.cov, run.columns);
  run.chains.names = run.spec->parameter_names();
  for (std::size_t k = 0; k < run.sampler.chains; ++k) {
    const fs::path file = dir / chain_file(k);
    const std::string key = "chain_" + std::to_string(k);
    if (!fs::exists(file)) throw Error("cli", file.string() + " is missing");
    if (file_checksum(file) != require(run.metadata, key + ".checksum", meta))
      throw Error("cli", "checksum mismatch: " + file.string() + " is corrupted or was modified");
    ChainDraws c = read_chain_csv(file, run.kind);
    if (run.metadata.count(key + ".step_size"))
      c.step_size = to_double(run.metadata.at(key + ".step_size"), key);
    run.chains.chains.push_back(std::move(c));
  }
  return run;
}

DiagnoseOutput diagnose_run(const LoadedRun& run) {
  DiagnoseOutput out;
  out.summary = summarize(run.chains);
  out.info = information_table(run.chains, run.kind, run.priors, &out.warnings);
  write_stream(run.dir / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, out.summary); });
  write_text(run.dir / "summary.txt", format_summary_table(out.summary));
  write_stream(run.dir / "info.csv", [&](std::ostream& o) { write_info_csv(o, out.info); });
  write_text(run.dir / "info.txt", format_info_table(out.info));
  return out;
}

PointwiseLogLik run_pointwise(const LoadedRun& run) {
  const fs::path file = run.dir / "pointwise_loglik.bin";
  if (fs::exists(file)) {
    const auto it = run.metadata.find("pointwise.checksum");
    if (it == run.metadata.end() || file_checksum(file) != it->second)
      throw Error("cli", "checksum mismatch: " + file.string() + " is corrupted or was modified");
    PointwiseLogLik pl = read_pointwise(file);
    if (pl.draws() != run.chains.total_draws() || pl.points() != run.spec->data().size())
      throw Error("cli", file.string() + " does not match the run");
    return pl;
  }
  return pointwise_loglik(*run.spec, run.chains);
}

WaicReport run_waic(const LoadedRun& run) { return waic(run_pointwise(run), run_label(run)); }

std::vector<WaicComparisonRow> compare_runs(const std::vector<LoadedRun>& runs) {
  if (runs.empty()) throw InvalidArgument("cli", "no runs given");
  for (const auto& r : runs)
    if (r.data_checksum != runs.front().data_checksum)
      throw InvalidArgument("cli", "runs were fitted to different data (" + runs.front().dir.string() +
                                       " vs " + r.dir.string() + ")");
  std::vector<WaicReport> reports;
  std::set<std::string> seen;
  for (const auto& r : runs) {
    WaicReport rep = run_waic(r);
    if (!seen.insert(rep.name).second) rep.name += " (" + r.dir.filename().string() + ")";
    reports.push_back(std::move(rep));
  }
  return compare_waic(reports);
}

EvidenceEstimate run_evidence(const LoadedRun& run, std::uint64_t seed,
                              const BridgeOptions& options) {
  Rng rng = make_chain_rng(seed, 0xB41D);
  return bridge_evidence(*run.spec, run.chains, rng, options);
}

RedshiftGrid parse_grid(const std::string& spec) {
  const auto a = spec.find(':');
  const auto b = a == std::string::npos ? a : spec.find(':', a + 1);
  if (b == std::string::npos) throw InvalidArgument("cli", "grid must look like lo:hi:count");
  const double lo = to_double(spec.substr(0, a), "grid");
  const double hi = to_double(spec.substr(a + 1, b - a - 1), "grid");
  const auto count = static_cast<std::size_t>(to_unsigned(spec.substr(b + 1), "grid"));
  if (!(lo > 0)) throw InvalidArgument("cli", "grid redshifts must be positive");
  return RedshiftGrid::linspace(lo, hi, count);
}

std::vector<double> parse_levels(const std::string& spec) {
  std::vector<double> levels;
  std::stringstream ss(spec);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const double v = to_double(cell, "levels");
    if (!(v > 0 && v < 1)) throw InvalidArgument("cli", "levels must lie in (0, 1)");
    levels.push_back(v);
  }
  if (levels.empty()) throw InvalidArgument("cli", "no levels given");
  return levels;
}

CosmoParams parse_params(ModelKind kind, const std::string& spec) {
  const std::vector<std::string> names = parameter_names(kind);
  Eigen::VectorXd v = CosmoParams{}.to_vector(kind);
  std::stringstream ss(spec);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto eq = cell.find('=');
    if (eq == std::string::npos) throw InvalidArgument("cli", "parameters must look like name=value");
    const std::string key = trim(cell.substr(0, eq));
    std::size_t j = 0;
    while (j < names.size() && names[j] != key) ++j;
    if (j == names.size())
      throw InvalidArgument("cli", "unknown parameter '" + key + "' for " +
                                       std::string(to_string(kind)));
    v[static_cast<Eigen::Index>(j)] = to_double(cell.substr(eq + 1), key);
  }
  CosmoParams p = CosmoParams::from_vector(kind, v);
  p.validate(kind);
  return p;
}

std::string run_label(const LoadedRun& run) { return std::string(to_string(run.kind)); }

}  // namespace cosmofit
