// Command-line front end: fit, diagnose, compare-waic, evidence, bf, predict, simulate.
// Exit codes: 0 success, 1 error, 2 success with quality warnings.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cosmofit/error.hpp"
#include "cosmofit/run.hpp"
#include "cosmofit/whitening.hpp"

using namespace cosmofit;

namespace {

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

template <class Fn>
void write_file(const fs::path& path, Fn&& fn) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cli", "cannot write " + path.string());
  fn(out);
}

void add_column_flags(CLI::App* cmd, ColumnMapping& columns) {
  cmd->add_option("--z-column", columns.redshift, "Redshift column")->capture_default_str();
  cmd->add_option("--mu-column", columns.modulus, "Distance modulus column")->capture_default_str();
  cmd->add_option("--err-column", columns.error, "Modulus error column")->capture_default_str();
  cmd->add_option("--id-column", columns.id, "Identifier column (empty: row numbers)")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian fits of flat FLRW models to supernova distance moduli"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "cosmofit 1.0");

  // fit
  FitOptions fit;
  std::string model = "lcdm";
  std::string prior_file;
  std::string out_dir;
  auto* fit_cmd = app.add_subcommand("fit", "Sample a posterior and write a run directory");
  fit_cmd->add_option("--model", model, "lcdm, wcdm or cpl")->capture_default_str();
  fit_cmd->add_option("--data", fit.data, "Catalog CSV")->required();
  fit_cmd->add_option("--cov", fit.cov, "Systematic covariance (n, then n*n entries)")->required();
  fit_cmd->add_option("--chains", fit.sampler.chains)->capture_default_str()->check(CLI::PositiveNumber);
  fit_cmd->add_option("--warmup", fit.sampler.warmup)->capture_default_str();
  fit_cmd->add_option("--draws", fit.sampler.draws)->capture_default_str()->check(CLI::PositiveNumber);
  fit_cmd->add_option("--seed", fit.sampler.seed)->capture_default_str();
  fit_cmd->add_option("--target-accept", fit.sampler.target_accept)
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  fit_cmd->add_option("--max-depth", fit.sampler.max_tree_depth)
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  fit_cmd->add_option("--prior-file", prior_file, "key = value prior overrides");
  fit_cmd->add_option("--out", out_dir, std::string("Run directory (default: $") + kOutputRootEnv +
                                            "/<model>-seed<seed>)");
  fit_cmd->add_flag("--serial", "Run chains one after another");
  add_column_flags(fit_cmd, fit.columns);

  // diagnose
  std::string run_dir;
  auto* diag_cmd = app.add_subcommand("diagnose", "Summary and prior-posterior tables of a run");
  diag_cmd->add_option("run", run_dir)->required();

  // compare-waic
  std::vector<std::string> runs;
  std::string table_out;
  auto* waic_cmd = app.add_subcommand("compare-waic", "WAIC comparison across runs");
  waic_cmd->add_option("runs", runs)->required();
  waic_cmd->add_option("--out", table_out, "CSV output path");

  // evidence
  std::uint64_t bridge_seed = 0;
  bool bridge_seed_set = false;
  auto* ev_cmd = app.add_subcommand("evidence", "Bridge-sampling marginal likelihood of runs");
  ev_cmd->add_option("runs", runs)->required();
  ev_cmd->add_option("--seed", bridge_seed, "Proposal seed (default: the run seed)");
  ev_cmd->add_option("--out", table_out, "CSV output path");

  // bf
  auto* bf_cmd = app.add_subcommand("bf", "Bayes factor between two runs");
  bf_cmd->add_option("runs", runs)->required()->expected(2);
  bf_cmd->add_option("--seed", bridge_seed, "Proposal seed (default: the run seeds)");
  bf_cmd->add_option("--out", table_out, "CSV output path");

  // predict
  std::string grid_spec = "0.01:1.4:200";
  std::string level_spec = "0.68,0.95";
  std::string point = "mean";
  auto* pred_cmd = app.add_subcommand("predict", "Hubble-diagram bands and residual tables");
  pred_cmd->add_option("runs", runs)->required();
  pred_cmd->add_option("--grid", grid_spec, "lo:hi:count")->capture_default_str();
  pred_cmd->add_option("--levels", level_spec)->capture_default_str();
  pred_cmd->add_option("--point", point, "mean or median")->capture_default_str();
  pred_cmd->add_option("--out", out_dir, "Output directory (default: <run>/predict)");

  // simulate
  std::string params_spec;
  fs::path template_path, cov_path, sim_out;
  std::uint64_t sim_seed = 1;
  bool zero_noise = false;
  ColumnMapping sim_columns;
  auto* sim_cmd = app.add_subcommand("simulate", "Synthetic catalog at fixed parameters");
  sim_cmd->add_option("--model", model)->capture_default_str();
  sim_cmd->add_option("--params", params_spec, "e.g. H0=70,Omega_m=0.3");
  sim_cmd->add_option("--data-template", template_path)->required();
  sim_cmd->add_option("--cov", cov_path, "Systematic covariance of the template")->required();
  sim_cmd->add_option("--seed", sim_seed)->capture_default_str();
  sim_cmd->add_flag("--zero-noise", zero_noise, "Write mu_model without noise");
  sim_cmd->add_option("--out", sim_out, "Output catalog CSV")->required();
  add_column_flags(sim_cmd, sim_columns);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }
  bridge_seed_set = (ev_cmd->count("--seed") + bf_cmd->count("--seed")) > 0;

  try {
    if (*fit_cmd) {
      fit.kind = parse_model_kind(model);
      if (!prior_file.empty()) fit.prior_file = prior_file;
      fit.out = out_dir;
      fit.sampler.parallel = fit_cmd->count("--serial") == 0;
      const FitOutcome res = run_fit(fit);
      std::cout << format_summary_table(res.summary);
      std::cout << "run written to " << res.dir.string() << '\n';
      print_warnings(res.warnings);
      return res.exit_code();
    }

    if (*diag_cmd) {
      const LoadedRun run = load_run(run_dir);
      const DiagnoseOutput d = diagnose_run(run);
      std::cout << format_summary_table(d.summary) << '\n' << format_info_table(d.info);
      print_warnings(d.warnings);
      return d.warnings.empty() ? kExitOk : kExitDegraded;
    }

    if (*waic_cmd) {
      std::vector<LoadedRun> loaded;
      for (const auto& r : runs) loaded.push_back(load_run(r));
      const auto rows = compare_runs(loaded);
      std::cout << format_waic_table(rows);
      if (!table_out.empty()) write_file(table_out, [&](std::ostream& o) { write_waic_csv(o, rows); });
      bool warn = false;
      for (const auto& row : rows) warn = warn || row.warning;
      if (warn) print_warnings({"pointwise p_waic above 0.4 for some points"});
      return warn ? kExitDegraded : kExitOk;
    }

    if (*ev_cmd || *bf_cmd) {
      std::vector<std::string> names;
      std::vector<EvidenceEstimate> estimates;
      bool degraded = false;
      for (const auto& r : runs) {
        const LoadedRun run = load_run(r);
        const std::uint64_t seed = bridge_seed_set ? bridge_seed : run.sampler.seed;
        EvidenceEstimate e = run_evidence(run, seed);
        print_warnings(e.warnings);
        degraded = degraded || !e.converged;
        names.push_back(run_label(run));
        estimates.push_back(std::move(e));
      }
      std::cout << format_evidence_table(names, estimates);
      if (*bf_cmd) {
        const BayesFactor bf = bayes_factor(estimates[0], estimates[1]);
        std::cout << "log BF(" << names[0] << ", " << names[1] << ") = " << bf.log_bf
                  << "  BF = " << bf.bf << (bf.degraded ? "  [degraded: unconverged estimate]" : "")
                  << '\n';
      }
      if (!table_out.empty())
        write_file(table_out, [&](std::ostream& o) {
          write_evidence_csv(o, names, estimates);
          if (*bf_cmd) {
            const BayesFactor bf = bayes_factor(estimates[0], estimates[1]);
            o << "\nmodel_1,model_2,log_bf,bf,degraded\n"
              << names[0] << ',' << names[1] << ',' << bf.log_bf << ',' << bf.bf << ','
              << (bf.degraded ? "true" : "false") << '\n';
          }
        });
      return degraded ? kExitDegraded : kExitOk;
    }

    if (*pred_cmd) {
      const RedshiftGrid grid = parse_grid(grid_spec);
      const std::vector<double> levels = parse_levels(level_spec);
      if (point != "mean" && point != "median")
        throw InvalidArgument("cli", "--point must be mean or median");
      std::vector<HubbleBands> all;
      std::vector<std::string> labels;
      for (const auto& r : runs) {
        const LoadedRun run = load_run(r);
        const fs::path dest = out_dir.empty() ? run.dir / "predict" : fs::path(out_dir);
        fs::create_directories(dest);
        const std::string label = runs.size() > 1 ? run_label(run) + "_" : "";
        const HubbleBands bands = hubble_bands(run.kind, run.chains, grid, levels);
        const ResidualReport res = residual_report(
            *run.spec, run.chains, point == "mean" ? PointEstimate::Mean : PointEstimate::Median);
        write_file(dest / (label + "bands.csv"), [&](std::ostream& o) { write_bands_csv(o, bands); });
        write_file(dest / (label + "residuals.csv"),
                   [&](std::ostream& o) { write_residuals_csv(o, res); });
        write_file(dest / (label + "qq.csv"), [&](std::ostream& o) { write_qq_csv(o, res); });
        std::cout << run_label(run) << ": whitened residual mean " << res.whitened_mean
                  << ", variance " << res.whitened_var << ", z-trend slope " << res.trend_slope
                  << " +/- " << res.trend_slope_se << '\n';
        all.push_back(bands);
        labels.push_back(run_label(run));
      }
      if (all.size() > 1) {
        const fs::path dest = out_dir.empty() ? fs::path(runs.front()) / "predict" : fs::path(out_dir);
        write_file(dest / "overlap.csv", [&](std::ostream& o) {
          o << "model_a,model_b,level,fraction_overlapping\n";
          for (std::size_t a = 0; a < all.size(); ++a)
            for (std::size_t b = a + 1; b < all.size(); ++b)
              for (double level : levels) {
                const double f = band_overlap(all[a], all[b], level);
                o << labels[a] << ',' << labels[b] << ',' << level << ',' << f << '\n';
                std::cout << labels[a] << " vs " << labels[b] << " at " << level
                          << ": bands overlap at " << 100.0 * f << "% of grid points\n";
              }
        });
      }
      return kExitOk;
    }

    if (*sim_cmd) {
      const ModelKind kind = parse_model_kind(model);
      const CosmoParams p = parse_params(kind, params_spec);
      const SupernovaCatalog tmpl = load_catalog(template_path, sim_columns);
      const TotalCovariance total = assemble_total_covariance(tmpl, load_covariance(cov_path));
      const CholeskyFactor factor = cholesky_factorize(total);
      Rng rng = make_chain_rng(sim_seed, 0);
      const SupernovaCatalog cat = simulate_catalog(kind, p, tmpl, factor, rng, zero_noise);
      write_catalog(sim_out, cat, sim_columns);
      std::cout << "wrote " << cat.size() << " simulated points to " << sim_out.string() << '\n';
      return kExitOk;
    }
  } catch (const Error& e) {
    std::cerr << "error [" << e.module() << "]: " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitOk;
}
