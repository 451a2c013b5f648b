#include <doctest.h>

#include <fstream>
#include <sstream>

#include "cosmofit/error.hpp"
#include "cosmofit/run.hpp"
#include "support.hpp"

using namespace cosmofit;

namespace {

struct Files {
  fs::path data;
  fs::path cov;
};

Files write_inputs(const fs::path& dir, std::size_t n, std::uint64_t seed) {
  const auto s = testing::make_synthetic(ModelKind::LCDM, CosmoParams{70.0, 0.3}, n, seed);
  Files f{dir / "data.csv", dir / "sys.txt"};
  write_catalog(f.data, *s.catalog);
  write_covariance(f.cov, s.sys);
  return f;
}

FitOptions small_fit(const Files& f, const fs::path& out, ModelKind kind = ModelKind::LCDM) {
  FitOptions o;
  o.kind = kind;
  o.data = f.data;
  o.cov = f.cov;
  o.out = out;
  o.sampler.chains = 2;
  o.sampler.warmup = 150;
  o.sampler.draws = 100;
  o.sampler.seed = 11;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("run") {
  TEST_CASE("key-value files round trip") {
    const auto dir = testing::scratch_dir("kv");
    KeyValues kv{{"model", "lcdm"}, {"seed", "7"}, {"prior.w_sd", "2"}};
    write_key_values(dir / "a.txt", kv);
    CHECK(read_key_values(dir / "a.txt") == kv);
  }

  TEST_CASE("fit writes a complete run directory that reloads") {
    const auto dir = testing::scratch_dir("fit");
    const Files f = write_inputs(dir, 40, 1);
    const FitOutcome out = run_fit(small_fit(f, dir / "run"));
    CHECK(out.dir == dir / "run");
    for (const char* name : {"config.txt", "metadata.txt", "chain_0.csv", "chain_1.csv", "summary.csv",
                             "summary.txt", "info.csv", "info.txt", "pointwise_loglik.bin"})
      CHECK_MESSAGE(fs::exists(out.dir / name), name);
    CHECK_FALSE(fs::exists(dir / ".run.partial"));
    CHECK(slurp(out.dir / "chain_0.csv").rfind(
              "H0,Omega_m,lp__,energy__,divergent__,treedepth__,accept_stat__,n_leapfrog__\n", 0) == 0);

    const LoadedRun run = load_run(out.dir);
    CHECK(run.kind == ModelKind::LCDM);
    CHECK(run.sampler.seed == 11);
    CHECK(run.chains.num_chains() == 2);
    CHECK(run.chains.draws_per_chain() == 100);
    CHECK(run.spec->data().size() == 40);
    // draws are written with full precision
    const Eigen::MatrixXd back = run.chains.pooled();
    const FitOutcome again = run_fit(small_fit(f, dir / "run2"));
    CHECK(load_run(again.dir).chains.pooled() == back);

    const PointwiseLogLik stored = run_pointwise(run);
    CHECK(stored.draws() == 200);
    CHECK(stored.points() == 40);
    const PointwiseLogLik fresh = pointwise_loglik(*run.spec, run.chains);
    CHECK((stored.ell - fresh.ell).cwiseAbs().maxCoeff() < 1e-12);

    const DiagnoseOutput d = diagnose_run(run);
    CHECK(d.summary.size() == 2);
    CHECK(d.info.size() == 2);
  }

  TEST_CASE("output directory rules") {
    const auto dir = testing::scratch_dir("fit_rules");
    const Files f = write_inputs(dir, 20, 2);
    fs::create_directories(dir / "busy");
    std::ofstream(dir / "busy" / "x") << "x";
    CHECK_THROWS_AS(run_fit(small_fit(f, dir / "busy")), Error);

    FitOptions bad = small_fit(f, dir / "never");
    bad.data = dir / "missing.csv";
    CHECK_THROWS(run_fit(bad));
    CHECK_FALSE(fs::exists(dir / "never"));
    CHECK_FALSE(fs::exists(dir / ".never.partial"));

    const fs::path def = default_run_dir(ModelKind::WCDM, 5);
    CHECK(def.filename() == "wcdm-seed5");
  }

  TEST_CASE("tampering is detected on reload") {
    const auto dir = testing::scratch_dir("fit_tamper");
    const Files f = write_inputs(dir, 20, 3);
    const FitOutcome out = run_fit(small_fit(f, dir / "run"));
    {
      std::string text = slurp(out.dir / "chain_1.csv");
      text[text.size() - 3] = text[text.size() - 3] == '1' ? '2' : '1';
      std::ofstream(out.dir / "chain_1.csv", std::ios::binary) << text;
    }
    CHECK_THROWS_WITH_AS(load_run(out.dir), doctest::Contains("checksum mismatch"), Error);

    const FitOutcome other = run_fit(small_fit(f, dir / "run_b"));
    std::ofstream(f.data, std::ios::app) << "extra,0.5,43.0,0.1\n";
    CHECK_THROWS_WITH_AS(load_run(other.dir), doctest::Contains("checksum mismatch"), Error);
  }

  TEST_CASE("WAIC comparison across runs") {
    const auto dir = testing::scratch_dir("fit_compare");
    const Files f = write_inputs(dir, 30, 4);
    const LoadedRun a = load_run(run_fit(small_fit(f, dir / "a")).dir);
    const LoadedRun b = load_run(run_fit(small_fit(f, dir / "b", ModelKind::WCDM)).dir);
    const auto rows = compare_runs({a, b});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].weight + rows[1].weight == doctest::Approx(1.0));

    fs::create_directories(dir / "other");
    const Files g = write_inputs(dir / "other", 30, 5);
    const LoadedRun c = load_run(run_fit(small_fit(g, dir / "c")).dir);
    CHECK_THROWS_AS(compare_runs({a, c}), InvalidArgument);
  }

  TEST_CASE("command-line value parsers") {
    const RedshiftGrid g = parse_grid("0.1:1.0:10");
    CHECK(g.size() == 10);
    CHECK(g.values().front() == doctest::Approx(0.1));
    CHECK(g.values().back() == doctest::Approx(1.0));
    CHECK_THROWS_AS(parse_grid("0:1:10"), InvalidArgument);
    CHECK_THROWS_AS(parse_grid("0.1:1"), InvalidArgument);
    CHECK(parse_levels("0.68,0.95") == std::vector<double>{0.68, 0.95});
    CHECK_THROWS_AS(parse_levels("1.5"), InvalidArgument);
    const CosmoParams p = parse_params(ModelKind::CPL, "H0=68,wa=-0.5");
    CHECK(p.h0 == 68.0);
    CHECK(p.wa == -0.5);
    CHECK_THROWS_AS(parse_params(ModelKind::LCDM, "w=-1"), InvalidArgument);
  }
}
