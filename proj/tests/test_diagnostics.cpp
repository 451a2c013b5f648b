#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "cosmofit/diagnostics.hpp"
#include "cosmofit/error.hpp"

using namespace cosmofit;

namespace {

ChainValues iid_normal(std::size_t chains, std::size_t n, std::uint64_t seed, double offset_step = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ChainValues out(chains);
  for (std::size_t c = 0; c < chains; ++c)
    for (std::size_t i = 0; i < n; ++i) out[c].push_back(normal(rng) + offset_step * static_cast<double>(c));
  return out;
}

ChainValues ar1(std::size_t chains, std::size_t n, double rho, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ChainValues out(chains);
  const double innov = std::sqrt(1.0 - rho * rho);
  for (auto& c : out) {
    double x = normal(rng);
    for (std::size_t i = 0; i < n; ++i) {
      x = rho * x + innov * normal(rng);
      c.push_back(x);
    }
  }
  return out;
}

std::vector<double> flatten(const ChainValues& v) {
  std::vector<double> out;
  for (const auto& c : v) out.insert(out.end(), c.begin(), c.end());
  return out;
}

// Autocorrelation-time oracle for AR(1): tau = (1 + rho) / (1 - rho).
double ar1_ess(double n, double rho) { return n * (1.0 - rho) / (1.0 + rho); }

}  // namespace

TEST_SUITE("diagnostics") {
  TEST_CASE("R-hat separates mixed from offset chains") {
    const ChainValues good = iid_normal(4, 1000, 1);
    const double r = rhat(good);
    CHECK(r > 0.99);
    CHECK(r < 1.01);
    CHECK(rhat(iid_normal(4, 1000, 2, 2.0)) > 1.1);
  }

  TEST_CASE("R-hat detects a drifting chain through splitting") {
    ChainValues drift(2);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> normal(0.0, 0.1);
    for (auto& c : drift)
      for (int i = 0; i < 1000; ++i) c.push_back(i / 500.0 + normal(rng));
    CHECK(rhat(drift) > 1.1);
  }

  TEST_CASE("ESS of independent draws is close to the draw count") {
    const ChainValues v = iid_normal(4, 2500, 3);
    CHECK(std::abs(ess(v, EssKind::Bulk) / 10000.0 - 1.0) < 0.15);
    CHECK(std::abs(ess_mean(v) / 10000.0 - 1.0) < 0.15);
    CHECK(ess(v, EssKind::Tail) > 0.7 * 10000.0);
  }

  TEST_CASE("ESS of an AR(1) chain follows its autocorrelation time") {
    const double rho = 0.9;
    const ChainValues v = ar1(4, 25000, rho, 5);
    const double oracle = ar1_ess(100000.0, rho);
    CHECK(std::abs(ess(v, EssKind::Bulk) / oracle - 1.0) < 0.25);
    CHECK(std::abs(ess_raw(v) / oracle - 1.0) < 0.25);
  }

  TEST_CASE("constant chains are undefined, not errors") {
    const ChainValues flat(4, std::vector<double>(100, 3.0));
    CHECK(is_undefined(rhat(flat)));
    CHECK(is_undefined(ess(flat, EssKind::Bulk)));
    const SummaryRow row = summarize_parameter("c", flat);
    CHECK(row.mean == 3.0);
    CHECK(row.sd == 0.0);
    CHECK(is_undefined(row.rhat));
  }

  TEST_CASE("MCSE of the mean is sd over root ESS") {
    const ChainValues v = iid_normal(4, 2500, 6);
    CHECK(mcse(v, McseKind::Mean) == doctest::Approx(0.01).epsilon(0.1));
    const double sd_err = mcse(v, McseKind::Sd);
    CHECK(sd_err > 0.004);
    CHECK(sd_err < 0.011);
  }

  TEST_CASE("HDI of a standard normal") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> x(200000);
    for (auto& v : x) v = normal(rng);
    const auto [lo, hi] = hdi(x, 0.94);
    CHECK(lo == doctest::Approx(-1.8807936081512509).epsilon(0.05 / 1.88));
    CHECK(hi == doctest::Approx(1.8807936081512509).epsilon(0.05 / 1.88));
    std::size_t inside = 0;
    for (double v : x) inside += (v >= lo && v <= hi);
    CHECK(static_cast<double>(inside) / x.size() >= 0.94);

    CHECK_THROWS_AS(hdi({1, 2, 3}, 0.94), InvalidArgument);
  }

  TEST_CASE("HDI of a skewed sample is shorter than the central interval") {
    std::mt19937_64 rng(8);
    std::exponential_distribution<double> ex(1.0);
    std::vector<double> x(50000);
    for (auto& v : x) v = ex(rng);
    const auto [lo, hi] = hdi(x, 0.9);
    CHECK(lo < 0.01);
    CHECK(hi - lo < quantile(x, 0.95) - quantile(x, 0.05));
    CHECK(hi == doctest::Approx(std::log(10.0)).epsilon(0.03));
  }

  TEST_CASE("kernel density estimate") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> x(20000);
    for (auto& v : x) v = normal(rng);
    std::vector<double> grid;
    for (int i = 0; i <= 1200; ++i) grid.push_back(-6.0 + 0.01 * i);
    const auto f = kde_density(x, grid);
    CHECK(f[600] == doctest::Approx(1.0 / std::sqrt(2.0 * M_PI)).epsilon(0.03));
    double area = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i) area += 0.005 * (f[i] + f[i - 1]);
    CHECK(area == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(scott_bandwidth(x) == doctest::Approx(std::pow(20000.0, -0.2)).epsilon(0.03));
    CHECK_THROWS_AS(scott_bandwidth(std::vector<double>(10, 1.0)), InvalidArgument);
  }

  TEST_CASE("KL divergence against closed forms") {
    std::mt19937_64 rng(10);
    std::normal_distribution<double> half(0.0, 0.5), unit(0.0, 1.0);
    auto prior = [](double v) { return std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI); };
    std::vector<double> narrow(40000), same(40000);
    for (auto& v : narrow) v = half(rng);
    for (auto& v : same) v = unit(rng);
    // KL(N(0, 1/4) || N(0, 1)) = ln 2 + 1/8 - 1/2
    CHECK(std::abs(kl_divergence(narrow, prior) - 0.3181471805599453) < 0.02);
    CHECK(std::abs(kl_divergence(same, prior)) < 0.01);

    auto uniform = [](double v) { return v > -0.5 && v < 0.5 ? 1.0 : 0.0; };
    CHECK(std::isinf(kl_divergence(same, uniform)));
  }

  TEST_CASE("shrinkage") {
    CHECK(shrinkage(42.27, 0.35) == doctest::Approx(0.99172).epsilon(1e-4));
    CHECK(shrinkage(1.0, 1.0) == 0.0);
    CHECK_THROWS_AS(shrinkage(0.0, 1.0), InvalidArgument);
  }

  TEST_CASE("quantile interpolates between order statistics") {
    CHECK(quantile({3, 1, 2, 4}, 0.5) == 2.5);
    CHECK(quantile({3, 1, 2, 4}, 0.0) == 1.0);
    CHECK(quantile({3, 1, 2, 4}, 1.0) == 4.0);
  }

  TEST_CASE("summary row and CSV layout") {
    const ChainValues v = iid_normal(4, 500, 11);
    const SummaryRow row = summarize_parameter("H0", v);
    const auto all = flatten(v);
    double mean = 0.0;
    for (double x : all) mean += x;
    mean /= static_cast<double>(all.size());
    CHECK(row.mean == doctest::Approx(mean));
    CHECK(row.hdi_low < row.mean);
    CHECK(row.hdi_high > row.mean);
    std::ostringstream os;
    write_summary_csv(os, {row});
    const std::string text = os.str();
    CHECK(text.rfind("parameter,mean,sd,hdi_3%,hdi_97%,mcse_mean,mcse_sd,ess_bulk,ess_tail,r_hat\n", 0) == 0);
    CHECK(text.find("\nH0,") != std::string::npos);
    CHECK(format_summary_table({row}).find("H0") != std::string::npos);
  }
}
