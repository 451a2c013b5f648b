#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cosmofit/cosmology.hpp"
#include "cosmofit/dataset.hpp"
#include "cosmofit/diagnostics.hpp"
#include "cosmofit/error.hpp"
#include "cosmofit/inference.hpp"
#include "cosmofit/predictive.hpp"
#include "cosmofit/run.hpp"
#include "cosmofit/sampler.hpp"
#include "cosmofit/selection.hpp"
#include "cosmofit/whitening.hpp"

namespace py = pybind11;
using namespace cosmofit;

namespace {

CosmoParams params_from(ModelKind kind, const std::vector<double>& v) {
  if (v.size() != dimension(kind))
    throw InvalidArgument("python", "expected " + std::to_string(dimension(kind)) + " parameters");
  return CosmoParams::from_vector(kind, Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()));
}

std::shared_ptr<PosteriorSpec> posterior_from_arrays(ModelKind kind, std::vector<double> z,
                                                     std::vector<double> mu,
                                                     std::vector<double> sigma,
                                                     const Eigen::MatrixXd& sys,
                                                     const PriorSpec& priors) {
  auto cat = std::make_shared<SupernovaCatalog>();
  cat->z = std::move(z);
  cat->mu_obs = std::move(mu);
  cat->sigma_mu = std::move(sigma);
  cat->validate();
  const TotalCovariance total = assemble_total_covariance(*cat, sys);
  auto factor = std::make_shared<CholeskyFactor>(cholesky_factorize(total));
  return std::make_shared<PosteriorSpec>(kind, priors, cat, factor);
}

// chains x draws x d
py::array_t<double> draws_array(const ChainSet& set) {
  const auto m = set.num_chains();
  const auto n = set.draws_per_chain();
  const auto d = set.num_params();
  py::array_t<double> out({m, n, d});
  auto a = out.mutable_unchecked<3>();
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        a(c, i, j) = set.chains[c].draws(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return out;
}

ChainValues chain_values(const py::array_t<double>& x) {
  auto a = x.unchecked<2>();
  ChainValues out(static_cast<std::size_t>(a.shape(0)));
  for (py::ssize_t c = 0; c < a.shape(0); ++c)
    for (py::ssize_t i = 0; i < a.shape(1); ++i) out[static_cast<std::size_t>(c)].push_back(a(c, i));
  return out;
}

py::dict summary_dict(const SummaryRow& r) {
  py::dict d;
  d["parameter"] = r.parameter;
  d["mean"] = r.mean;
  d["sd"] = r.sd;
  d["hdi_3%"] = r.hdi_low;
  d["hdi_97%"] = r.hdi_high;
  d["mcse_mean"] = r.mcse_mean;
  d["mcse_sd"] = r.mcse_sd;
  d["ess_bulk"] = r.ess_bulk;
  d["ess_tail"] = r.ess_tail;
  d["r_hat"] = r.rhat;
  return d;
}

}  // namespace

PYBIND11_MODULE(_cosmofit, m) {
  m.doc() = "Bayesian supernova cosmology: whitened likelihoods, NUTS, diagnostics, model selection";

  py::register_exception<Error>(m, "CosmofitError", PyExc_RuntimeError);

  py::enum_<ModelKind>(m, "Model")
      .value("LCDM", ModelKind::LCDM)
      .value("WCDM", ModelKind::WCDM)
      .value("CPL", ModelKind::CPL);
  m.def("parse_model", [](const std::string& s) { return parse_model_kind(s); });
  m.def("parameter_names", &parameter_names);

  m.def(
      "luminosity_distance",
      [](ModelKind kind, const std::vector<double>& params, std::vector<double> z) {
        return luminosity_distance(kind, params_from(kind, params), RedshiftGrid(std::move(z)));
      },
      py::arg("model"), py::arg("params"), py::arg("z"));
  m.def(
      "distance_modulus",
      [](ModelKind kind, const std::vector<double>& params, std::vector<double> z) {
        return distance_modulus(kind, params_from(kind, params), RedshiftGrid(std::move(z)));
      },
      py::arg("model"), py::arg("params"), py::arg("z"));
  m.def(
      "hubble_rate",
      [](ModelKind kind, const std::vector<double>& params, double z) {
        return hubble_rate(kind, params_from(kind, params), z);
      },
      py::arg("model"), py::arg("params"), py::arg("z"));

  py::class_<PriorSpec>(m, "Priors")
      .def(py::init<>())
      .def("set", &PriorSpec::set)
      .def("entries", &PriorSpec::entries)
      .def_static("from_file", &PriorSpec::from_file);

  py::class_<PosteriorSpec, std::shared_ptr<PosteriorSpec>>(m, "Posterior")
      .def(py::init(&posterior_from_arrays), py::arg("model"), py::arg("z"), py::arg("mu"),
           py::arg("sigma"), py::arg("sys_cov"), py::arg("priors") = PriorSpec{})
      .def_static(
          "from_files",
          [](ModelKind kind, const fs::path& data, const fs::path& cov, const PriorSpec& priors) {
            return build_posterior(kind, priors, data, cov);
          },
          py::arg("model"), py::arg("data"), py::arg("cov"), py::arg("priors") = PriorSpec{})
      .def_property_readonly("dim", &PosteriorSpec::dim)
      .def_property_readonly("parameter_names", &PosteriorSpec::parameter_names)
      .def_property_readonly("log_det_t", [](const PosteriorSpec& s) { return s.factor().log_det_t(); })
      .def("log_density", [](const PosteriorSpec& s, const Eigen::VectorXd& x) { return s.log_posterior(x); })
      .def("log_density_gradient",
           [](const PosteriorSpec& s, const Eigen::VectorXd& x) {
             Eigen::VectorXd g;
             const double lp = s.log_density_gradient(x, g);
             return py::make_tuple(lp, g);
           })
      .def("constrain", &PosteriorSpec::constrain)
      .def("unconstrain",
           [](const PosteriorSpec& s, const std::vector<double>& p) {
             return transform(s.kind(), params_from(s.kind(), p));
           })
      .def("pointwise_loglik", [](const PosteriorSpec& s, const std::vector<double>& p) {
        return s.pointwise_loglik(params_from(s.kind(), p)).ell;
      });

  py::class_<ChainSet>(m, "Chains")
      .def_readonly("names", &ChainSet::names)
      .def_property_readonly("draws", &draws_array)
      .def_property_readonly("num_chains", &ChainSet::num_chains)
      .def_property_readonly("step_sizes",
                             [](const ChainSet& s) {
                               std::vector<double> out;
                               for (const auto& c : s.chains) out.push_back(c.step_size);
                               return out;
                             })
      .def_property_readonly("divergences",
                             [](const ChainSet& s) {
                               std::size_t n = 0;
                               for (const auto& c : s.chains) n += c.divergences();
                               return n;
                             })
      .def("warnings", &ChainSet::warnings);

  m.def(
      "sample",
      [](const PosteriorSpec& post, std::size_t chains, std::size_t warmup, std::size_t draws,
         std::uint64_t seed, double target_accept, int max_tree_depth) {
        SamplerConfig cfg;
        cfg.chains = chains;
        cfg.warmup = warmup;
        cfg.draws = draws;
        cfg.seed = seed;
        cfg.target_accept = target_accept;
        cfg.max_tree_depth = max_tree_depth;
        py::gil_scoped_release release;
        return run_chains(post, cfg);
      },
      py::arg("posterior"), py::arg("chains") = 4, py::arg("warmup") = 1000,
      py::arg("draws") = 9000, py::arg("seed") = 1, py::arg("target_accept") = 0.8,
      py::arg("max_tree_depth") = 10);

  m.def("summarize", [](const ChainSet& s) {
    py::list rows;
    for (const auto& r : summarize(s)) rows.append(summary_dict(r));
    return rows;
  });
  m.def("rhat", [](const py::array_t<double>& x) { return rhat(chain_values(x)); },
        "R-hat of a (chains, draws) array");
  m.def(
      "ess",
      [](const py::array_t<double>& x, const std::string& kind) {
        return ess(chain_values(x), kind == "tail" ? EssKind::Tail : EssKind::Bulk);
      },
      py::arg("x"), py::arg("kind") = "bulk");
  m.def("hdi", &hdi, py::arg("draws"), py::arg("mass") = 0.94);
  m.def("kde_density", &kde_density);
  m.def("shrinkage", &shrinkage);

  m.def(
      "waic",
      [](const Eigen::MatrixXd& ell) {
        PointwiseLogLik pl;
        pl.ell = ell;
        const WaicReport r = waic(pl);
        py::dict d;
        d["lppd"] = r.lppd;
        d["p_waic"] = r.p_waic;
        d["elpd"] = r.elpd;
        d["se"] = r.se;
        d["high_variance_points"] = r.high_variance_points;
        return d;
      },
      "WAIC of a (draws, points) pointwise log-likelihood matrix");
  m.def(
      "bridge_evidence",
      [](const PosteriorSpec& post, const ChainSet& chains, std::uint64_t seed) {
        Rng rng = make_chain_rng(seed, 0xB41D);
        const EvidenceEstimate e = bridge_evidence(post, chains, rng);
        py::dict d;
        d["log_marginal"] = e.log_marginal;
        d["relative_error"] = e.relative_error;
        d["iterations"] = e.iterations;
        d["converged"] = e.converged;
        return d;
      },
      py::arg("posterior"), py::arg("chains"), py::arg("seed") = 1);

  m.def(
      "fit",
      [](const std::string& model, const fs::path& data, const fs::path& cov, const fs::path& out,
         std::size_t chains, std::size_t warmup, std::size_t draws, std::uint64_t seed) {
        FitOptions o;
        o.kind = parse_model_kind(model);
        o.data = data;
        o.cov = cov;
        o.out = out;
        o.sampler.chains = chains;
        o.sampler.warmup = warmup;
        o.sampler.draws = draws;
        o.sampler.seed = seed;
        FitOutcome res;
        {
          py::gil_scoped_release release;
          res = run_fit(o);
        }
        py::dict d;
        d["dir"] = res.dir;
        py::list rows;
        for (const auto& r : res.summary) rows.append(summary_dict(r));
        d["summary"] = rows;
        d["warnings"] = res.warnings;
        return d;
      },
      py::arg("model"), py::arg("data"), py::arg("cov"), py::arg("out"), py::arg("chains") = 4,
      py::arg("warmup") = 1000, py::arg("draws") = 9000, py::arg("seed") = 1);
}
