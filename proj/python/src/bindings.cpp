#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ascfam/error.hpp"
#include "ascfam/estimate.hpp"
#include "ascfam/genetics.hpp"
#include "ascfam/io.hpp"
#include "ascfam/mvnorm.hpp"
#include "ascfam/pedigree.hpp"
#include "ascfam/simulate.hpp"

namespace py = pybind11;
using namespace ascfam;

namespace {

GeneticMode parse_mode(const std::string& mode) {
  if (mode == "snp") return GeneticMode::snp;
  if (mode == "score") return GeneticMode::score;
  throw InputError("mode must be 'snp' or 'score'");
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string fit_json(const std::string& path, const std::string& mode, std::optional<double> maf,
                     std::optional<std::vector<std::string>> covariates, bool free_delta,
                     bool naive, bool null, int threads, int max_iterations) {
  FitOptions options;
  options.mode = parse_mode(mode);
  options.maf = maf;
  options.delta_constrained = !free_delta;
  options.threads = threads;
  options.max_iterations = max_iterations;
  options.validate();

  py::gil_scoped_release release;
  Cohort cohort = read_pedigree(path, options.mode);
  if (covariates) cohort = select_covariates(cohort, *covariates);
  const PreparedCohort data = prepare(cohort, options);
  FitOptions null_options = options;
  null_options.fixed_beta1 = 0.0;
  null_options.compute_se = false;

  FitResult full;
  std::optional<LrtResult> test;
  if (naive) {
    full = fit_naive(data, options);
    if (null) test = lrt(full, fit_naive(data, null_options), 1);
  } else {
    full = fit(data, options);
    if (null) {
      Theta start = full.theta_hat;
      start.beta1 = 0.0;
      test = lrt(full, fit(data, null_options, start), 1);
    }
  }
  io::Json report = io::fit_report(full, test);
  report["version"] = io::version();
  return report.dump();
}

py::tuple simulate_csv(const std::string& config_json) {
  const Scenario s = io::scenario_from_json(io::Json::parse(config_json));
  ScenarioResult result;
  {
    py::gil_scoped_release release;
    result = run_scenario(s);
  }
  std::ostringstream summary;
  io::write_summary_csv(summary, result.summary);
  std::ostringstream reps;
  io::write_replicates_csv(reps, s, result.replicates);
  return py::make_tuple(summary.str(), reps.str(), io::scenario_to_json(s).dump());
}

std::string generate_csv(const std::string& config_json, int replicate) {
  const Scenario s = io::scenario_from_json(io::Json::parse(config_json));
  if (replicate < 0) throw InputError("replicate must be non-negative");
  std::mt19937_64 rng = replicate_rng(s.master_seed, replicate);
  std::ostringstream out;
  write_pedigree(out, generate_cohort(s, rng).cohort);
  return out.str();
}

py::tuple rectangle_prob(const std::vector<double>& mean, const std::vector<std::vector<double>>& cov,
                         std::optional<std::vector<double>> lower,
                         std::optional<std::vector<double>> upper, double accuracy,
                         std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(mean.size());
  if (n == 0) throw InputError("mean is empty");
  mvnorm::Gaussian g;
  g.mean = to_eigen(mean);
  g.cov.resize(n, n);
  if (static_cast<Eigen::Index>(cov.size()) != n) throw InputError("cov has the wrong number of rows");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(cov[i].size()) != n) throw InputError("cov row has the wrong length");
    for (Eigen::Index j = 0; j < n; ++j) g.cov(i, j) = cov[i][j];
  }
  mvnorm::Rectangle r = mvnorm::Rectangle::whole_space(n);
  if (lower) r.lower = to_eigen(*lower);
  if (upper) r.upper = to_eigen(*upper);
  mvnorm::QmcOptions qmc;
  qmc.accuracy = accuracy;
  qmc.seed = seed;
  const auto p = mvnorm::rectangle_prob(g, r, qmc);
  return py::make_tuple(p.probability, p.error);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Compiled core of ascfam";
  m.attr("__version__") = io::version();

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("fit_json", &fit_json, py::arg("path"), py::arg("mode") = "snp",
        py::arg("maf") = py::none(), py::arg("covariates") = py::none(),
        py::arg("free_delta") = false, py::arg("naive") = false, py::arg("null") = false,
        py::arg("threads") = 1, py::arg("max_iterations") = 200);
  m.def("simulate_csv", &simulate_csv, py::arg("config_json"));
  m.def("generate_csv", &generate_csv, py::arg("config_json"), py::arg("replicate") = 0);
  m.def("rectangle_prob", &rectangle_prob, py::arg("mean"), py::arg("cov"),
        py::arg("lower") = py::none(), py::arg("upper") = py::none(),
        py::arg("accuracy") = 1e-6, py::arg("seed") = mvnorm::QmcOptions{}.seed);
  m.def("hwe_probs", &genetics::hwe_probs, py::arg("q"));
  m.def(
      "lrt",
      [](double full, double null, int df) {
        const LrtResult r = lrt(full, null, df);
        return py::make_tuple(r.statistic, r.p_value);
      },
      py::arg("loglik_full"), py::arg("loglik_null"), py::arg("df") = 1);
  m.def(
      "default_scenario_json", [] { return io::scenario_to_json(Scenario{}).dump(); });
}
