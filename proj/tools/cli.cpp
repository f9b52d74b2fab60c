#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ascfam/error.hpp"
#include "ascfam/estimate.hpp"
#include "ascfam/io.hpp"
#include "ascfam/mvnorm.hpp"
#include "ascfam/parallel.hpp"
#include "ascfam/pedigree.hpp"
#include "ascfam/simulate.hpp"

namespace ascfam::cli {
namespace {

using io::Json;

struct FitArgs {
  std::string data;
  std::string mode = "snp";
  std::optional<double> maf;
  bool maf_from_controls = false;
  std::vector<std::string> covariates;
  bool free_delta = false;
  bool naive = false;
  bool null = false;
  std::uint64_t seed = 0;
  int threads = 0;
  int max_iterations = 200;
  double grad_tolerance = 1e-3;
  std::string out;
};

struct SimulateArgs {
  std::string config;
  std::string out_dir;
  std::optional<int> threads;
};

struct GenerateArgs {
  std::string config;
  int replicate = 0;
  std::string out;
};

struct MvnArgs {
  std::string mean;
  std::string cov;
  std::string lower;
  std::string upper;
  double accuracy = 1e-6;
  std::uint64_t seed = mvnorm::QmcOptions{}.seed;
};

class Log {
 public:
  explicit Log(std::ostream& err) : err_(err) {}
  void operator()(const std::string& line) const { err_ << "[ascfam] " << line << '\n'; }

 private:
  std::ostream& err_;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw InputError("failed writing '" + path.string() + "'");
}

double parse_number(const std::string& token) {
  std::string t;
  for (char c : token) {
    if (c != ' ' && c != '\t') t += c;
  }
  if (t.empty()) throw InputError("empty number");
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || std::isnan(v)) {
    throw InputError("malformed number '" + token + "'");
  }
  return v;
}

std::vector<double> parse_list(const std::string& text, char sep = ',') {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, sep)) out.push_back(parse_number(token));
  return out;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

GeneticMode parse_mode(const std::string& mode) {
  if (mode == "snp") return GeneticMode::snp;
  if (mode == "score") return GeneticMode::score;
  throw InputError("--mode must be snp or score");
}

int cmd_fit(const FitArgs& a, const Log& log) {
  FitOptions options;
  options.mode = parse_mode(a.mode);
  options.delta_constrained = !a.free_delta;
  options.maf = a.maf;
  options.threads = resolve_threads(a.threads);
  options.max_iterations = a.max_iterations;
  options.grad_tolerance = a.grad_tolerance;

  Json config{{"command", "fit"},
              {"data", a.data},
              {"mode", a.mode},
              {"maf", a.maf ? Json(*a.maf) : Json("controls")},
              {"covariates", a.covariates},
              {"free_delta", a.free_delta},
              {"naive", a.naive},
              {"null", a.null},
              {"seed", a.seed},
              {"threads", options.threads},
              {"max_iterations", a.max_iterations},
              {"grad_tolerance", a.grad_tolerance},
              {"out", a.out}};
  log("config " + config.dump());
  options.validate();

  Cohort cohort = read_pedigree(a.data, options.mode);
  std::vector<std::string> problems;
  int partial = 0;
  for (const Family& f : cohort.families) {
    for (const Diagnostic& d : validate(f)) {
      if (d.severity == Diagnostic::Severity::error) {
        problems.push_back(d.family_id + "/" + d.member_id + ": " + d.rule + ": " + d.message);
      } else {
        ++partial;
      }
    }
  }
  if (!problems.empty()) {
    for (const std::string& p : problems) log("invalid: " + p);
    throw InputError(std::to_string(problems.size()) + " pedigree validation error(s)");
  }
  if (partial > 0) log(std::to_string(partial) + " member(s) with partial data");
  if (!a.covariates.empty()) cohort = select_covariates(cohort, a.covariates);
  log("read " + std::to_string(cohort.families.size()) + " families, " +
      std::to_string(cohort.n_individuals()) + " individuals");

  const PreparedCohort data = prepare(cohort, options);
  for (const std::string& w : data.warnings) log("warning: " + w);
  if (options.mode == GeneticMode::snp) {
    log("maf used " + io::format_number(data.genetic.q) + (a.maf ? "" : " (from controls)"));
  }

  FitOptions null_options = options;
  null_options.fixed_beta1 = 0.0;
  null_options.compute_se = false;

  bool all_converged = true;
  auto run_model = [&](const char* name, auto&& full_fit, auto&& null_fit) {
    const FitResult full = full_fit();
    log(std::string(name) + " fit: loglik " + io::format_number(full.loglik) + ", " +
        std::to_string(full.iterations) + " iterations" +
        (full.converged ? "" : ", NOT converged"));
    all_converged = all_converged && full.converged;
    std::optional<LrtResult> test;
    if (a.null) {
      const FitResult null = null_fit(full);
      all_converged = all_converged && null.converged;
      test = lrt(full, null, 1);
      log(std::string(name) + " LRT for beta1 = 0: statistic " +
          io::format_number(test->statistic) + ", p " + io::format_number(test->p_value));
    }
    return io::fit_report(full, test);
  };

  Json report{{"version", io::version()}, {"config", config}};
  Json retro = run_model(
      "retrospective", [&] { return fit(data, options); },
      [&](const FitResult& full) {
        Theta start = full.theta_hat;
        start.beta1 = 0.0;
        return fit(data, null_options, start);
      });
  for (auto& [key, value] : retro.items()) report[key] = value;
  if (a.naive) {
    report["naive"] = run_model(
        "naive", [&] { return fit_naive(data, options); },
        [&](const FitResult&) { return fit_naive(data, null_options); });
  }
  write_text(a.out, report.dump(2) + "\n");
  log("wrote " + a.out);
  return all_converged ? kExitOk : kExitNonConvergence;
}

Scenario load_scenario(const std::string& path) { return io::scenario_from_json(io::read_json(path)); }

int cmd_simulate(const SimulateArgs& a, const Log& log) {
  Scenario s = load_scenario(a.config);
  if (a.threads) {
    s.threads = *a.threads;
    s.validate();
  }
  const Json resolved = io::scenario_to_json(s);
  log("scenario " + resolved.dump());
  log("master_seed " + std::to_string(s.master_seed) + ", workers " +
      std::to_string(resolve_threads(s.threads)));

  const std::filesystem::path dir(a.out_dir);
  std::filesystem::create_directories(dir);
  write_text(dir / "scenario.resolved.json", resolved.dump(2) + "\n");

  const ScenarioResult result = run_scenario(s);
  int failures = 0;
  for (const ReplicateResult& r : result.replicates) {
    for (const auto& [method, m] : r.methods) {
      if (!m.ok) {
        ++failures;
        log("replicate " + std::to_string(r.index) + " " + method + " failed: " + m.error);
      }
    }
  }
  std::ostringstream summary;
  io::write_summary_csv(summary, result.summary);
  write_text(dir / "summary.csv", summary.str());
  std::ostringstream reps;
  io::write_replicates_csv(reps, s, result.replicates);
  write_text(dir / "replicates.csv", reps.str());
  log("finished " + std::to_string(s.n_replicates) + " replicates with " +
      std::to_string(failures) + " failed fit(s); wrote " + dir.string());
  return kExitOk;
}

int cmd_generate(const GenerateArgs& a, const Log& log) {
  const Scenario s = load_scenario(a.config);
  if (a.replicate < 0) throw InputError("--replicate must be non-negative");
  log("scenario " + io::scenario_to_json(s).dump());
  log("master_seed " + std::to_string(s.master_seed) + ", replicate " +
      std::to_string(a.replicate));
  std::mt19937_64 rng = replicate_rng(s.master_seed, a.replicate);
  const SimulatedCohort sim = generate_cohort(s, rng);
  write_pedigree(a.out, sim.cohort);
  log("acceptance rate " + io::format_number(sim.acceptance_rate) + ", prevalence " +
      io::format_number(sim.prevalence) + "; wrote " + a.out);
  return kExitOk;
}

int cmd_mvn_prob(const MvnArgs& a, std::ostream& out, const Log& log) {
  const std::vector<double> mean = parse_list(a.mean);
  const auto n = static_cast<Eigen::Index>(mean.size());
  if (n == 0) throw InputError("--mean is empty");

  std::vector<std::vector<double>> rows;
  {
    std::stringstream ss(a.cov);
    std::string row;
    while (std::getline(ss, row, ';')) rows.push_back(parse_list(row));
  }
  if (static_cast<Eigen::Index>(rows.size()) != n) {
    throw InputError("--cov has " + std::to_string(rows.size()) + " rows, expected " +
                     std::to_string(n));
  }
  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != n) {
      throw InputError("--cov row " + std::to_string(i + 1) + " has " +
                       std::to_string(rows[i].size()) + " entries, expected " + std::to_string(n));
    }
    for (Eigen::Index j = 0; j < n; ++j) cov(i, j) = rows[i][j];
  }
  if (!cov.allFinite() || (cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw InputError("--cov must be a finite symmetric matrix");
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  mvnorm::Rectangle rect = mvnorm::Rectangle::whole_space(n);
  if (!a.lower.empty()) rect.lower = to_vector(parse_list(a.lower));
  if (!a.upper.empty()) rect.upper = to_vector(parse_list(a.upper));
  if (rect.lower.size() != n || rect.upper.size() != n) {
    throw InputError("--lower and --upper need " + std::to_string(n) + " entries");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (rect.lower(i) > rect.upper(i)) throw InputError("lower bound above upper bound");
    if (rect.upper(i) == -kInf || rect.lower(i) == kInf) {
      throw InputError("empty interval in coordinate " + std::to_string(i + 1));
    }
  }
  if (!(a.accuracy > 0.0)) throw InputError("--accuracy must be positive");

  mvnorm::QmcOptions qmc;
  qmc.accuracy = a.accuracy;
  qmc.seed = a.seed;
  log("mvn-prob dimension " + std::to_string(n) + ", accuracy " + io::format_number(a.accuracy) +
      ", seed " + std::to_string(a.seed));

  mvnorm::Gaussian g;
  g.mean = to_vector(mean);
  g.cov = cov;
  mvnorm::ProbabilityEstimate p;
  try {
    p = mvnorm::rectangle_prob(g, rect, qmc);
  } catch (const NumericalError& e) {
    throw InputError(std::string("--cov is not a valid covariance: ") + e.what());
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", p.probability);
  out << "probability " << buf << '\n';
  std::snprintf(buf, sizeof buf, "%.3g", p.error);
  out << "error " << buf << '\n';
  if (!p.converged) log("accuracy target not reached");
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Retrospective joint analysis of ascertained family data"};
  app.set_version_flag("--version", io::version());
  app.require_subcommand(1);

  FitArgs fit_args;
  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit the joint model to a pedigree CSV");
  fit_cmd->add_option("--data", fit_args.data, "Pedigree CSV")->required();
  fit_cmd->add_option("--mode", fit_args.mode, "Genetic mode: snp or score")
      ->check(CLI::IsMember({"snp", "score"}));
  auto* maf_opt = fit_cmd->add_option("--maf", fit_args.maf, "Fixed minor allele frequency");
  auto* controls_flag = fit_cmd->add_flag("--maf-from-controls", fit_args.maf_from_controls,
                                          "Estimate the MAF from controls (default)");
  maf_opt->excludes(controls_flag);
  fit_cmd->add_option("--covariates", fit_args.covariates, "Covariate columns to use (default all)")
      ->delimiter(',');
  fit_cmd->add_flag("--free-delta", fit_args.free_delta, "Estimate delta instead of fixing it at 1");
  fit_cmd->add_flag("--naive", fit_args.naive, "Also fit the naive mixed model for X");
  fit_cmd->add_flag("--null", fit_args.null, "Also fit beta1 = 0 and report the LRT");
  fit_cmd->add_option("--seed", fit_args.seed, "Seed recorded in the report");
  fit_cmd->add_option("--threads", fit_args.threads, "Worker threads (0 = all cores)")
      ->check(CLI::NonNegativeNumber);
  fit_cmd->add_option("--max-iterations", fit_args.max_iterations, "Optimizer iteration limit")
      ->check(CLI::PositiveNumber);
  fit_cmd->add_option("--grad-tol", fit_args.grad_tolerance, "Gradient tolerance")
      ->check(CLI::PositiveNumber);
  fit_cmd->add_option("--out", fit_args.out, "Report JSON path")->required();

  SimulateArgs sim_args;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "Run a simulation scenario");
  sim_cmd->add_option("--config", sim_args.config, "Scenario JSON")->required();
  sim_cmd->add_option("--out-dir", sim_args.out_dir, "Output directory")->required();
  sim_cmd->add_option("--threads", sim_args.threads, "Override the scenario's worker count");

  GenerateArgs gen_args;
  CLI::App* gen_cmd =
      app.add_subcommand("generate", "Write the simulated cohort of one replicate as a pedigree CSV");
  gen_cmd->add_option("--config", gen_args.config, "Scenario JSON")->required();
  gen_cmd->add_option("--replicate", gen_args.replicate, "Replicate index");
  gen_cmd->add_option("--out", gen_args.out, "Pedigree CSV path")->required();

  MvnArgs mvn_args;
  CLI::App* mvn_cmd = app.add_subcommand("mvn-prob", "Multivariate normal rectangle probability");
  mvn_cmd->add_option("--mean", mvn_args.mean, "Comma-separated mean")->required();
  mvn_cmd->add_option("--cov", mvn_args.cov, "Covariance rows separated by ';'")->required();
  mvn_cmd->add_option("--lower", mvn_args.lower, "Lower bounds (default -inf)");
  mvn_cmd->add_option("--upper", mvn_args.upper, "Upper bounds (default inf)");
  mvn_cmd->add_option("--accuracy", mvn_args.accuracy, "Absolute error target");
  mvn_cmd->add_option("--seed", mvn_args.seed, "QMC randomization seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  const Log log(err);
  log("ascfam " + io::version());
  try {
    if (*fit_cmd) return cmd_fit(fit_args, log);
    if (*sim_cmd) return cmd_simulate(sim_args, log);
    if (*gen_cmd) return cmd_generate(gen_args, log);
    return cmd_mvn_prob(mvn_args, out, log);
  } catch (const InputError& e) {
    log(std::string("error: ") + e.what());
    return kExitInput;
  } catch (const NumericalError& e) {
    log(std::string("numerical failure: ") + e.what());
    return kExitNonConvergence;
  } catch (const std::filesystem::filesystem_error& e) {
    log(std::string("error: ") + e.what());
    return kExitInput;
  }
}

}  // namespace ascfam::cli
