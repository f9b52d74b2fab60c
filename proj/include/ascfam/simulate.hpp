#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ascfam/estimate.hpp"
#include "ascfam/jointmodel.hpp"
#include "ascfam/pedigree.hpp"

namespace ascfam {

enum class Link { probit, logit };

struct Scenario {
  int n_families = 400;
  int family_size = 5;
  int ascertainment_min_cases = 2;
  Theta theta_true = reference_theta(-1.645, 0.5);
  Link link = Link::probit;
  GeneticMode mode = GeneticMode::snp;
  double maf = 0.3;
  int n_replicates = 500;
  std::uint64_t master_seed = 1;
  FitOptions fit_options;
  bool fit_naive_too = true;
  /// Also fit the beta1 = 0 null model(s) and record the LRT p-value.
  bool lrt = true;
  /// Replicates run concurrently on this many workers (0 = all cores).
  int threads = 0;

  void validate() const;
};

/// One simulated sibship with its latent primary liabilities.
struct SimulatedFamily {
  Family family;
  Eigen::VectorXd y_star;
};

/// Draws one sibship of `scenario.family_size` with implicit parents.
/// Genotypes are allele counts from two HWE parents (SNP mode) or raw
/// N(0, R) scores (score mode).
SimulatedFamily generate_family(const Scenario& scenario, std::mt19937_64& rng,
                                const std::string& family_id);

/// True iff the number of affected members reaches `min_cases`.
bool ascertain(const Family& family, int min_cases);

struct SimulatedCohort {
  Cohort cohort;
  long attempts = 0;
  double acceptance_rate = 0.0;
  /// Share of affected members over every generated family, accepted or not.
  double prevalence = 0.0;
};

/// Rejection sampling until `n_families` families pass ascertainment. Score
/// mode standardizes the scores over the accepted cohort. Throws
/// NumericalError once the acceptance rate after 10^6 attempts is below 1e-6.
SimulatedCohort generate_cohort(const Scenario& scenario, std::mt19937_64& rng);

/// Generator for replicate `index`, derived from the master seed alone.
std::mt19937_64 replicate_rng(std::uint64_t master_seed, int index);

struct MethodReplicate {
  bool ok = false;
  std::string error;
  FitResult fit;
  std::optional<LrtResult> lrt;
};

struct ReplicateResult {
  int index = 0;
  double acceptance_rate = 0.0;
  double prevalence = 0.0;
  std::map<std::string, MethodReplicate> methods;  // "retrospective", "naive"
};

ReplicateResult run_replicate(const Scenario& scenario, int index);

struct QuantitySummary {
  double truth = 0.0;
  int n = 0;
  double mean = 0.0;
  double sd = 0.0;  // divisor n, so that rmse^2 = bias^2 + sd^2
  double rmse = 0.0;
  double coverage95 = std::nan("");  // Wald intervals; NaN without SEs
  int n_with_se = 0;
};

struct MethodSummary {
  int n_ok = 0;
  int n_failed = 0;
  int n_nonconverged = 0;
  /// Parameters by name plus "h2".
  std::map<std::string, QuantitySummary> quantities;
  /// LRT rejection rates for beta1 = 0 at 0.05, 0.01 and 0.001.
  std::map<double, double> rejection;
  int n_lrt = 0;
};

struct SummaryMetrics {
  std::map<std::string, MethodSummary> methods;
  double mean_prevalence = 0.0;
  double mean_acceptance_rate = 0.0;
  int n_replicates = 0;
};

/// Aggregates replicates in index order. Failed fits are counted and left
/// out; non-converged fits are counted and kept.
SummaryMetrics summarize(const Scenario& scenario, const std::vector<ReplicateResult>& reps);

struct ScenarioResult {
  std::vector<ReplicateResult> replicates;
  SummaryMetrics summary;
};

ScenarioResult run_scenario(const Scenario& scenario);

}  // namespace ascfam
