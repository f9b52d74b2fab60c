#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ascfam/jointmodel.hpp"
#include "ascfam/pedigree.hpp"

namespace ascfam {

struct FitOptions {
  GeneticMode mode = GeneticMode::snp;
  bool delta_constrained = true;
  /// Fixed MAF; estimated from controls when absent (SNP mode).
  std::optional<double> maf;
  /// Fixed score moments; estimated from controls when absent (score mode).
  std::optional<genetics::ScoreModel> score;
  /// Holds beta1 at this value (used for the LRT null model).
  std::optional<double> fixed_beta1;
  int max_iterations = 200;
  double grad_tolerance = 1e-3;
  double loglik_rel_tolerance = 1e-9;
  int threads = 1;
  /// Skip the Hessian (and SEs) when only the maximized likelihood is needed.
  bool compute_se = true;

  void validate() const;
};

/// Which coordinates of Theta are free and how they map to the optimizer's
/// unconstrained space. SDs use a log map clamped below at log(kSdFloor);
/// means and delta are identity mapped.
struct ParameterLayout {
  static constexpr double kSdFloor = 1e-8;

  int n_covariates = 0;
  bool delta_free = false;
  std::optional<double> fixed_beta1;
  double fixed_delta = 1.0;

  /// Indices into Theta::to_vector() of the free parameters, in order.
  std::vector<int> free_indices() const;
  /// True for indices into Theta::to_vector() that are log mapped.
  bool is_log_mapped(int theta_index) const;
};

/// Throws InputError for a negative SD. An SD of exactly zero maps to the
/// clamp and sets the matching entry of `at_floor` when provided.
Eigen::VectorXd transform(const Theta& theta, const ParameterLayout& layout,
                          std::vector<bool>* at_floor = nullptr);
Theta untransform(const Eigen::VectorXd& u, const ParameterLayout& layout);

struct ParameterEstimate {
  std::string name;
  double estimate = 0.0;
  double se = std::nan("");  // NaN when withheld or fixed
  bool boundary = false;
  bool fixed = false;
};

struct FitResult {
  std::string model;  // "retrospective" or "naive"
  GeneticModel genetic;
  Theta theta_hat;
  std::vector<ParameterEstimate> parameters;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  int evaluations = 0;
  /// False when the Hessian over the interior free parameters was not
  /// positive definite; all SEs are then withheld.
  bool hessian_ok = false;
  DerivedQuantities derived;
  DerivedQuantities derived_se;  // NaN members when unavailable
  std::vector<std::string> warnings;

  const ParameterEstimate& parameter(const std::string& name) const;
};

/// Blocks and genetic law for a cohort, with q or the score moments
/// resolved from the options or estimated from controls.
struct PreparedCohort {
  std::vector<FamilyData> blocks;
  GeneticModel genetic;
  std::vector<std::string> covariate_names;
  std::vector<std::string> warnings;
};
PreparedCohort prepare(const Cohort& cohort, const FitOptions& options);

/// Retrospective ML fit. Without `start`, (beta, sigma_gx, sigma_eps) come
/// from the naive fit, the alphas from a probit regression of Y on G and Z,
/// sigma_gy = sigma_u = 0.5 and delta = 1.
FitResult fit(const PreparedCohort& data, const FitOptions& options,
              const std::optional<Theta>& start = std::nullopt);
FitResult fit(const Cohort& cohort, const FitOptions& options);

/// ML fit of the linear mixed model for X alone. Parameters: beta0, beta1,
/// beta_<cov>..., sigma_gx, sigma_eps.
FitResult fit_naive(const PreparedCohort& data, const FitOptions& options = {});
FitResult fit_naive(const Cohort& cohort, const FitOptions& options = {});

/// Probit regression of Y on (1, G, Z) over members with observed G,
/// ignoring relatedness and ascertainment. Returns (alpha0, alpha1, alpha_z).
Eigen::VectorXd probit_start(const std::vector<FamilyData>& blocks);

struct LrtResult {
  double statistic = 0.0;
  int df = 1;
  double p_value = 1.0;
};
/// 2 (l_full - l_null) against chi-square(df). Throws NumericalError when
/// the null log-likelihood exceeds the full one by more than 1e-6.
LrtResult lrt(const FitResult& full, const FitResult& null, int df);
LrtResult lrt(double loglik_full, double loglik_null, int df);

}  // namespace ascfam
