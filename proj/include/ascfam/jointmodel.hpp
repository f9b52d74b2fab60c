#pragma once

// Joint probit / linear mixed model for a binary primary phenotype Y and a
// continuous secondary phenotype X in families, and its retrospective
// (ascertainment-corrected) likelihood P(X, G | Y).
//
// Latent structure per member j of a family with relationship matrix R:
//   Y*_j = alpha0 + alpha1 g_j + z_j'alpha_z + sigma_gy b_j + sigma_u u_j + e_j
//   X_j  = beta0  + beta1 g_j  + z_j'beta_z  + sigma_gx b_j + delta sigma_u u_j
//          + sigma_eps e'_j
// with b ~ N(0, R), u, e, e' iid N(0,1) and Y = 1{Y* > 0}.

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ascfam/genetics.hpp"
#include "ascfam/mvnorm.hpp"
#include "ascfam/pedigree.hpp"

namespace ascfam {

struct Theta {
  double alpha0 = 0.0;
  double alpha1 = 0.0;
  Eigen::VectorXd alpha_z;
  double beta0 = 0.0;
  double beta1 = 0.0;
  Eigen::VectorXd beta_z;
  double sigma_gy = 0.0;
  double sigma_gx = 0.0;
  double sigma_u = 0.0;
  double delta = 1.0;
  double sigma_eps = 1.0;

  int n_covariates() const { return static_cast<int>(alpha_z.size()); }
  /// Names in the order used by to_vector: alpha0, alpha1, alpha_<cov>...,
  /// beta0, beta1, beta_<cov>..., sigma_gy, sigma_gx, sigma_u, delta,
  /// sigma_eps.
  std::vector<std::string> names(const std::vector<std::string>& covariates) const;
  Eigen::VectorXd to_vector() const;
  static Theta from_vector(const Eigen::VectorXd& v, int n_covariates);
};

/// The simulation-study parameter values: sigma_gx = 2, sigma_gy = sqrt(3),
/// sigma_u = sigma_eps = sqrt(2), delta = 1, beta0 = 3.5, beta1 = 0.2.
Theta reference_theta(double alpha0, double alpha1);

/// Likelihood-ready data for one independent block of a family: either one
/// sibship (children of one couple) or a single unrelated founder. Members
/// are the block's individuals with an observed primary phenotype.
struct FamilyData {
  std::string family_id;
  bool sibship = false;
  std::vector<std::string> member_ids;
  std::vector<int> y;
  Eigen::VectorXd x;  // NaN where missing
  Eigen::VectorXd g;  // NaN where missing (snp: 0/1/2, score: real)
  Eigen::MatrixXd z;  // members x covariates
  /// Observed genotypes of the sibship's parents when present as rows
  /// (father, mother); NaN otherwise.
  std::array<double, 2> parent_g{std::nan(""), std::nan("")};

  int size() const { return static_cast<int>(y.size()); }
  /// 0.5 on the off-diagonal for a sibship, identity otherwise.
  Eigen::MatrixXd relationship() const;
};

/// Splits each family into independent blocks. Members without Y (other
/// than sibship parents), and members with a missing covariate or (score
/// mode) a missing score, are dropped with a message appended to
/// `warnings`. Throws TopologyError for unsupported pedigrees, phenotyped
/// parents, or blocks above the genotyped-member cap.
std::vector<FamilyData> prepare_cohort(const Cohort& cohort, std::vector<std::string>* warnings);
std::vector<FamilyData> prepare_family(const Family& family, GeneticMode mode,
                                       std::vector<std::string>* warnings);

/// Joint covariance of (Y*_1..n, X_1..n).
Eigen::MatrixXd assemble_covariance(const Theta& theta, const Eigen::MatrixXd& r);

struct DerivedQuantities {
  double h2 = 0.0;        // sigma_gx^2 / (sigma_gx^2 + delta^2 sigma_u^2 + sigma_eps^2)
  double h2_linear_delta = 0.0;  // same with delta sigma_u^2 in the denominator
  double rho_x = 0.0;     // sibling correlation of X
  double rho_y = 0.0;     // sibling correlation of Y*
  double rho_xy = 0.0;    // within-person correlation of X and Y*
  double rho_xy_cross = 0.0;  // X of one sibling with Y* of another
};
DerivedQuantities derived_quantities(const Theta& theta);

/// Mean of Y* for the block's members given genotypes g.
Eigen::VectorXd primary_mean(const Theta& theta, const FamilyData& fd, const Eigen::VectorXd& g);

/// P(Y = y | G = g) from the dense covariance of Y* (closed form for n <= 2,
/// randomized QMC otherwise).
mvnorm::ProbabilityEstimate primary_orthant(const Theta& theta, const FamilyData& fd,
                                            const Eigen::VectorXd& g,
                                            const mvnorm::QmcOptions& options = {});

/// Genetic law used by the likelihood: SNP with a fixed MAF, or a
/// polygenic score with fixed moments.
struct GeneticModel {
  GeneticMode mode = GeneticMode::snp;
  double q = 0.3;
  genetics::ScoreModel score{};
};

/// log P(X, Y, G_obs) for the block: the numerator of the retrospective
/// likelihood. Missing SNP genotypes are summed out.
double log_numerator(const Theta& theta, const FamilyData& fd, const GeneticModel& gm);
/// log P(Y): the ascertainment denominator.
double log_denominator(const Theta& theta, const FamilyData& fd, const GeneticModel& gm);

double family_loglik_snp(const Theta& theta, const FamilyData& fd, double q);
double family_loglik_score(const Theta& theta, const FamilyData& fd,
                           const genetics::ScoreModel& sm);

struct NaiveParams {
  double beta0 = 0.0;
  double beta1 = 0.0;
  Eigen::VectorXd beta_z;
  double sigma_gx = 0.0;
  double sigma_eps = 1.0;
};

/// Linear mixed model log-density of X (members with observed X and g)
/// with covariance sigma_gx^2 R + sigma_eps^2 I.
double naive_loglik(const NaiveParams& params, const FamilyData& fd);

/// Sum of block log-likelihoods over a prepared cohort. Denominators are
/// shared between blocks with the same (sibship flag, multiset of (y, z))
/// and the sum is accumulated in block order, so the value does not depend
/// on the thread count.
class CohortLikelihood {
 public:
  CohortLikelihood(std::vector<FamilyData> blocks, GeneticModel genetic, int threads = 1);

  double operator()(const Theta& theta) const;
  std::vector<double> per_block(const Theta& theta) const;
  double naive(const NaiveParams& params) const;

  const std::vector<FamilyData>& blocks() const { return blocks_; }
  const GeneticModel& genetic() const { return genetic_; }
  std::size_t n_distinct_denominators() const { return representatives_.size(); }

 private:
  std::vector<FamilyData> blocks_;
  GeneticModel genetic_;
  int threads_;
  std::vector<std::size_t> denominator_of_;  // block -> representative slot
  std::vector<std::size_t> representatives_;  // slot -> block index
};

}  // namespace ascfam
