#pragma once

#include <array>
#include <span>
#include <vector>

#include "ascfam/mvnorm.hpp"
#include "ascfam/pedigree.hpp"

namespace ascfam::genetics {

/// Hardy-Weinberg genotype frequencies ((1-q)^2, 2q(1-q), q^2).
std::array<double, 3> hwe_probs(double q);

/// Mendelian P(child | mother, father) for minor-allele counts in {0,1,2}.
double transmission_prob(int child, int mother, int father);

/// Sibships hanging off founder couples, plus unrelated founders. Member
/// indices refer to Family::members; a parent index of -1 means the parent
/// is implicit (referenced but not a row).
struct FamilyStructure {
  struct Sibship {
    int father = -1;
    int mother = -1;
    std::vector<int> children;
  };
  std::vector<Sibship> sibships;
  std::vector<int> founders;  // founders that are nobody's parent

  /// Sibship containing member `i` as a child, or -1.
  int sibship_of(int i) const;
};

/// Throws TopologyError for anything beyond founders and their children
/// (grandchildren, half-sibships, a parent shared between couples, or a lone
/// parent).
FamilyStructure analyze_structure(const Family& family);

/// Joint probability that members[k] has genotype genotypes[k] for all k.
/// Members not listed are summed out.
double genotype_prob(const FamilyStructure& s, double q, std::span<const int> members,
                     std::span<const int> genotypes);

struct GenotypeDist {
  std::vector<int> members;                       // family member indices
  std::vector<std::vector<int>> configurations;  // one genotype per member
  std::vector<double> probabilities;
};

/// Full joint distribution over all 3^k configurations of `members`
/// (default: every row of the family). Throws TopologyError when more than
/// kMaxGenotypedMembers members are requested.
GenotypeDist family_genotype_dist(const Family& family, double q);
GenotypeDist family_genotype_dist(const Family& family, double q, std::vector<int> members);

struct MafEstimate {
  double q = 0.0;
  int n_controls = 0;
  /// q is 0 or 1; a fit needs q strictly inside (0,1).
  bool degenerate = false;
};

/// Allele counting over controls (primary == 0) with an observed genotype.
MafEstimate estimate_maf_controls(const Cohort& cohort);

struct ScoreModel {
  double mu_g = 0.0;
  double sigma_g = 1.0;
};

/// Sample mean and SD (divisor n-1) of control scores.
ScoreModel estimate_score_moments(const Cohort& cohort);

/// N(mu_g 1, sigma_g^2 R) over the family members.
mvnorm::Gaussian score_distribution(const Family& family, const ScoreModel& model);

}  // namespace ascfam::genetics
