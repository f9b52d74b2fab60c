#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ascfam {

/// Largest number of genotyped members the enumeration-based likelihood
/// accepts per family (3^8 genotype configurations).
inline constexpr int kMaxGenotypedMembers = 8;

enum class Sex { male, female, unknown };
enum class GeneticMode { snp, score };

struct Individual {
  std::string id;
  std::optional<std::string> father_id;
  std::optional<std::string> mother_id;
  Sex sex = Sex::unknown;
  std::optional<int> primary;       // Y in {0,1}
  std::optional<double> secondary;  // X
  std::optional<double> genotype;   // allele count (snp) or score
  std::vector<double> covariates;   // NaN marks a missing value

  bool is_founder() const { return !father_id && !mother_id; }
};

struct Family {
  std::string id;
  std::vector<Individual> members;
  /// Coefficient-of-relationship matrix over `members` (row order).
  Eigen::MatrixXd relationship;

  /// Index of member `id`, or -1.
  int index_of(const std::string& id) const;
  /// Parent ids referenced by members but absent as rows, in order of first
  /// reference.
  std::vector<std::string> implicit_parents() const;
};

struct Cohort {
  std::vector<Family> families;
  std::vector<std::string> covariate_names;
  GeneticMode genetic_mode = GeneticMode::snp;

  std::size_t n_individuals() const;
};

bool operator==(const Individual& a, const Individual& b);
bool operator==(const Family& a, const Family& b);
bool operator==(const Cohort& a, const Cohort& b);

/// Coefficient of relationship 2*phi(l,m) from the kinship recursion, with
/// unit diagonal. Parents that are referenced but not present are treated
/// as unrelated founders; a lone known parent gets an anonymous partner.
/// Throws InputError on a self-ancestry cycle.
Eigen::MatrixXd relationship_matrix(const Family& family);

struct Diagnostic {
  enum class Severity { error, info };
  Severity severity = Severity::error;
  std::string family_id;
  std::string member_id;
  std::string rule;
  std::string message;
};

/// Structural checks. Errors are violations of the Individual/Family
/// invariants; `info` entries flag partial data and never block a fit.
std::vector<Diagnostic> validate(const Family& family);

/// Parses the pedigree CSV (header required). Rows of one family need not
/// be contiguous; families keep the order of first appearance. Throws
/// InputError with the offending line on malformed fields, duplicate ids or
/// self-ancestry.
Cohort parse_pedigree(std::istream& in, GeneticMode mode);
Cohort read_pedigree(const std::string& path, GeneticMode mode);

/// Copy of `cohort` keeping only the named covariate columns, in the given
/// order. Throws InputError for a name that is not a column.
Cohort select_covariates(const Cohort& cohort, const std::vector<std::string>& names);

/// Inverse of parse_pedigree; doubles use round-trip precision.
void write_pedigree(std::ostream& out, const Cohort& cohort);
void write_pedigree(const std::string& path, const Cohort& cohort);

}  // namespace ascfam
