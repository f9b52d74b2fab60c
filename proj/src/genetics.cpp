#include "ascfam/genetics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "ascfam/error.hpp"

namespace ascfam::genetics {
namespace {

void check_maf(double q) {
  if (!(q > 0.0 && q < 1.0)) throw InputError("maf outside (0,1)");
}

bool is_snp_code(double g) { return g == 0.0 || g == 1.0 || g == 2.0; }

}  // namespace

std::array<double, 3> hwe_probs(double q) {
  check_maf(q);
  const double p = 1.0 - q;
  return {p * p, 2.0 * p * q, q * q};
}

double transmission_prob(int child, int mother, int father) {
  // Probability that each parent passes on the minor allele.
  const double pm = mother / 2.0;
  const double pf = father / 2.0;
  switch (child) {
    case 0: return (1.0 - pm) * (1.0 - pf);
    case 1: return pm * (1.0 - pf) + (1.0 - pm) * pf;
    case 2: return pm * pf;
    default: return 0.0;
  }
}

int FamilyStructure::sibship_of(int i) const {
  for (std::size_t s = 0; s < sibships.size(); ++s) {
    const auto& c = sibships[s].children;
    if (std::find(c.begin(), c.end(), i) != c.end()) return static_cast<int>(s);
  }
  return -1;
}

FamilyStructure analyze_structure(const Family& family) {
  FamilyStructure out;
  const int n = static_cast<int>(family.members.size());
  std::map<std::pair<std::string, std::string>, int> by_parents;
  std::map<std::string, int> parent_use;
  for (int i = 0; i < n; ++i) {
    const Individual& m = family.members[i];
    if (m.is_founder()) continue;
    if (!m.father_id || !m.mother_id) {
      throw TopologyError("family " + family.id + ": member " + m.id + " has a single parent");
    }
    const auto key = std::make_pair(*m.father_id, *m.mother_id);
    auto [it, inserted] = by_parents.emplace(key, static_cast<int>(out.sibships.size()));
    if (inserted) {
      FamilyStructure::Sibship s;
      s.father = family.index_of(key.first);
      s.mother = family.index_of(key.second);
      for (const std::string& p : {key.first, key.second}) {
        if (++parent_use[p] > 1) {
          throw TopologyError("family " + family.id + ": parent " + p +
                              " belongs to more than one couple");
        }
      }
      for (int p : {s.father, s.mother}) {
        if (p >= 0 && !family.members[p].is_founder()) {
          throw TopologyError("family " + family.id + ": more than two generations (" +
                              family.members[p].id + " is both child and parent)");
        }
      }
      out.sibships.push_back(s);
    }
    out.sibships[it->second].children.push_back(i);
  }
  for (int i = 0; i < n; ++i) {
    if (!family.members[i].is_founder()) continue;
    if (parent_use.count(family.members[i].id) == 0) out.founders.push_back(i);
  }
  return out;
}

double genotype_prob(const FamilyStructure& s, double q, std::span<const int> members,
                     std::span<const int> genotypes) {
  if (members.size() != genotypes.size()) {
    throw InputError("genotype_prob: members and genotypes differ in length");
  }
  const auto hwe = hwe_probs(q);
  auto genotype_of = [&](int member) -> int {
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (members[k] == member) return genotypes[k];
    }
    return -1;
  };
  for (int g : genotypes) {
    if (g < 0 || g > 2) throw InputError("genotype_prob: genotype outside {0,1,2}");
  }

  double prob = 1.0;
  for (int f : s.founders) {
    const int g = genotype_of(f);
    if (g >= 0) prob *= hwe[g];
  }
  for (const auto& sib : s.sibships) {
    const int gf = sib.father >= 0 ? genotype_of(sib.father) : -1;
    const int gm = sib.mother >= 0 ? genotype_of(sib.mother) : -1;
    double total = 0.0;
    for (int m = 0; m < 3; ++m) {
      if (gm >= 0 && m != gm) continue;
      for (int p = 0; p < 3; ++p) {
        if (gf >= 0 && p != gf) continue;
        double term = hwe[m] * hwe[p];
        for (int c : sib.children) {
          const int g = genotype_of(c);
          if (g >= 0) term *= transmission_prob(g, m, p);
        }
        total += term;
      }
    }
    prob *= total;
  }
  return prob;
}

GenotypeDist family_genotype_dist(const Family& family, double q) {
  std::vector<int> all(family.members.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return family_genotype_dist(family, q, std::move(all));
}

GenotypeDist family_genotype_dist(const Family& family, double q, std::vector<int> members) {
  check_maf(q);
  if (static_cast<int>(members.size()) > kMaxGenotypedMembers) {
    throw TopologyError("family " + family.id + " has " + std::to_string(members.size()) +
                        " genotyped members; at most " +
                        std::to_string(kMaxGenotypedMembers) + " are supported");
  }
  const FamilyStructure s = analyze_structure(family);
  GenotypeDist dist;
  dist.members = std::move(members);
  const std::size_t k = dist.members.size();
  std::vector<int> config(k, 0);
  while (true) {
    dist.configurations.push_back(config);
    dist.probabilities.push_back(genotype_prob(s, q, dist.members, config));
    std::size_t pos = 0;
    while (pos < k && config[pos] == 2) config[pos++] = 0;
    if (pos == k) break;
    ++config[pos];
  }
  return dist;
}

MafEstimate estimate_maf_controls(const Cohort& cohort) {
  long minor = 0;
  MafEstimate est;
  for (const Family& f : cohort.families) {
    for (const Individual& m : f.members) {
      if (m.primary != 0 || !m.genotype) continue;
      if (!is_snp_code(*m.genotype)) {
        throw InputError("estimate_maf_controls: genotype of " + m.id + " is not 0, 1 or 2");
      }
      minor += static_cast<long>(*m.genotype);
      ++est.n_controls;
    }
  }
  if (est.n_controls == 0) throw InputError("no genotyped controls to estimate the maf from");
  est.q = static_cast<double>(minor) / (2.0 * est.n_controls);
  est.degenerate = est.q <= 0.0 || est.q >= 1.0;
  return est;
}

ScoreModel estimate_score_moments(const Cohort& cohort) {
  std::vector<double> scores;
  for (const Family& f : cohort.families) {
    for (const Individual& m : f.members) {
      if (m.primary == 0 && m.genotype) scores.push_back(*m.genotype);
    }
  }
  if (scores.size() < 2) throw InputError("fewer than 2 controls with an observed score");
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  double ss = 0.0;
  for (double s : scores) ss += (s - mean) * (s - mean);
  const double sd = std::sqrt(ss / static_cast<double>(scores.size() - 1));
  if (!(sd > 0.0)) throw InputError("control scores have zero standard deviation");
  return {mean, sd};
}

mvnorm::Gaussian score_distribution(const Family& family, const ScoreModel& model) {
  if (!(model.sigma_g > 0.0)) throw InputError("score model needs sigma_g > 0");
  const auto n = static_cast<Eigen::Index>(family.members.size());
  const Eigen::MatrixXd r =
      family.relationship.size() == n * n ? family.relationship : relationship_matrix(family);
  return {Eigen::VectorXd::Constant(n, model.mu_g), model.sigma_g * model.sigma_g * r};
}

}  // namespace ascfam::genetics
