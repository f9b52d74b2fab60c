#include "ascfam/jointmodel.hpp"

#include <algorithm>
#include <limits>
#include <numbers>

#include "ascfam/error.hpp"
#include "ascfam/normal.hpp"
#include "ascfam/parallel.hpp"
#include "ascfam/quadrature.hpp"

namespace ascfam {
namespace {

constexpr int kQuadratureNodes = 32;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kSibLoading = std::sqrt(0.5);

double log_sum_exp(std::span<const double> v) {
  double hi = kNegInf;
  for (double t : v) hi = std::max(hi, t);
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double t : v) s += std::exp(t - hi);
  return hi + std::log(s);
}

double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (!std::isfinite(b)) return a;
  return a + std::log1p(std::exp(b - a));
}

// Per-member quantities of the one-factor representation b_j = a_j F +
// sqrt(1 - a_j^2) e_j, with F shared by a sibship.
struct MemberVariances {
  double a = 0.0;
  double v_y = 0.0;  // Var(Y*_j | F)
  double v_x = 0.0;  // Var(X_j | F)
  double c = 0.0;    // Cov(Y*_j, X_j | F)
};

MemberVariances member_variances(const Theta& t, bool sib) {
  MemberVariances m;
  m.a = sib ? kSibLoading : 0.0;
  const double own = 1.0 - m.a * m.a;
  const double su2 = t.sigma_u * t.sigma_u;
  m.v_y = t.sigma_gy * t.sigma_gy * own + su2 + 1.0;
  m.v_x = t.sigma_gx * t.sigma_gx * own + t.delta * t.delta * su2 + t.sigma_eps * t.sigma_eps;
  m.c = t.sigma_gy * t.sigma_gx * own + t.delta * su2;
  return m;
}

void check_covariates(const Theta& t, const FamilyData& fd) {
  if (fd.z.cols() != t.alpha_z.size() || fd.z.cols() != t.beta_z.size()) {
    throw InputError("theta has " + std::to_string(t.alpha_z.size()) +
                     " covariate effects but the data has " + std::to_string(fd.z.cols()));
  }
}

Eigen::VectorXd secondary_mean(const Theta& t, const FamilyData& fd, const Eigen::VectorXd& g) {
  Eigen::VectorXd mu = Eigen::VectorXd::Constant(fd.size(), t.beta0) + t.beta1 * g;
  if (fd.z.cols() > 0) mu += fd.z * t.beta_z;
  return mu;
}

// log P(X_obs, Y | G = g).
double log_joint_given_g(const Theta& t, const FamilyData& fd, const Eigen::VectorXd& g) {
  const int n = fd.size();
  const MemberVariances mv = member_variances(t, fd.sibship);
  const Eigen::VectorXd mu_y = primary_mean(t, fd, g);
  const Eigen::VectorXd mu_x = secondary_mean(t, fd, g);
  const double k_x = t.sigma_gx * mv.a;
  const double k_y = t.sigma_gy * mv.a;

  std::vector<int> observed;
  for (int j = 0; j < n; ++j) {
    if (!std::isnan(fd.x(j))) observed.push_back(j);
  }
  double log_px = 0.0;
  double precision = 1.0;
  double weighted = 0.0;
  if (!observed.empty()) {
    const auto m = static_cast<Eigen::Index>(observed.size());
    mvnorm::FactorGaussian px{Eigen::VectorXd(m), Eigen::VectorXd::Constant(m, mv.v_x),
                              Eigen::VectorXd::Constant(m, k_x)};
    Eigen::VectorXd xs(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      px.mean(k) = mu_x(observed[k]);
      xs(k) = fd.x(observed[k]);
      precision += k_x * k_x / mv.v_x;
      weighted += k_x * (xs(k) - px.mean(k)) / mv.v_x;
    }
    log_px = mvnorm::log_density(px, xs);
  }
  // F | X ~ N(f_mean, f_var).
  const double f_var = 1.0 / precision;
  const double f_mean = weighted * f_var;
  const double f_sd = std::sqrt(f_var);

  mvnorm::FactorGaussian cond{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (int j = 0; j < n; ++j) {
    if (std::isnan(fd.x(j))) {
      cond.mean(j) = mu_y(j) + k_y * f_mean;
      cond.variance(j) = mv.v_y;
      cond.loading(j) = k_y * f_sd;
    } else {
      const double ratio = mv.c / mv.v_x;
      const double coef = k_y - ratio * k_x;
      cond.mean(j) = mu_y(j) + ratio * (fd.x(j) - mu_x(j)) + coef * f_mean;
      cond.variance(j) = mv.v_y - ratio * mv.c;
      cond.loading(j) = coef * f_sd;
    }
  }
  return log_px + mvnorm::log_rectangle_prob(cond, mvnorm::orthant(fd.y), kQuadratureNodes);
}

// log P(G = g, parents = observed parent genotypes) for a SNP block.
double log_snp_genotype_prob(const FamilyData& fd, double q, const Eigen::VectorXd& g) {
  const auto hwe = genetics::hwe_probs(q);
  if (!fd.sibship) return std::log(hwe[static_cast<int>(g(0))]);
  const double father = fd.parent_g[0];
  const double mother = fd.parent_g[1];
  double total = 0.0;
  for (int m = 0; m < 3; ++m) {
    if (!std::isnan(mother) && m != static_cast<int>(mother)) continue;
    for (int p = 0; p < 3; ++p) {
      if (!std::isnan(father) && p != static_cast<int>(father)) continue;
      double term = hwe[m] * hwe[p];
      for (int j = 0; j < fd.size(); ++j) {
        term *= genetics::transmission_prob(static_cast<int>(g(j)), m, p);
      }
      total += term;
    }
  }
  return std::log(total);
}

double log_score_density(const FamilyData& fd, const genetics::ScoreModel& sm) {
  // Observed parent scores come first; parents are unrelated to each other
  // and at relationship 0.5 to every child.
  std::vector<double> values;
  std::vector<bool> is_parent;
  for (double p : fd.parent_g) {
    if (!std::isnan(p)) {
      values.push_back(p);
      is_parent.push_back(true);
    }
  }
  for (int j = 0; j < fd.size(); ++j) {
    values.push_back(fd.g(j));
    is_parent.push_back(false);
  }
  const auto n = static_cast<Eigen::Index>(values.size());
  Eigen::MatrixXd r = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < n; ++k) {
      if (i == k || (is_parent[i] && is_parent[k])) continue;
      if (fd.sibship) r(i, k) = 0.5;
    }
  }
  const mvnorm::Gaussian law{Eigen::VectorXd::Constant(n, sm.mu_g),
                             sm.sigma_g * sm.sigma_g * r};
  return mvnorm::log_density(law, Eigen::Map<const Eigen::VectorXd>(values.data(), n));
}

// Members grouped by identical (y, z); they contribute identical factors to
// the SNP denominator.
struct MemberGroup {
  int y = 0;
  int first = 0;  // a representative member index
  int count = 0;
};

std::vector<MemberGroup> group_members(const FamilyData& fd) {
  std::vector<MemberGroup> groups;
  for (int j = 0; j < fd.size(); ++j) {
    bool found = false;
    for (MemberGroup& grp : groups) {
      if (grp.y == fd.y[j] && fd.z.row(grp.first) == fd.z.row(j)) {
        ++grp.count;
        found = true;
        break;
      }
    }
    if (!found) groups.push_back({fd.y[j], j, 1});
  }
  return groups;
}

double log_denominator_snp(const Theta& t, const FamilyData& fd, double q) {
  const auto hwe = genetics::hwe_probs(q);
  const MemberVariances mv = member_variances(t, fd.sibship);
  const double sd = std::sqrt(mv.v_y);
  const std::vector<MemberGroup> groups = group_members(fd);
  const auto ng = groups.size();

  // Standardized mean for each group and genotype, with the sign of y.
  std::vector<std::array<double, 3>> base(ng);
  std::vector<double> sign(ng);
  for (std::size_t k = 0; k < ng; ++k) {
    const int j = groups[k].first;
    const double zeta = fd.z.cols() > 0 ? fd.z.row(j).dot(t.alpha_z) : 0.0;
    sign[k] = groups[k].y == 1 ? 1.0 : -1.0;
    for (int g = 0; g < 3; ++g) base[k][g] = (t.alpha0 + t.alpha1 * g + zeta) / sd;
  }
  if (!fd.sibship) {
    double total = kNegInf;
    for (int g = 0; g < 3; ++g) {
      total = log_add(total, std::log(hwe[g]) + normal::log_cdf(sign[0] * base[0][g]));
    }
    return total;
  }

  const double slope = t.sigma_gy * mv.a / sd;
  std::array<double, 3> log_hwe{};
  for (int g = 0; g < 3; ++g) log_hwe[g] = std::log(hwe[g]);
  std::array<std::array<std::array<double, 3>, 3>, 3> log_t{};  // [m][p][child]
  for (int m = 0; m < 3; ++m) {
    for (int p = 0; p < 3; ++p) {
      for (int c = 0; c < 3; ++c) {
        const double tp = genetics::transmission_prob(c, m, p);
        log_t[m][p][c] = tp > 0.0 ? std::log(tp) : kNegInf;
      }
    }
  }
  std::vector<std::array<double, 3>> lp(ng);
  auto log_f = [&](double f) {
    for (std::size_t k = 0; k < ng; ++k) {
      for (int g = 0; g < 3; ++g) lp[k][g] = normal::log_cdf(sign[k] * (base[k][g] + slope * f));
    }
    double total = kNegInf;
    for (int m = 0; m < 3; ++m) {
      for (int p = m; p < 3; ++p) {
        double term = log_hwe[m] + log_hwe[p] + (p != m ? std::numbers::ln2 : 0.0);
        for (std::size_t k = 0; k < ng; ++k) {
          double member = kNegInf;
          for (int c = 0; c < 3; ++c) member = log_add(member, log_t[m][p][c] + lp[k][c]);
          term += groups[k].count * member;
        }
        total = log_add(total, term);
      }
    }
    return total;
  };
  return log_integrate_normal(log_f, kQuadratureNodes, slope);
}

double log_denominator_score(const Theta& t, const FamilyData& fd,
                             const genetics::ScoreModel& sm) {
  const MemberVariances mv = member_variances(t, fd.sibship);
  const double kappa2 = t.sigma_gy * t.sigma_gy + t.alpha1 * t.alpha1 * sm.sigma_g * sm.sigma_g;
  const int n = fd.size();
  const double su2 = t.sigma_u * t.sigma_u;
  mvnorm::FactorGaussian law{
      primary_mean(t, fd, Eigen::VectorXd::Constant(n, sm.mu_g)),
      Eigen::VectorXd::Constant(n, su2 + 1.0 + kappa2 * (1.0 - mv.a * mv.a)),
      Eigen::VectorXd::Constant(n, mv.a * std::sqrt(kappa2))};
  return mvnorm::log_rectangle_prob(law, mvnorm::orthant(fd.y), kQuadratureNodes);
}

void check_q(double q) {
  if (!(q > 0.0 && q < 1.0)) throw InputError("maf outside (0,1)");
}

void check_score_model(const genetics::ScoreModel& sm) {
  if (!(sm.sigma_g > 0.0) || !std::isfinite(sm.mu_g)) {
    throw InputError("score model needs a finite mean and sigma_g > 0");
  }
}

}  // namespace

std::vector<std::string> Theta::names(const std::vector<std::string>& covariates) const {
  if (static_cast<int>(covariates.size()) != n_covariates()) {
    throw InputError("covariate name count does not match theta");
  }
  std::vector<std::string> out = {"alpha0", "alpha1"};
  for (const auto& c : covariates) out.push_back("alpha_" + c);
  out.insert(out.end(), {"beta0", "beta1"});
  for (const auto& c : covariates) out.push_back("beta_" + c);
  out.insert(out.end(), {"sigma_gy", "sigma_gx", "sigma_u", "delta", "sigma_eps"});
  return out;
}

Eigen::VectorXd Theta::to_vector() const {
  const int p = n_covariates();
  Eigen::VectorXd v(9 + 2 * p);
  v << alpha0, alpha1, alpha_z, beta0, beta1, beta_z, sigma_gy, sigma_gx, sigma_u, delta,
      sigma_eps;
  return v;
}

Theta Theta::from_vector(const Eigen::VectorXd& v, int p) {
  if (v.size() != 9 + 2 * p) throw InputError("theta vector has the wrong length");
  Theta t;
  t.alpha0 = v(0);
  t.alpha1 = v(1);
  t.alpha_z = v.segment(2, p);
  t.beta0 = v(2 + p);
  t.beta1 = v(3 + p);
  t.beta_z = v.segment(4 + p, p);
  t.sigma_gy = v(4 + 2 * p);
  t.sigma_gx = v(5 + 2 * p);
  t.sigma_u = v(6 + 2 * p);
  t.delta = v(7 + 2 * p);
  t.sigma_eps = v(8 + 2 * p);
  return t;
}

Theta reference_theta(double alpha0, double alpha1) {
  Theta t;
  t.alpha0 = alpha0;
  t.alpha1 = alpha1;
  t.beta0 = 3.5;
  t.beta1 = 0.2;
  t.sigma_gx = 2.0;
  t.sigma_gy = std::sqrt(3.0);
  t.sigma_u = std::sqrt(2.0);
  t.delta = 1.0;
  t.sigma_eps = std::sqrt(2.0);
  return t;
}

Eigen::MatrixXd FamilyData::relationship() const {
  const int n = size();
  Eigen::MatrixXd r = Eigen::MatrixXd::Identity(n, n);
  if (sibship) {
    r.setConstant(0.5);
    r.diagonal().setOnes();
  }
  return r;
}

std::vector<FamilyData> prepare_family(const Family& family, GeneticMode mode,
                                       std::vector<std::string>* warnings) {
  const genetics::FamilyStructure s = genetics::analyze_structure(family);
  auto warn = [&](const Individual& m, const std::string& why) {
    if (warnings) warnings->push_back("family " + family.id + ": member " + m.id + " " + why);
  };
  auto usable = [&](const Individual& m) {
    if (!m.primary) {
      warn(m, "dropped (missing primary phenotype)");
      return false;
    }
    for (double c : m.covariates) {
      if (std::isnan(c)) {
        warn(m, "dropped (missing covariate)");
        return false;
      }
    }
    if (mode == GeneticMode::score && !m.genotype) {
      warn(m, "dropped (missing score)");
      return false;
    }
    return true;
  };
  const std::size_t p = family.members.empty() ? 0 : family.members.front().covariates.size();
  auto make_block = [&](const std::vector<int>& idx, bool sib) {
    FamilyData fd;
    fd.family_id = family.id;
    fd.sibship = sib;
    const auto n = static_cast<Eigen::Index>(idx.size());
    fd.x.resize(n);
    fd.g.resize(n);
    fd.z.resize(n, static_cast<Eigen::Index>(p));
    for (Eigen::Index k = 0; k < n; ++k) {
      const Individual& m = family.members[idx[k]];
      if (m.covariates.size() != p) {
        throw InputError("family " + family.id + ": inconsistent covariate count");
      }
      fd.member_ids.push_back(m.id);
      fd.y.push_back(*m.primary);
      fd.x(k) = m.secondary.value_or(std::nan(""));
      fd.g(k) = m.genotype.value_or(std::nan(""));
      for (std::size_t c = 0; c < p; ++c) fd.z(k, static_cast<Eigen::Index>(c)) = m.covariates[c];
    }
    return fd;
  };

  std::vector<FamilyData> blocks;
  for (const auto& sib : s.sibships) {
    for (int parent : {sib.father, sib.mother}) {
      if (parent >= 0 && family.members[parent].primary) {
        throw TopologyError("family " + family.id + ": parent " + family.members[parent].id +
                            " has a primary phenotype; phenotyped parents are not supported");
      }
    }
    std::vector<int> idx;
    for (int c : sib.children) {
      if (usable(family.members[c])) idx.push_back(c);
    }
    if (idx.empty()) continue;
    FamilyData fd = make_block(idx, true);
    int genotyped = static_cast<int>(idx.size());
    for (int k = 0; k < 2; ++k) {
      const int parent = k == 0 ? sib.father : sib.mother;
      if (parent >= 0 && family.members[parent].genotype) {
        fd.parent_g[k] = *family.members[parent].genotype;
        ++genotyped;
      }
    }
    if (genotyped > kMaxGenotypedMembers) {
      throw TopologyError("family " + family.id + " has a sibship with " +
                          std::to_string(genotyped) + " genotyped members; at most " +
                          std::to_string(kMaxGenotypedMembers) + " are supported");
    }
    blocks.push_back(std::move(fd));
  }
  for (int f : s.founders) {
    if (usable(family.members[f])) blocks.push_back(make_block({f}, false));
  }
  return blocks;
}

std::vector<FamilyData> prepare_cohort(const Cohort& cohort, std::vector<std::string>* warnings) {
  std::vector<FamilyData> out;
  for (const Family& f : cohort.families) {
    auto blocks = prepare_family(f, cohort.genetic_mode, warnings);
    for (auto& b : blocks) out.push_back(std::move(b));
  }
  return out;
}

Eigen::MatrixXd assemble_covariance(const Theta& t, const Eigen::MatrixXd& r) {
  const Eigen::Index n = r.rows();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  const double su2 = t.sigma_u * t.sigma_u;
  Eigen::MatrixXd s(2 * n, 2 * n);
  s.topLeftCorner(n, n) = t.sigma_gy * t.sigma_gy * r + (su2 + 1.0) * id;
  s.bottomRightCorner(n, n) =
      t.sigma_gx * t.sigma_gx * r + (t.delta * t.delta * su2 + t.sigma_eps * t.sigma_eps) * id;
  s.topRightCorner(n, n) = t.sigma_gx * t.sigma_gy * r + t.delta * su2 * id;
  s.bottomLeftCorner(n, n) = s.topRightCorner(n, n).transpose();
  return s;
}

DerivedQuantities derived_quantities(const Theta& t) {
  const double gx2 = t.sigma_gx * t.sigma_gx;
  const double gy2 = t.sigma_gy * t.sigma_gy;
  const double su2 = t.sigma_u * t.sigma_u;
  const double var_x = gx2 + t.delta * t.delta * su2 + t.sigma_eps * t.sigma_eps;
  const double var_y = gy2 + su2 + 1.0;
  const double var_x_linear = gx2 + t.delta * su2 + t.sigma_eps * t.sigma_eps;
  if (!(var_x > 0.0) || !(var_x_linear > 0.0)) {
    throw NumericalError("derived quantities: zero total variance of X");
  }
  DerivedQuantities d;
  d.h2 = gx2 / var_x;
  d.h2_linear_delta = gx2 / var_x_linear;
  d.rho_x = 0.5 * gx2 / var_x;
  d.rho_y = 0.5 * gy2 / var_y;
  const double scale = std::sqrt(var_x * var_y);
  d.rho_xy = (t.sigma_gx * t.sigma_gy + t.delta * su2) / scale;
  d.rho_xy_cross = 0.5 * t.sigma_gx * t.sigma_gy / scale;
  return d;
}

Eigen::VectorXd primary_mean(const Theta& t, const FamilyData& fd, const Eigen::VectorXd& g) {
  check_covariates(t, fd);
  Eigen::VectorXd mu = Eigen::VectorXd::Constant(fd.size(), t.alpha0) + t.alpha1 * g;
  if (fd.z.cols() > 0) mu += fd.z * t.alpha_z;
  return mu;
}

mvnorm::ProbabilityEstimate primary_orthant(const Theta& t, const FamilyData& fd,
                                            const Eigen::VectorXd& g,
                                            const mvnorm::QmcOptions& options) {
  const Eigen::Index n = fd.size();
  const Eigen::MatrixXd cov = t.sigma_gy * t.sigma_gy * fd.relationship() +
                              (t.sigma_u * t.sigma_u + 1.0) * Eigen::MatrixXd::Identity(n, n);
  return mvnorm::rectangle_prob(mvnorm::Gaussian{primary_mean(t, fd, g), cov},
                                mvnorm::orthant(fd.y), options);
}

double log_numerator(const Theta& t, const FamilyData& fd, const GeneticModel& gm) {
  check_covariates(t, fd);
  if (gm.mode == GeneticMode::score) {
    check_score_model(gm.score);
    if (fd.g.hasNaN()) throw InputError("score mode requires observed scores");
    return log_joint_given_g(t, fd, fd.g) + log_score_density(fd, gm.score);
  }
  check_q(gm.q);
  std::vector<int> missing;
  for (int j = 0; j < fd.size(); ++j) {
    if (std::isnan(fd.g(j))) missing.push_back(j);
  }
  Eigen::VectorXd g = fd.g;
  if (missing.empty()) return log_joint_given_g(t, fd, g) + log_snp_genotype_prob(fd, gm.q, g);
  std::vector<double> terms;
  std::vector<int> code(missing.size(), 0);
  while (true) {
    for (std::size_t k = 0; k < missing.size(); ++k) g(missing[k]) = code[k];
    const double lg = log_snp_genotype_prob(fd, gm.q, g);
    if (std::isfinite(lg)) terms.push_back(log_joint_given_g(t, fd, g) + lg);
    std::size_t pos = 0;
    while (pos < code.size() && code[pos] == 2) code[pos++] = 0;
    if (pos == code.size()) break;
    ++code[pos];
  }
  return log_sum_exp(terms);
}

double log_denominator(const Theta& t, const FamilyData& fd, const GeneticModel& gm) {
  check_covariates(t, fd);
  if (gm.mode == GeneticMode::score) {
    check_score_model(gm.score);
    return log_denominator_score(t, fd, gm.score);
  }
  check_q(gm.q);
  return log_denominator_snp(t, fd, gm.q);
}

double family_loglik_snp(const Theta& t, const FamilyData& fd, double q) {
  const GeneticModel gm{GeneticMode::snp, q, {}};
  return log_numerator(t, fd, gm) - log_denominator(t, fd, gm);
}

double family_loglik_score(const Theta& t, const FamilyData& fd, const genetics::ScoreModel& sm) {
  const GeneticModel gm{GeneticMode::score, 0.3, sm};
  return log_numerator(t, fd, gm) - log_denominator(t, fd, gm);
}

double naive_loglik(const NaiveParams& p, const FamilyData& fd) {
  if (fd.z.cols() != p.beta_z.size()) {
    throw InputError("naive parameters do not match the covariate count");
  }
  std::vector<int> use;
  for (int j = 0; j < fd.size(); ++j) {
    if (!std::isnan(fd.x(j)) && !std::isnan(fd.g(j))) use.push_back(j);
  }
  if (use.empty()) return 0.0;
  const auto m = static_cast<Eigen::Index>(use.size());
  const double a = fd.sibship ? kSibLoading : 0.0;
  mvnorm::FactorGaussian law{
      Eigen::VectorXd(m),
      Eigen::VectorXd::Constant(m, p.sigma_eps * p.sigma_eps +
                                       p.sigma_gx * p.sigma_gx * (1.0 - a * a)),
      Eigen::VectorXd::Constant(m, p.sigma_gx * a)};
  Eigen::VectorXd x(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const int j = use[k];
    law.mean(k) = p.beta0 + p.beta1 * fd.g(j) + (fd.z.cols() > 0 ? fd.z.row(j).dot(p.beta_z) : 0.0);
    x(k) = fd.x(j);
  }
  return mvnorm::log_density(law, x);
}

CohortLikelihood::CohortLikelihood(std::vector<FamilyData> blocks, GeneticModel genetic,
                                   int threads)
    : blocks_(std::move(blocks)), genetic_(genetic), threads_(threads) {
  if (genetic_.mode == GeneticMode::snp) {
    check_q(genetic_.q);
  } else {
    check_score_model(genetic_.score);
  }
  std::map<std::vector<double>, std::size_t> slots;
  denominator_of_.resize(blocks_.size());
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const FamilyData& fd = blocks_[b];
    std::vector<std::vector<double>> rows;
    for (int j = 0; j < fd.size(); ++j) {
      std::vector<double> row = {static_cast<double>(fd.y[j])};
      for (Eigen::Index c = 0; c < fd.z.cols(); ++c) row.push_back(fd.z(j, c));
      rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end());
    std::vector<double> key = {fd.sibship ? 1.0 : 0.0, static_cast<double>(fd.size())};
    for (const auto& row : rows) key.insert(key.end(), row.begin(), row.end());
    auto [it, inserted] = slots.emplace(std::move(key), representatives_.size());
    if (inserted) representatives_.push_back(b);
    denominator_of_[b] = it->second;
  }
}

std::vector<double> CohortLikelihood::per_block(const Theta& theta) const {
  std::vector<double> den(representatives_.size());
  parallel_for(den.size(), threads_, [&](std::size_t s) {
    den[s] = log_denominator(theta, blocks_[representatives_[s]], genetic_);
  });
  std::vector<double> out(blocks_.size());
  parallel_for(out.size(), threads_, [&](std::size_t b) {
    out[b] = log_numerator(theta, blocks_[b], genetic_) - den[denominator_of_[b]];
  });
  return out;
}

double CohortLikelihood::operator()(const Theta& theta) const {
  double total = 0.0;
  for (double v : per_block(theta)) total += v;
  return total;
}

double CohortLikelihood::naive(const NaiveParams& params) const {
  double total = 0.0;
  for (const FamilyData& fd : blocks_) total += naive_loglik(params, fd);
  return total;
}

}  // namespace ascfam
