#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "ascfam/error.hpp"
#include "ascfam/genetics.hpp"
#include "ascfam/jointmodel.hpp"
#include "ascfam/normal.hpp"
#include "ascfam/quadrature.hpp"

namespace {

using namespace ascfam;
using Eigen::MatrixXd;
using Eigen::VectorXd;

const double kNaN = std::nan("");

FamilyData make_block(bool sib, std::vector<int> y, std::vector<double> x, std::vector<double> g,
                      MatrixXd z = MatrixXd()) {
  FamilyData fd;
  fd.family_id = "F";
  fd.sibship = sib;
  const auto n = static_cast<Eigen::Index>(y.size());
  for (Eigen::Index j = 0; j < n; ++j) fd.member_ids.push_back("m" + std::to_string(j));
  fd.y = std::move(y);
  fd.x = Eigen::Map<VectorXd>(x.data(), n);
  fd.g = Eigen::Map<VectorXd>(g.data(), n);
  fd.z = z.size() ? z : MatrixXd(n, 0);
  return fd;
}

Theta with_covariates(Theta t, VectorXd az, VectorXd bz) {
  t.alpha_z = std::move(az);
  t.beta_z = std::move(bz);
  return t;
}

// Dense oracle for log P(X_obs = x, Y = y | G = g): assemble the joint
// covariance, condition Y* on the observed X, integrate the orthant.
double dense_log_joint(const Theta& t, const FamilyData& fd, const VectorXd& g,
                       const mvnorm::QmcOptions& qmc = {}) {
  const int n = fd.size();
  const MatrixXd s = assemble_covariance(t, fd.relationship());
  VectorXd mean(2 * n);
  mean.head(n) = primary_mean(t, fd, g);
  for (int j = 0; j < n; ++j) {
    mean(n + j) = t.beta0 + t.beta1 * g(j) + (fd.z.cols() ? fd.z.row(j).dot(t.beta_z) : 0.0);
  }
  std::vector<int> keep;  // Y* block plus observed X
  for (int j = 0; j < n; ++j) keep.push_back(j);
  std::vector<int> obs;
  for (int j = 0; j < n; ++j) {
    if (!std::isnan(fd.x(j))) {
      obs.push_back(static_cast<int>(keep.size()));
      keep.push_back(n + j);
    }
  }
  const auto m = static_cast<Eigen::Index>(keep.size());
  mvnorm::Gaussian joint{VectorXd(m), MatrixXd(m, m)};
  for (Eigen::Index a = 0; a < m; ++a) {
    joint.mean(a) = mean(keep[a]);
    for (Eigen::Index b = 0; b < m; ++b) joint.cov(a, b) = s(keep[a], keep[b]);
  }
  double log_px = 0.0;
  mvnorm::Gaussian cond = joint;
  if (!obs.empty()) {
    const auto k = static_cast<Eigen::Index>(obs.size());
    VectorXd xs(k);
    mvnorm::Gaussian xlaw{VectorXd(k), MatrixXd(k, k)};
    for (Eigen::Index a = 0; a < k; ++a) {
      xs(a) = fd.x(keep[obs[a]] - n);
      xlaw.mean(a) = joint.mean(obs[a]);
      for (Eigen::Index b = 0; b < k; ++b) xlaw.cov(a, b) = joint.cov(obs[a], obs[b]);
    }
    log_px = mvnorm::log_density(xlaw, xs);
    cond = mvnorm::condition(joint, obs, xs);
  }
  return log_px + std::log(mvnorm::rectangle_prob(cond, mvnorm::orthant(fd.y), qmc).probability);
}

// Sibship genotype law through the genetics module (implicit parents).
Family sibship_family(int n) {
  Family f;
  f.id = "S";
  for (int j = 0; j < n; ++j) {
    Individual ind;
    ind.id = "m" + std::to_string(j);
    ind.father_id = "P";
    ind.mother_id = "M";
    f.members.push_back(ind);
  }
  f.relationship = relationship_matrix(f);
  return f;
}

double log_genotype_prob(const FamilyData& fd, double q, const VectorXd& g) {
  if (!fd.sibship) return std::log(genetics::hwe_probs(q)[static_cast<int>(g(0))]);
  const auto s = genetics::analyze_structure(sibship_family(fd.size()));
  std::vector<int> members(fd.size());
  std::vector<int> codes(fd.size());
  for (int j = 0; j < fd.size(); ++j) {
    members[j] = j;
    codes[j] = static_cast<int>(g(j));
  }
  return std::log(genetics::genotype_prob(s, q, members, codes));
}

TEST(Covariance, ReferenceParametersSiblingPair) {
  const Theta t = reference_theta(-1.645, 0.5);
  const MatrixXd r = make_block(true, {1, 1}, {0, 0}, {0, 0}).relationship();
  const MatrixXd s = assemble_covariance(t, r);
  EXPECT_NEAR(s(0, 0), 6.0, 1e-14);
  EXPECT_NEAR(s(0, 1), 1.5, 1e-14);
  EXPECT_NEAR(s(2, 2), 8.0, 1e-14);
  EXPECT_NEAR(s(2, 3), 2.0, 1e-14);
  EXPECT_NEAR(s(0, 2), 2.0 * std::sqrt(3.0) + 2.0, 1e-14);
  EXPECT_NEAR(s(0, 3), std::sqrt(3.0), 1e-14);
  EXPECT_EQ(s, s.transpose());
}

TEST(Covariance, DegenerateCases) {
  Theta t;
  t.sigma_eps = 1.5;
  const MatrixXd r = make_block(true, {1, 0, 1}, {0, 0, 0}, {0, 0, 0}).relationship();
  MatrixXd expected = MatrixXd::Zero(6, 6);
  expected.diagonal() << 1, 1, 1, 2.25, 2.25, 2.25;
  EXPECT_EQ(assemble_covariance(t, r), expected);

  const Theta ref = reference_theta(-1.645, 0.5);
  const MatrixXd unrelated = assemble_covariance(ref, MatrixXd::Identity(2, 2));
  EXPECT_EQ(unrelated(0, 1), 0.0);
  EXPECT_EQ(unrelated(0, 3), 0.0);
  EXPECT_EQ(unrelated(2, 3), 0.0);
}

TEST(Derived, ReferenceParameters) {
  const DerivedQuantities d = derived_quantities(reference_theta(-1.645, 0.5));
  EXPECT_NEAR(d.h2, 0.5, 1e-15);
  EXPECT_NEAR(d.h2_linear_delta, 0.5, 1e-15);
  EXPECT_NEAR(d.rho_xy, (2.0 * std::sqrt(3.0) + 2.0) / std::sqrt(48.0), 1e-15);
  EXPECT_NEAR(d.rho_xy, 0.7887, 1e-4);
  EXPECT_NEAR(d.rho_x, 0.25, 1e-15);
  EXPECT_NEAR(d.rho_y, 0.25, 1e-15);
  EXPECT_NEAR(d.rho_xy_cross, std::sqrt(3.0) / std::sqrt(48.0), 1e-15);

  Theta t = reference_theta(0, 0);
  t.delta = 2.0;
  const DerivedQuantities e = derived_quantities(t);
  EXPECT_NEAR(e.h2, 4.0 / (4.0 + 8.0 + 2.0), 1e-15);
  EXPECT_NEAR(e.h2_linear_delta, 4.0 / (4.0 + 4.0 + 2.0), 1e-15);
  Theta zero;
  zero.sigma_eps = 0.0;
  EXPECT_THROW(derived_quantities(zero), NumericalError);
}

TEST(PrimaryOrthant, SingleMemberClosedForms) {
  Theta t;
  const FamilyData fd = make_block(false, {1}, {0.0}, {1.0});
  EXPECT_NEAR(primary_orthant(t, fd, fd.g).probability, 0.5, 1e-15);
  t.alpha0 = -2.326;
  EXPECT_NEAR(primary_orthant(t, fd, fd.g).probability, 0.01, 1e-5);
}

// Simulates sibships under the model; returns the empirical frequency of
// the ordered pattern `y` given fixed genotypes (or random ones when g is
// empty, with parents drawn from HWE(q)).
double simulated_pattern_frequency(const Theta& t, const std::vector<int>& y,
                                   const std::vector<int>& fixed_g, double q, int draws,
                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::bernoulli_distribution allele(q);
  const int n = static_cast<int>(y.size());
  int hits = 0;
  std::vector<int> g(n);
  for (int d = 0; d < draws; ++d) {
    if (fixed_g.empty()) {
      const int parental[4] = {allele(rng), allele(rng), allele(rng), allele(rng)};
      for (int j = 0; j < n; ++j) {
        g[j] = parental[rng() & 1] + parental[2 + (rng() & 1)];
      }
    } else {
      g = fixed_g;
    }
    const double shared = z(rng);
    bool match = true;
    for (int j = 0; j < n && match; ++j) {
      const double b = std::sqrt(0.5) * shared + std::sqrt(0.5) * z(rng);
      const double ystar = t.alpha0 + t.alpha1 * g[j] + t.sigma_gy * b + t.sigma_u * z(rng) + z(rng);
      match = (ystar > 0) == (y[j] == 1);
    }
    hits += match;
  }
  return static_cast<double>(hits) / draws;
}

TEST(PrimaryOrthant, SiblingPairMatchesSimulation) {
  const Theta t = reference_theta(-1.645, 0.5);
  const FamilyData fd = make_block(true, {1, 1}, {0, 0}, {1, 2});
  const double p = primary_orthant(t, fd, fd.g).probability;
  const double freq = simulated_pattern_frequency(t, {1, 1}, {1, 2}, 0.3, 1000000, 17);
  EXPECT_NEAR(p, freq, 2e-3);
}

TEST(Loglik, NoRandomEffectSingleFounderClosedForm) {
  Theta t;
  t.alpha0 = -0.7;
  t.alpha1 = 0.4;
  t.beta0 = 3.5;
  t.beta1 = 0.2;
  t.sigma_eps = 1.3;
  const double q = 0.3;
  const auto hwe = genetics::hwe_probs(q);
  for (int y : {0, 1}) {
    for (int g : {0, 1, 2}) {
      const double x = 2.9;
      const FamilyData fd = make_block(false, {y}, {x}, {static_cast<double>(g)});
      const double s = y == 1 ? 1.0 : -1.0;
      double den = 0.0;
      for (int h = 0; h < 3; ++h) den += hwe[h] * normal::cdf(s * (t.alpha0 + t.alpha1 * h));
      const double expected = std::log(normal::pdf((x - t.beta0 - t.beta1 * g) / t.sigma_eps) /
                                       t.sigma_eps) +
                              normal::log_cdf(s * (t.alpha0 + t.alpha1 * g)) + std::log(hwe[g]) -
                              std::log(den);
      EXPECT_NEAR(family_loglik_snp(t, fd, q), expected, 1e-10) << y << " " << g;
    }
  }
}

TEST(Loglik, NumeratorMatchesDenseConditioningForSiblingPairs) {
  const double q = 0.3;
  std::mt19937_64 rng(23);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 20; ++trial) {
    Theta t = reference_theta(-1.645 + 0.5 * z(rng), 0.5 * z(rng));
    t.sigma_gy = std::abs(1.5 * z(rng));
    t.sigma_gx = std::abs(1.5 * z(rng)) + 0.1;
    t.sigma_u = std::abs(z(rng));
    t.delta = z(rng);
    t.sigma_eps = 0.5 + std::abs(z(rng));
    const std::vector<int> y = {static_cast<int>(rng() % 2), static_cast<int>(rng() % 2)};
    const std::vector<double> x = {3.5 + 3 * z(rng), trial % 3 == 0 ? kNaN : 3.5 + 3 * z(rng)};
    const std::vector<double> g = {static_cast<double>(rng() % 3), static_cast<double>(rng() % 3)};
    const FamilyData fd = make_block(true, y, x, g);
    const GeneticModel gm{GeneticMode::snp, q, {}};
    const double expected = dense_log_joint(t, fd, fd.g) + log_genotype_prob(fd, q, fd.g);
    EXPECT_NEAR(log_numerator(t, fd, gm), expected, 1e-8) << trial;
  }
}

TEST(Loglik, NumeratorMatchesDenseQmcForLargerSibships) {
  const Theta t = reference_theta(-1.645, 0.5);
  const FamilyData fd =
      make_block(true, {1, 1, 0, 1, 0}, {5.0, kNaN, 1.0, 4.2, 3.0}, {1, 0, 2, 1, 0});
  mvnorm::QmcOptions qmc;
  qmc.accuracy = 1e-7;
  qmc.max_points = 1 << 18;
  const double expected = dense_log_joint(t, fd, fd.g, qmc) + log_genotype_prob(fd, 0.3, fd.g);
  EXPECT_NEAR(log_numerator(t, fd, {GeneticMode::snp, 0.3, {}}), expected, 1e-5);
}

TEST(Loglik, DenominatorMatchesGenotypeEnumeration) {
  const double q = 0.3;
  for (double alpha1 : {0.0, 0.5, 1.5}) {
    const Theta t = reference_theta(-1.645, alpha1);
    for (const auto& y : {std::vector<int>{1, 1}, std::vector<int>{1, 0}, std::vector<int>{0, 0}}) {
      const FamilyData fd = make_block(true, y, {0, 0}, {0, 0});
      const auto dist = genetics::family_genotype_dist(sibship_family(2), q);
      double expected = 0.0;
      for (std::size_t k = 0; k < dist.probabilities.size(); ++k) {
        const VectorXd g = Eigen::Vector2d(dist.configurations[k][0], dist.configurations[k][1]);
        expected += dist.probabilities[k] * primary_orthant(t, fd, g).probability;
      }
      EXPECT_NEAR(log_denominator(t, fd, {GeneticMode::snp, q, {}}), std::log(expected), 1e-9);
    }
  }
}

TEST(Loglik, DenominatorMatchesSimulatedPatternFrequency) {
  const Theta t = reference_theta(-1.645, 0.5);
  const std::vector<int> y = {1, 1, 0, 0, 0};
  const FamilyData fd = make_block(true, y, {0, 0, 0, 0, 0}, {0, 0, 0, 0, 0});
  const double p = std::exp(log_denominator(t, fd, {GeneticMode::snp, 0.3, {}}));
  const int draws = 1000000;
  const double freq = simulated_pattern_frequency(t, y, {}, 0.3, draws, 29);
  const double se = std::sqrt(p * (1 - p) / draws);
  EXPECT_LT(std::abs(freq - p), 3 * se) << p << " vs " << freq;
}

TEST(Loglik, DenominatorsSumToOneOverPatterns) {
  const double q = 0.3;
  Theta t = reference_theta(-1.645, 0.5);
  for (int n : {1, 3, 5}) {
    for (bool sib : {true, false}) {
      if (!sib && n > 1) continue;
      for (GeneticMode mode : {GeneticMode::snp, GeneticMode::score}) {
        const GeneticModel gm{mode, q, {0.1, 1.2}};
        double total = 0.0;
        for (int pattern = 0; pattern < (1 << n); ++pattern) {
          std::vector<int> y(n);
          for (int j = 0; j < n; ++j) y[j] = (pattern >> j) & 1;
          const FamilyData fd =
              make_block(sib, y, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0));
          total += std::exp(log_denominator(t, fd, gm));
        }
        EXPECT_NEAR(total, 1.0, 4 * n * 1e-9) << n;
      }
    }
  }
}

TEST(Loglik, NumeratorIntegratesToDenominator) {
  // sum_g E_{X ~ proposal}[P(X, Y, g) / proposal(X)] = P(Y).
  const double q = 0.3;
  const Theta t = reference_theta(-1.645, 0.5);
  const std::vector<int> y = {1, 0};
  const GeneticModel gm{GeneticMode::snp, q, {}};
  const double den = std::exp(log_denominator(t, make_block(true, y, {0, 0}, {0, 0}), gm));
  const mvnorm::Gaussian proposal{VectorXd::Constant(2, 3.5),
                                  assemble_covariance(t, Eigen::Matrix2d::Identity())
                                          .bottomRightCorner(2, 2) *
                                      1.5};
  std::mt19937_64 rng(31);
  const int draws = 40000;
  const MatrixXd xs = mvnorm::sample(proposal, rng, draws);
  std::vector<double> w(draws, 0.0);
  for (int g0 = 0; g0 < 3; ++g0) {
    for (int g1 = 0; g1 < 3; ++g1) {
      for (int d = 0; d < draws; ++d) {
        const VectorXd x = xs.row(d).transpose();
        const FamilyData fd = make_block(true, y, {x(0), x(1)}, {double(g0), double(g1)});
        w[d] += std::exp(log_numerator(t, fd, gm) - mvnorm::log_density(proposal, x));
      }
    }
  }
  double mean = 0.0;
  for (double v : w) mean += v;
  mean /= draws;
  double var = 0.0;
  for (double v : w) var += (v - mean) * (v - mean);
  const double se = std::sqrt(var / (draws - 1) / draws);
  EXPECT_LT(std::abs(mean - den), 4 * se) << mean << " vs " << den << " se " << se;
}

TEST(Loglik, DifferenceFromNaiveIsFlatInSecondaryParametersWithoutAscertainmentLink) {
  // With alpha1 = sigma_u = sigma_gy = 0, Y is independent of (X, G) and the
  // retrospective likelihood equals the naive one plus terms free of the
  // secondary-model parameters.
  Theta t = reference_theta(-1.645, 0.0);
  t.sigma_u = 0.0;
  t.sigma_gy = 0.0;
  const FamilyData fd = make_block(true, {1, 1, 0}, {4.1, 2.0, 3.3}, {1, 0, 2});
  auto diff = [&](const Eigen::Vector4d& p) {
    Theta s = t;
    s.beta0 = p(0);
    s.beta1 = p(1);
    s.sigma_gx = p(2);
    s.sigma_eps = p(3);
    NaiveParams np{p(0), p(1), VectorXd(), p(2), p(3)};
    return family_loglik_snp(s, fd, 0.3) - naive_loglik(np, fd);
  };
  const Eigen::Vector4d p0(t.beta0, t.beta1, t.sigma_gx, t.sigma_eps);
  for (int k = 0; k < 4; ++k) {
    Eigen::Vector4d up = p0;
    Eigen::Vector4d down = p0;
    const double h = 1e-4;
    up(k) += h;
    down(k) -= h;
    EXPECT_NEAR((diff(up) - diff(down)) / (2 * h), 0.0, 1e-6) << k;
  }
}

FamilyData covariate_block() {
  MatrixXd z(4, 2);
  z << 0.3, 1, -1.2, 0, 0.8, 1, 0.3, 1;
  return make_block(true, {1, 0, 1, 1}, {4.0, kNaN, 2.2, 5.1}, {1, 0, kNaN, 2}, z);
}

TEST(Loglik, PermutationEquivariance) {
  const Theta t = with_covariates(reference_theta(-1.645, 0.5), Eigen::Vector2d(0.3, -0.2),
                                  Eigen::Vector2d(0.5, 1.0));
  const FamilyData fd = covariate_block();
  const double base_snp = family_loglik_snp(t, fd, 0.3);
  const double base_score = family_loglik_score(t, make_block(true, fd.y, {4.0, kNaN, 2.2, 5.1},
                                                              {1.1, -0.3, 0.2, 0.9}, fd.z),
                                                {0.0, 1.0});
  std::vector<int> perm = {0, 1, 2, 3};
  while (std::next_permutation(perm.begin(), perm.end())) {
    FamilyData p = fd;
    const std::vector<double> scores = {1.1, -0.3, 0.2, 0.9};
    std::vector<double> ps(4);
    for (int j = 0; j < 4; ++j) {
      p.y[j] = fd.y[perm[j]];
      p.x(j) = fd.x(perm[j]);
      p.g(j) = fd.g(perm[j]);
      p.z.row(j) = fd.z.row(perm[j]);
      ps[j] = scores[perm[j]];
    }
    EXPECT_NEAR(family_loglik_snp(t, p, 0.3), base_snp, 1e-10);
    FamilyData s = p;
    s.g = Eigen::Map<VectorXd>(ps.data(), 4);
    EXPECT_NEAR(family_loglik_score(t, s, {0.0, 1.0}), base_score, 1e-10);
  }
}

TEST(Loglik, NoGeneticEffectsMakeGenotypeEnterOnlyThroughItsLaw) {
  Theta t = reference_theta(-1.645, 0.0);
  t.beta1 = 0.0;
  const GeneticModel gm{GeneticMode::snp, 0.3, {}};
  double reference = std::nan("");
  for (int g0 = 0; g0 < 3; ++g0) {
    for (int g1 = 0; g1 < 3; ++g1) {
      const FamilyData fd = make_block(true, {1, 0}, {2.0, 4.5}, {double(g0), double(g1)});
      const double v = log_numerator(t, fd, gm) - log_genotype_prob(fd, 0.3, fd.g);
      if (std::isnan(reference)) reference = v;
      EXPECT_NEAR(v, reference, 1e-12);
    }
  }
}

TEST(Loglik, MissingGenotypeIsSummedOut) {
  const Theta t = reference_theta(-1.645, 0.5);
  const GeneticModel gm{GeneticMode::snp, 0.3, {}};
  const FamilyData partial = make_block(true, {1, 1, 0}, {4.0, 2.0, 1.0}, {1, kNaN, 0});
  double total = 0.0;
  for (int g = 0; g < 3; ++g) {
    FamilyData full = partial;
    full.g(1) = g;
    total += std::exp(log_numerator(t, full, gm));
  }
  EXPECT_NEAR(log_numerator(t, partial, gm), std::log(total), 1e-12);
  // An unrelated founder with unknown genotype.
  const FamilyData founder = make_block(false, {1}, {4.0}, {kNaN});
  double f_total = 0.0;
  for (int g = 0; g < 3; ++g) {
    FamilyData full = founder;
    full.g(0) = g;
    f_total += std::exp(log_numerator(t, full, gm));
  }
  EXPECT_NEAR(log_numerator(t, founder, gm), std::log(f_total), 1e-12);
}

TEST(Loglik, ObservedParentGenotypeConditionsTheSibshipLaw) {
  const Theta t = reference_theta(-1.645, 0.5);
  FamilyData fd = make_block(true, {1, 0}, {4.0, 2.0}, {2, 1});
  fd.parent_g = {2.0, kNaN};
  // P(father = 2, children = (2, 1)) = hwe(2) sum_m hwe(m) T(2|m,2) T(1|m,2).
  const auto hwe = genetics::hwe_probs(0.3);
  double pg = 0.0;
  for (int m = 0; m < 3; ++m) {
    pg += hwe[2] * hwe[m] * genetics::transmission_prob(2, m, 2) *
          genetics::transmission_prob(1, m, 2);
  }
  EXPECT_NEAR(log_numerator(t, fd, {GeneticMode::snp, 0.3, {}}),
              dense_log_joint(t, fd, fd.g) + std::log(pg), 1e-8);
}

TEST(ScoreMode, DenominatorWithoutGeneticEffectUsesPrimaryCovariance) {
  const Theta t = reference_theta(-1.645, 0.0);
  const FamilyData fd = make_block(true, {1, 0}, {0, 0}, {0.3, -1});
  const double expected = primary_orthant(t, fd, VectorXd::Zero(2)).probability;
  EXPECT_NEAR(std::exp(log_denominator(t, fd, {GeneticMode::score, 0.3, {0.0, 1.0}})), expected,
              1e-10);
}

TEST(ScoreMode, SingleSymmetricMember) {
  Theta t;
  t.alpha1 = 0.5;
  const FamilyData fd = make_block(false, {1}, {0}, {0.7});
  EXPECT_NEAR(std::exp(log_denominator(t, fd, {GeneticMode::score, 0.3, {0.0, 1.0}})), 0.5,
              1e-14);
}

TEST(ScoreMode, DenominatorMatchesQuadratureOverScores) {
  const Theta t = reference_theta(-1.645, 0.5);
  const genetics::ScoreModel sm{0.2, 1.3};
  const auto& rule = hermite_rule(40);
  // G = mu + sigma L w with L the Cholesky factor of the sibling relationship.
  const Eigen::Matrix2d l = Eigen::Matrix2d(Eigen::Matrix2d{{1.0, 0.5}, {0.5, 1.0}}.llt().matrixL());
  for (const auto& y : {std::vector<int>{1, 1}, std::vector<int>{0, 1}}) {
    const FamilyData fd = make_block(true, y, {0, 0}, {0, 0});
    double expected = 0.0;
    for (std::size_t a = 0; a < rule.nodes.size(); ++a) {
      for (std::size_t b = 0; b < rule.nodes.size(); ++b) {
        const Eigen::Vector2d w(std::sqrt(2.0) * rule.nodes[a], std::sqrt(2.0) * rule.nodes[b]);
        const VectorXd g = VectorXd::Constant(2, sm.mu_g) + sm.sigma_g * l * w;
        expected += std::exp(rule.log_weights[a] + rule.log_weights[b]) / std::numbers::pi *
                    primary_orthant(t, fd, g).probability;
      }
    }
    EXPECT_NEAR(std::exp(log_denominator(t, fd, {GeneticMode::score, 0.3, sm})), expected, 1e-9);
  }
}

TEST(ScoreMode, NumeratorMatchesDenseOracle) {
  const Theta t = reference_theta(-1.645, 0.5);
  const genetics::ScoreModel sm{0.0, 1.0};
  FamilyData fd = make_block(true, {1, 0}, {4.0, 1.5}, {0.4, -1.1});
  fd.parent_g = {kNaN, 0.2};
  // Score law over (mother, child1, child2).
  const Eigen::Matrix3d r{{1.0, 0.5, 0.5}, {0.5, 1.0, 0.5}, {0.5, 0.5, 1.0}};
  const double lg =
      mvnorm::log_density(mvnorm::Gaussian{VectorXd::Zero(3), r}, Eigen::Vector3d(0.2, 0.4, -1.1));
  EXPECT_NEAR(log_numerator(t, fd, {GeneticMode::score, 0.3, sm}),
              dense_log_joint(t, fd, fd.g) + lg, 1e-8);
}

TEST(Naive, ReducesToKnownDensities) {
  const FamilyData fd = make_block(true, {1, 0, 1}, {4.0, 2.0, kNaN}, {1, 0, 2});
  NaiveParams p{3.5, 0.2, VectorXd(), 0.0, 1.4};
  double expected = 0.0;
  for (int j = 0; j < 2; ++j) {
    expected += std::log(normal::pdf((fd.x(j) - 3.5 - 0.2 * fd.g(j)) / 1.4) / 1.4);
  }
  EXPECT_NEAR(naive_loglik(p, fd), expected, 1e-13);

  const FamilyData one = make_block(false, {0}, {2.5}, {1});
  EXPECT_NEAR(naive_loglik(p, one), std::log(normal::pdf((2.5 - 3.7) / 1.4) / 1.4), 1e-14);

  const Theta ref = reference_theta(-1.645, 0.5);
  const FamilyData five =
      make_block(true, {1, 1, 0, 0, 0}, {4.0, 2.0, 3.1, 5.5, 0.2}, {1, 0, 2, 1, 1});
  NaiveParams q{ref.beta0, ref.beta1, VectorXd(), ref.sigma_gx, ref.sigma_eps};
  const MatrixXd cov = ref.sigma_gx * ref.sigma_gx * five.relationship() +
                       ref.sigma_eps * ref.sigma_eps * MatrixXd::Identity(5, 5);
  const VectorXd mean = VectorXd::Constant(5, ref.beta0) + ref.beta1 * five.g;
  EXPECT_NEAR(naive_loglik(q, five), mvnorm::log_density(mvnorm::Gaussian{mean, cov}, five.x),
              1e-12);
}

TEST(Prepare, SplitsFamiliesIntoBlocksAndDropsMissingPrimary) {
  const std::string csv =
      "family_id,individual_id,father_id,mother_id,sex,primary,secondary,genotype\n"
      "F,dad,,,M,,,1\n"
      "F,mum,,,F,,,\n"
      "F,c1,dad,mum,F,1,4.0,1\n"
      "F,c2,dad,mum,M,0,,2\n"
      "F,c3,dad,mum,M,,3.0,0\n"
      "F,partner,,,F,0,2.5,\n";
  std::istringstream in(csv);
  const Cohort cohort = parse_pedigree(in, GeneticMode::snp);
  std::vector<std::string> warnings;
  const auto blocks = prepare_cohort(cohort, &warnings);
  ASSERT_EQ(blocks.size(), 2u);
  EXPECT_TRUE(blocks[0].sibship);
  EXPECT_EQ(blocks[0].member_ids, (std::vector<std::string>{"c1", "c2"}));
  EXPECT_EQ(blocks[0].parent_g[0], 1.0);
  EXPECT_TRUE(std::isnan(blocks[0].parent_g[1]));
  EXPECT_TRUE(std::isnan(blocks[0].x(1)));
  EXPECT_FALSE(blocks[1].sibship);
  EXPECT_EQ(blocks[1].member_ids, std::vector<std::string>{"partner"});
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("c3"), std::string::npos);
}

TEST(Prepare, RejectsPhenotypedParentsAndOversizedSibships) {
  const std::string header =
      "family_id,individual_id,father_id,mother_id,sex,primary,secondary,genotype\n";
  std::istringstream a(header + "F,dad,,,M,1,,\nF,mum,,,F,,,\nF,c,dad,mum,F,1,1,1\n");
  EXPECT_THROW(prepare_cohort(parse_pedigree(a, GeneticMode::snp), nullptr), TopologyError);
  std::string big = header;
  for (int k = 0; k < 9; ++k) big += "F,c" + std::to_string(k) + ",P,M,U,1,1,1\n";
  std::istringstream b(big);
  EXPECT_THROW(prepare_cohort(parse_pedigree(b, GeneticMode::snp), nullptr), TopologyError);
}

TEST(CohortLikelihood, SumsBlocksAndIsThreadInvariant) {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> z;
  std::vector<FamilyData> blocks;
  for (int b = 0; b < 30; ++b) {
    std::vector<int> y(5);
    std::vector<double> x(5);
    std::vector<double> g(5);
    for (int j = 0; j < 5; ++j) {
      y[j] = j < 2 ? 1 : static_cast<int>(rng() % 2);
      x[j] = 3.5 + 3 * z(rng);
      g[j] = static_cast<double>(rng() % 3);
    }
    blocks.push_back(make_block(true, y, x, g));
  }
  blocks.push_back(make_block(false, {0}, {2.0}, {1}));
  const Theta t = reference_theta(-1.645, 0.5);
  const CohortLikelihood one(blocks, {GeneticMode::snp, 0.3, {}}, 1);
  const CohortLikelihood four(blocks, {GeneticMode::snp, 0.3, {}}, 4);
  double expected = 0.0;
  for (const FamilyData& fd : blocks) expected += family_loglik_snp(t, fd, 0.3);
  EXPECT_NEAR(one(t), expected, 1e-9);
  EXPECT_EQ(one(t), four(t));
  EXPECT_LE(one.n_distinct_denominators(), 5u);  // 2..5 cases among 5 sibs, plus one founder
  NaiveParams np{3.5, 0.2, VectorXd(), 2.0, 1.4};
  double naive = 0.0;
  for (const FamilyData& fd : blocks) naive += naive_loglik(np, fd);
  EXPECT_NEAR(one.naive(np), naive, 1e-10);
  EXPECT_THROW(CohortLikelihood(blocks, {GeneticMode::snp, 1.5, {}}), InputError);
}

}  // namespace
