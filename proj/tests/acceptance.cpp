// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any selected criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ascfam/genetics.hpp"
#include "ascfam/io.hpp"
#include "ascfam/jointmodel.hpp"
#include "ascfam/mvnorm.hpp"
#include "ascfam/normal.hpp"
#include "ascfam/simulate.hpp"

namespace {

using namespace ascfam;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [violated]");
  }
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string interval(double lo, double hi) { return "[" + fmt(lo) + ", " + fmt(hi) + "]"; }

class Runner {
 public:
  Runner(int threads, std::string out_dir) : threads_(threads), out_dir_(std::move(out_dir)) {}

  const SummaryMetrics& run(const std::string& name, Scenario s) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    s.threads = threads_;
    std::cerr << "[acceptance] scenario " << name << ": " << io::scenario_to_json(s).dump() << "\n";
    const auto start = std::chrono::steady_clock::now();
    const ScenarioResult result = run_scenario(s);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << "[acceptance] scenario " << name << " finished in " << fmt(secs, 5) << " s\n";
    if (!out_dir_.empty()) {
      const std::filesystem::path dir = std::filesystem::path(out_dir_) / name;
      std::filesystem::create_directories(dir);
      std::ofstream summary(dir / "summary.csv");
      io::write_summary_csv(summary, result.summary);
      std::ofstream reps(dir / "replicates.csv");
      io::write_replicates_csv(reps, s, result.replicates);
      std::ofstream(dir / "scenario.resolved.json") << io::scenario_to_json(s).dump(2) << "\n";
    }
    return cache_.emplace(name, result.summary).first->second;
  }

 private:
  int threads_;
  std::string out_dir_;
  std::map<std::string, SummaryMetrics> cache_;
};

const QuantitySummary& quantity(const SummaryMetrics& m, const std::string& method,
                                const std::string& name) {
  return m.methods.at(method).quantities.at(name);
}

std::string fit_counts(const SummaryMetrics& m, const std::string& method) {
  const MethodSummary& s = m.methods.at(method);
  return method + " fits ok/failed/nonconverged " + std::to_string(s.n_ok) + "/" +
         std::to_string(s.n_failed) + "/" + std::to_string(s.n_nonconverged);
}

// Common-disease design with a SNP of MAF 0.3 and reference variances.
Scenario base_scenario(std::uint64_t seed) {
  Scenario s;
  s.n_families = 400;
  s.family_size = 5;
  s.ascertainment_min_cases = 2;
  s.theta_true = reference_theta(-1.645, 0.5);
  s.link = Link::probit;
  s.mode = GeneticMode::snp;
  s.maf = 0.3;
  s.master_seed = seed;
  s.fit_naive_too = true;
  s.lrt = false;
  return s;
}

Scenario bias_scenario() {
  Scenario s = base_scenario(101);
  s.n_families = 200;
  s.n_replicates = 100;
  return s;
}

Scenario type1_scenario() {
  Scenario s = base_scenario(202);
  s.theta_true.beta1 = 0.0;
  s.n_replicates = 1000;
  s.lrt = true;
  return s;
}

Scenario logit_scenario() {
  Scenario s = base_scenario(303);
  s.link = Link::logit;
  s.n_replicates = 50;
  s.fit_naive_too = false;
  return s;
}

Scenario score_scenario() {
  Scenario s = base_scenario(404);
  s.mode = GeneticMode::score;
  s.fit_options.mode = GeneticMode::score;
  s.n_replicates = 50;
  return s;
}

Outcome criterion1(Runner& r) {
  const SummaryMetrics& m = r.run("bias", bias_scenario());
  const double mean = quantity(m, "retrospective", "beta1").mean;
  Outcome o;
  o.check(mean >= 0.16 && mean <= 0.24,
          "retrospective mean beta1 " + fmt(mean) + " in " + interval(0.16, 0.24));
  o.detail += "; " + fit_counts(m, "retrospective");
  return o;
}

Outcome criterion2(Runner& r) {
  const SummaryMetrics& m = r.run("bias", bias_scenario());
  const double retro = quantity(m, "retrospective", "beta1").mean;
  const double naive = quantity(m, "naive", "beta1").mean;
  Outcome o;
  o.check(std::abs(naive - 0.2) > std::abs(retro - 0.2),
          "|naive bias| " + fmt(std::abs(naive - 0.2)) + " > |retrospective bias| " +
              fmt(std::abs(retro - 0.2)));
  o.check(naive < 0.2, "naive mean beta1 " + fmt(naive) + " < 0.2");
  return o;
}

Outcome criterion3(Runner& r) {
  const SummaryMetrics& m = r.run("bias", bias_scenario());
  const double retro = quantity(m, "retrospective", "h2").mean;
  const double naive = quantity(m, "naive", "h2").mean;
  Outcome o;
  o.check(retro >= 0.42 && retro <= 0.58,
          "retrospective mean h2 " + fmt(retro) + " in " + interval(0.42, 0.58));
  o.check(naive < 0.30, "naive mean h2 " + fmt(naive) + " < 0.30");
  return o;
}

Outcome criterion4(Runner& r) {
  const SummaryMetrics& m = r.run("type1", type1_scenario());
  const MethodSummary& retro = m.methods.at("retrospective");
  const MethodSummary& naive = m.methods.at("naive");
  const double rr = retro.rejection.at(0.05);
  const double nr = naive.rejection.at(0.05);
  Outcome o;
  o.check(rr >= 0.032 && rr <= 0.070, "retrospective LRT rejection at 0.05 " + fmt(rr) + " in " +
                                          interval(0.032, 0.070) + " (n=" +
                                          std::to_string(retro.n_lrt) + ")");
  o.check(nr > 0.065, "naive LRT rejection at 0.05 " + fmt(nr) + " > 0.065 (n=" +
                          std::to_string(naive.n_lrt) + ")");
  o.detail += "; " + fit_counts(m, "retrospective") + "; " + fit_counts(m, "naive");
  return o;
}

Outcome criterion5(Runner& r) {
  const SummaryMetrics& m = r.run("logit", logit_scenario());
  const double b1 = quantity(m, "retrospective", "beta1").mean;
  const double h2 = quantity(m, "retrospective", "h2").mean;
  Outcome o;
  o.check(b1 >= 0.15 && b1 <= 0.25, "mean beta1 " + fmt(b1) + " in " + interval(0.15, 0.25));
  o.check(h2 >= 0.45 && h2 <= 0.57, "mean h2 " + fmt(h2) + " in " + interval(0.45, 0.57));
  o.detail += "; " + fit_counts(m, "retrospective");
  return o;
}

Outcome criterion6(Runner& r) {
  const SummaryMetrics& m = r.run("score", score_scenario());
  const double retro = quantity(m, "retrospective", "beta1").mean;
  const double naive = quantity(m, "naive", "beta1").mean;
  Outcome o;
  o.check(retro >= 0.17 && retro <= 0.23,
          "retrospective mean beta1 " + fmt(retro) + " in " + interval(0.17, 0.23));
  o.check(naive < 0.15, "naive mean beta1 " + fmt(naive) + " < 0.15");
  o.detail += "; " + fit_counts(m, "retrospective");
  return o;
}

Outcome criterion8(Runner& r) {
  const SummaryMetrics& m = r.run("bias", bias_scenario());
  const QuantitySummary& q = quantity(m, "retrospective", "beta1");
  Outcome o;
  o.check(q.coverage95 >= 0.88 && q.coverage95 <= 0.99,
          "beta1 Wald 95% coverage " + fmt(q.coverage95) + " in " + interval(0.88, 0.99) +
              " (n with SE=" + std::to_string(q.n_with_se) + ")");
  return o;
}

// ---- criterion 7: oracle suites ----

mvnorm::Gaussian equicorrelated(int n, double rho) {
  mvnorm::Gaussian g;
  g.mean = VectorXd::Zero(n);
  g.cov = MatrixXd::Constant(n, n, rho);
  g.cov.diagonal().setOnes();
  return g;
}

mvnorm::Rectangle positive_orthant(int n) {
  return {VectorXd::Zero(n), VectorXd::Constant(n, std::numeric_limits<double>::infinity())};
}

Family sibship(int n) {
  Family f;
  f.id = "S";
  for (int j = 0; j < n; ++j) {
    Individual ind;
    ind.id = "s" + std::to_string(j);
    ind.father_id = "father";
    ind.mother_id = "mother";
    ind.primary = 0;
    f.members.push_back(ind);
  }
  f.relationship = relationship_matrix(f);
  return f;
}

FamilyData block(bool sib, std::vector<int> y, std::vector<double> x, std::vector<double> g) {
  FamilyData fd;
  fd.family_id = "F";
  fd.sibship = sib;
  const auto n = static_cast<Eigen::Index>(y.size());
  for (Eigen::Index j = 0; j < n; ++j) fd.member_ids.push_back("m" + std::to_string(j));
  fd.y = std::move(y);
  fd.x = Eigen::Map<VectorXd>(x.data(), n);
  fd.g = Eigen::Map<VectorXd>(g.data(), n);
  fd.z = MatrixXd(n, 0);
  return fd;
}

void oracle_mvnorm(Outcome& o) {
  const double one = mvnorm::rectangle_prob(equicorrelated(1, 0.0), positive_orthant(1)).probability;
  double worst = std::abs(one - 0.5);
  for (double rho : {-0.8, -0.3, 0.0, 0.5, 0.9}) {
    const double p = mvnorm::rectangle_prob(equicorrelated(2, rho), positive_orthant(2)).probability;
    worst = std::max(worst, std::abs(p - (0.25 + std::asin(rho) / (2 * std::numbers::pi))));
  }
  o.check(worst < 1e-12, "mvnorm closed forms max error " + fmt(worst, 3) + " < 1e-12");

  const mvnorm::Gaussian g = equicorrelated(5, 0.5);
  const double est = mvnorm::rectangle_prob(g, positive_orthant(5)).probability;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z;
  const MatrixXd L = mvnorm::cholesky(g.cov);
  constexpr long kDraws = 10'000'000;
  long hits = 0;
  VectorXd e(5);
  for (long i = 0; i < kDraws; ++i) {
    for (int j = 0; j < 5; ++j) e(j) = z(rng);
    hits += ((L * e).array() > 0.0).all() ? 1 : 0;
  }
  const double mc = static_cast<double>(hits) / kDraws;
  o.check(std::abs(est - mc) < 1e-4,
          "5-dim orthant " + fmt(est, 7) + " vs 1e7-draw MC " + fmt(mc, 7) + " within 1e-4");
}

void oracle_genetics(Outcome& o) {
  double worst_sum = 0.0;
  double worst_marginal = 0.0;
  for (double q : {0.05, 0.3, 0.5, 0.9}) {
    const auto hwe = genetics::hwe_probs(q);
    for (int n = 1; n <= kMaxGenotypedMembers; ++n) {
      const genetics::GenotypeDist d = genetics::family_genotype_dist(sibship(n), q);
      double total = 0.0;
      std::vector<std::array<double, 3>> marginal(n, {0.0, 0.0, 0.0});
      for (std::size_t c = 0; c < d.probabilities.size(); ++c) {
        total += d.probabilities[c];
        for (int j = 0; j < n; ++j) marginal[j][d.configurations[c][j]] += d.probabilities[c];
      }
      worst_sum = std::max(worst_sum, std::abs(total - 1.0));
      for (int j = 0; j < n; ++j) {
        for (int k = 0; k < 3; ++k) {
          worst_marginal = std::max(worst_marginal, std::abs(marginal[j][k] - hwe[k]));
        }
      }
    }
  }
  o.check(worst_sum < 1e-12, "genotype distributions sum to 1 (max error " + fmt(worst_sum, 3) + ")");
  o.check(worst_marginal < 1e-12,
          "sibling marginals equal HWE (max error " + fmt(worst_marginal, 3) + ")");
}

// Frequency of the Y pattern among simulated sibships drawn from the model.
double pattern_frequency(const Theta& t, const std::vector<int>& y, double q, int draws,
                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::bernoulli_distribution allele(q);
  const int n = static_cast<int>(y.size());
  int hits = 0;
  for (int d = 0; d < draws; ++d) {
    const int parent[4] = {allele(rng), allele(rng), allele(rng), allele(rng)};
    const double shared = z(rng);
    bool match = true;
    for (int j = 0; j < n && match; ++j) {
      const int g = parent[rng() & 1] + parent[2 + (rng() & 1)];
      const double b = std::sqrt(0.5) * (shared + z(rng));
      const double ystar = t.alpha0 + t.alpha1 * g + t.sigma_gy * b + t.sigma_u * z(rng) + z(rng);
      match = (ystar > 0) == (y[j] == 1);
    }
    hits += match;
  }
  return static_cast<double>(hits) / draws;
}

void oracle_jointmodel(Outcome& o) {
  const Theta ref = reference_theta(-1.645, 0.5);
  const std::vector<int> y = {1, 1, 0, 0, 0};
  const double p =
      std::exp(log_denominator(ref, block(true, y, {0, 0, 0, 0, 0}, {0, 0, 0, 0, 0}),
                               {GeneticMode::snp, 0.3, {}}));
  constexpr int kDraws = 1000000;
  const double freq = pattern_frequency(ref, y, 0.3, kDraws, 11);
  const double se = std::sqrt(p * (1 - p) / kDraws);
  o.check(std::abs(freq - p) < 3 * se, "denominator " + fmt(p, 6) + " vs simulated frequency " +
                                           fmt(freq, 6) + " within 3 SE (" + fmt(se, 2) + ")");

  // Single founder without random effects: probit, normal and HWE factors.
  Theta t;
  t.alpha0 = -0.7;
  t.alpha1 = 0.4;
  t.beta0 = 3.5;
  t.beta1 = 0.2;
  t.sigma_eps = 1.3;
  const auto hwe = genetics::hwe_probs(0.3);
  double worst = 0.0;
  for (int yy : {0, 1}) {
    const double s = yy == 1 ? 1.0 : -1.0;
    double den = 0.0;
    for (int h = 0; h < 3; ++h) den += hwe[h] * normal::cdf(s * (t.alpha0 + t.alpha1 * h));
    for (int g : {0, 1, 2}) {
      const double x = 2.9;
      const double expected = std::log(normal::pdf((x - t.beta0 - t.beta1 * g) / t.sigma_eps) /
                                       t.sigma_eps) +
                              std::log(normal::cdf(s * (t.alpha0 + t.alpha1 * g))) +
                              std::log(hwe[g]) - std::log(den);
      const double got = family_loglik_snp(t, block(false, {yy}, {x}, {double(g)}), 0.3);
      worst = std::max(worst, std::abs(got - expected));
    }
  }
  o.check(worst < 1e-10, "n=1 closed form max error " + fmt(worst, 3) + " < 1e-10");

  // Jointly permuting siblings leaves the log-likelihood unchanged.
  const double nan = std::nan("");
  const FamilyData fd = block(true, {1, 0, 1, 0}, {4.0, nan, 2.2, 5.1}, {1, 0, nan, 2});
  const FamilyData fs = block(true, {1, 0, 1, 0}, {4.0, nan, 2.2, 5.1}, {1.1, -0.3, 0.2, 0.9});
  const double base_snp = family_loglik_snp(ref, fd, 0.3);
  const double base_score = family_loglik_score(ref, fs, {0.0, 1.0});
  std::vector<int> perm = {0, 1, 2, 3};
  double drift = 0.0;
  while (std::next_permutation(perm.begin(), perm.end())) {
    FamilyData a = fd;
    FamilyData b = fs;
    for (int j = 0; j < 4; ++j) {
      a.y[j] = b.y[j] = fd.y[perm[j]];
      a.x(j) = b.x(j) = fd.x(perm[j]);
      a.g(j) = fd.g(perm[j]);
      b.g(j) = fs.g(perm[j]);
    }
    drift = std::max(drift, std::abs(family_loglik_snp(ref, a, 0.3) - base_snp));
    drift = std::max(drift, std::abs(family_loglik_score(ref, b, {0.0, 1.0}) - base_score));
  }
  o.check(drift < 1e-10, "permutation equivariance max change " + fmt(drift, 3) + " < 1e-10");
}

void oracle_determinism(Outcome& o) {
  Scenario s = base_scenario(5);
  s.n_families = 40;
  auto cohort_bytes = [&] {
    std::mt19937_64 rng = replicate_rng(s.master_seed, 3);
    std::ostringstream out;
    write_pedigree(out, generate_cohort(s, rng).cohort);
    return out.str();
  };
  o.check(cohort_bytes() == cohort_bytes(), "same seed gives byte-identical cohorts");
  const ReplicateResult a = run_replicate(s, 1);
  const ReplicateResult b = run_replicate(s, 1);
  const FitResult& fa = a.methods.at("retrospective").fit;
  const FitResult& fb = b.methods.at("retrospective").fit;
  o.check(fa.loglik == fb.loglik && fa.theta_hat.to_vector() == fb.theta_hat.to_vector(),
          "same seed gives identical fits");
}

Outcome criterion7(Runner&) {
  Outcome o;
  oracle_mvnorm(o);
  oracle_genetics(o);
  oracle_jointmodel(o);
  oracle_determinism(o);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  int threads = 0;
  std::string out_dir;
  app.add_option("--only", only, "Criteria to run (default all)")->delimiter(',');
  app.add_option("--threads", threads, "Replicate workers (0 = all cores)");
  app.add_option("--out-dir", out_dir, "Write per-scenario summary and replicate tables here");
  CLI11_PARSE(app, argc, argv);

  const std::map<int, std::function<Outcome(Runner&)>> criteria = {
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4},
      {5, criterion5}, {6, criterion6}, {7, criterion7}, {8, criterion8}};
  std::set<int> selected(only.begin(), only.end());
  if (selected.empty()) {
    for (const auto& [id, fn] : criteria) selected.insert(id);
  }
  std::cerr << "[acceptance] ascfam " << io::version()
            << "; expected wall time on one core: criterion 4 about two hours, criteria "
               "1-3, 5, 6 and 8 about 15 min together, criterion 7 under a minute\n";

  Runner runner(threads, out_dir);
  bool all = true;
  for (int id : selected) {
    const auto it = criteria.find(id);
    if (it == criteria.end()) {
      std::cerr << "unknown criterion " << id << "\n";
      return 2;
    }
    Outcome o;
    try {
      o = it->second(runner);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    all = all && o.pass;
    std::cout << "CRITERION " << id << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
              << std::endl;
  }
  return all ? 0 : 1;
}
