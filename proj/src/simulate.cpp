#include "ascfam/simulate.hpp"

#include <array>
#include <cmath>

#include "ascfam/error.hpp"
#include "ascfam/genetics.hpp"
#include "ascfam/parallel.hpp"

namespace ascfam {
namespace {

constexpr long kMinAttemptsBeforeAbort = 1000000;
constexpr double kMinAcceptance = 1e-6;
const std::array<double, 3> kLevels = {0.05, 0.01, 0.001};

double standard_logistic(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double u = 0.0;
  do {
    u = unif(rng);
  } while (u <= 0.0);
  return std::log(u / (1.0 - u));
}

int draw_genotype(const std::array<double, 3>& hwe, std::mt19937_64& rng) {
  std::discrete_distribution<int> d(hwe.begin(), hwe.end());
  return d(rng);
}

// One allele from a parent carrying `g` minor alleles.
int transmit(int g, std::mt19937_64& rng) {
  if (g != 1) return g / 2;
  return static_cast<int>(rng() >> 63);
}

void accumulate(QuantitySummary& q, const std::vector<double>& est, const std::vector<double>& se) {
  q.n = static_cast<int>(est.size());
  if (q.n == 0) {
    q.mean = q.sd = q.rmse = std::nan("");
    return;
  }
  double sum = 0.0;
  for (double v : est) sum += v;
  q.mean = sum / q.n;
  double ss = 0.0;
  double sq_err = 0.0;
  int covered = 0;
  q.n_with_se = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    ss += (est[i] - q.mean) * (est[i] - q.mean);
    sq_err += (est[i] - q.truth) * (est[i] - q.truth);
    if (std::isfinite(se[i])) {
      ++q.n_with_se;
      covered += std::abs(est[i] - q.truth) <= 1.959963984540054 * se[i];
    }
  }
  q.sd = std::sqrt(ss / q.n);
  q.rmse = std::sqrt(sq_err / q.n);
  q.coverage95 = q.n_with_se > 0 ? static_cast<double>(covered) / q.n_with_se : std::nan("");
}

}  // namespace

void Scenario::validate() const {
  if (n_replicates < 1) throw InputError("empty scenario: n_replicates must be at least 1");
  if (n_families < 1) throw InputError("n_families must be at least 1");
  if (family_size < 1 || family_size > kMaxGenotypedMembers) {
    throw InputError("family_size must be in [1, " + std::to_string(kMaxGenotypedMembers) + "]");
  }
  if (ascertainment_min_cases < 0 || ascertainment_min_cases > family_size) {
    throw InputError("ascertainment_min_cases must be in [0, family_size]");
  }
  if (!(maf > 0.0 && maf < 1.0)) throw InputError("maf outside (0,1)");
  if (theta_true.n_covariates() != 0 || theta_true.beta_z.size() != 0) {
    throw InputError("simulated scenarios do not support covariates");
  }
  if (theta_true.sigma_gy < 0 || theta_true.sigma_gx < 0 || theta_true.sigma_u < 0 ||
      theta_true.sigma_eps < 0) {
    throw InputError("standard deviations in theta_true must be non-negative");
  }
  if (threads < 0) throw InputError("threads must be non-negative");
  fit_options.validate();
}

SimulatedFamily generate_family(const Scenario& s, std::mt19937_64& rng,
                                const std::string& family_id) {
  const Theta& t = s.theta_true;
  const int n = s.family_size;
  std::normal_distribution<double> normal;

  std::vector<double> g(n);
  if (s.mode == GeneticMode::snp) {
    const auto hwe = genetics::hwe_probs(s.maf);
    const int father = draw_genotype(hwe, rng);
    const int mother = draw_genotype(hwe, rng);
    for (int j = 0; j < n; ++j) g[j] = transmit(father, rng) + transmit(mother, rng);
  } else {
    const double shared = normal(rng);
    for (int j = 0; j < n; ++j) g[j] = std::sqrt(0.5) * (shared + normal(rng));
  }

  SimulatedFamily out;
  out.y_star.resize(n);
  out.family.id = family_id;
  const double family_factor = normal(rng);
  for (int j = 0; j < n; ++j) {
    const double b = std::sqrt(0.5) * family_factor + std::sqrt(0.5) * normal(rng);
    const double u = normal(rng);
    const double e_y = s.link == Link::probit ? normal(rng) : standard_logistic(rng);
    const double e_x = normal(rng);
    const double ystar = t.alpha0 + t.alpha1 * g[j] + t.sigma_gy * b + t.sigma_u * u + e_y;
    const double x = t.beta0 + t.beta1 * g[j] + t.sigma_gx * b + t.delta * t.sigma_u * u +
                     t.sigma_eps * e_x;
    out.y_star(j) = ystar;
    Individual ind;
    ind.id = family_id + "_" + std::to_string(j + 1);
    ind.father_id = family_id + "_father";
    ind.mother_id = family_id + "_mother";
    ind.primary = ystar > 0.0 ? 1 : 0;
    ind.secondary = x;
    ind.genotype = g[j];
    out.family.members.push_back(std::move(ind));
  }
  out.family.relationship = relationship_matrix(out.family);
  return out;
}

bool ascertain(const Family& family, int min_cases) {
  int cases = 0;
  for (const Individual& ind : family.members) {
    if (!ind.primary) throw InputError("ascertainment needs Y for every member");
    cases += *ind.primary;
  }
  return cases >= min_cases;
}

SimulatedCohort generate_cohort(const Scenario& s, std::mt19937_64& rng) {
  s.validate();
  SimulatedCohort out;
  out.cohort.genetic_mode = s.mode;
  long affected = 0;
  long generated_members = 0;
  while (static_cast<int>(out.cohort.families.size()) < s.n_families) {
    const std::string id = "F" + std::to_string(out.cohort.families.size() + 1);
    SimulatedFamily sf = generate_family(s, rng, id);
    ++out.attempts;
    for (const Individual& ind : sf.family.members) affected += *ind.primary;
    generated_members += s.family_size;
    if (ascertain(sf.family, s.ascertainment_min_cases)) {
      out.cohort.families.push_back(std::move(sf.family));
    }
    if (out.attempts >= kMinAttemptsBeforeAbort &&
        static_cast<double>(out.cohort.families.size()) / out.attempts < kMinAcceptance) {
      throw NumericalError("ascertainment acceptance rate below 1e-6; scenario is pathological");
    }
  }
  out.acceptance_rate = static_cast<double>(s.n_families) / out.attempts;
  out.prevalence = static_cast<double>(affected) / generated_members;

  if (s.mode == GeneticMode::score) {
    double sum = 0.0;
    double sq = 0.0;
    long n = 0;
    for (const Family& f : out.cohort.families) {
      for (const Individual& ind : f.members) {
        sum += *ind.genotype;
        sq += *ind.genotype * *ind.genotype;
        ++n;
      }
    }
    const double mean = sum / n;
    const double sd = n > 1 ? std::sqrt((sq - n * mean * mean) / (n - 1)) : 0.0;
    if (!(sd > 0.0)) throw NumericalError("simulated scores have zero spread");
    for (Family& f : out.cohort.families) {
      for (Individual& ind : f.members) ind.genotype = (*ind.genotype - mean) / sd;
    }
  }
  return out;
}

std::mt19937_64 replicate_rng(std::uint64_t master_seed, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                    static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(index)};
  return std::mt19937_64(seq);
}

ReplicateResult run_replicate(const Scenario& s, int index) {
  ReplicateResult r;
  r.index = index;
  std::mt19937_64 rng = replicate_rng(s.master_seed, index);
  const SimulatedCohort sim = generate_cohort(s, rng);
  r.acceptance_rate = sim.acceptance_rate;
  r.prevalence = sim.prevalence;

  FitOptions options = s.fit_options;
  options.mode = s.mode;
  options.threads = 1;
  PreparedCohort data;
  try {
    data = prepare(sim.cohort, options);
  } catch (const Error& e) {
    r.methods["retrospective"].error = e.what();
    if (s.fit_naive_too) r.methods["naive"].error = e.what();
    return r;
  }

  auto run_method = [&](const std::string& name, auto&& full_fit, auto&& null_fit) {
    MethodReplicate& m = r.methods[name];
    try {
      m.fit = full_fit();
      if (s.lrt) {
        const FitResult null = null_fit(m.fit);
        m.lrt = lrt(m.fit, null, 1);
      }
      m.ok = true;
    } catch (const Error& e) {
      m.ok = false;
      m.error = e.what();
    }
  };
  FitOptions null_options = options;
  null_options.fixed_beta1 = 0.0;
  null_options.compute_se = false;
  run_method(
      "retrospective", [&] { return fit(data, options); },
      [&](const FitResult& full) {
        Theta start = full.theta_hat;
        start.beta1 = 0.0;
        return fit(data, null_options, start);
      });
  if (s.fit_naive_too) {
    run_method(
        "naive", [&] { return fit_naive(data, options); },
        [&](const FitResult&) { return fit_naive(data, null_options); });
  }
  return r;
}

SummaryMetrics summarize(const Scenario& s, const std::vector<ReplicateResult>& reps) {
  SummaryMetrics out;
  out.n_replicates = static_cast<int>(reps.size());
  const Eigen::VectorXd truth = s.theta_true.to_vector();
  const std::vector<std::string> names = s.theta_true.names({});
  std::map<std::string, double> true_value;
  for (std::size_t i = 0; i < names.size(); ++i) true_value[names[i]] = truth(i);
  true_value["h2"] = derived_quantities(s.theta_true).h2;

  for (const ReplicateResult& r : reps) {
    out.mean_prevalence += r.prevalence;
    out.mean_acceptance_rate += r.acceptance_rate;
  }
  if (!reps.empty()) {
    out.mean_prevalence /= reps.size();
    out.mean_acceptance_rate /= reps.size();
  }

  std::vector<std::string> methods = {"retrospective"};
  if (s.fit_naive_too) methods.push_back("naive");
  for (const std::string& method : methods) {
    MethodSummary ms;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> values;
    std::vector<std::string> order;
    std::map<double, int> rejections;
    for (const ReplicateResult& r : reps) {
      const auto it = r.methods.find(method);
      if (it == r.methods.end() || !it->second.ok) {
        ++ms.n_failed;
        continue;
      }
      const MethodReplicate& m = it->second;
      ++ms.n_ok;
      if (!m.fit.converged) ++ms.n_nonconverged;
      auto add = [&](const std::string& name, double est, double se) {
        auto [slot, inserted] = values.try_emplace(name);
        if (inserted) order.push_back(name);
        slot->second.first.push_back(est);
        slot->second.second.push_back(se);
      };
      for (const ParameterEstimate& p : m.fit.parameters) {
        if (!p.fixed) add(p.name, p.estimate, p.se);
      }
      add("h2", m.fit.derived.h2, m.fit.derived_se.h2);
      if (m.lrt) {
        ++ms.n_lrt;
        for (double level : kLevels) rejections[level] += m.lrt->p_value < level;
      }
    }
    for (const std::string& name : order) {
      QuantitySummary q;
      const auto t = true_value.find(name);
      q.truth = t != true_value.end() ? t->second : std::nan("");
      accumulate(q, values[name].first, values[name].second);
      ms.quantities[name] = q;
    }
    for (double level : kLevels) {
      ms.rejection[level] =
          ms.n_lrt > 0 ? static_cast<double>(rejections[level]) / ms.n_lrt : std::nan("");
    }
    out.methods[method] = std::move(ms);
  }
  return out;
}

ScenarioResult run_scenario(const Scenario& s) {
  s.validate();
  ScenarioResult out;
  out.replicates.resize(s.n_replicates);
  parallel_for(static_cast<std::size_t>(s.n_replicates), s.threads,
               [&](std::size_t i) { out.replicates[i] = run_replicate(s, static_cast<int>(i)); });
  out.summary = summarize(s, out.replicates);
  return out;
}

}  // namespace ascfam
