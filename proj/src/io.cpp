#include "ascfam/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>

#include "ascfam/error.hpp"

namespace ascfam::io {
namespace {

constexpr double kWaldZ = 1.959963984540054;

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json derived_json(const DerivedQuantities& d) {
  return Json{{"h2", number(d.h2)},
              {"h2_linear_delta", number(d.h2_linear_delta)},
              {"rho_x", number(d.rho_x)},
              {"rho_y", number(d.rho_y)},
              {"rho_xy", number(d.rho_xy)},
              {"rho_xy_cross", number(d.rho_xy_cross)}};
}

const char* mode_name(GeneticMode m) { return m == GeneticMode::snp ? "snp" : "score"; }

// Typed access to an object member; `where` names the enclosing object in
// error messages.
class Reader {
 public:
  Reader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw InputError(where_ + " must be a JSON object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> known(keys.begin(), keys.end());
    for (const auto& item : j_.items()) {
      if (!known.count(item.key())) {
        throw InputError("unknown key '" + item.key() + "' in " + where_);
      }
    }
  }

  const Json* find(const char* key) const {
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const char* key, int& out) const {
    if (const Json* v = find(key)) {
      if (!v->is_number_integer()) fail(key, "an integer");
      const auto value = v->get<long long>();
      if (value < std::numeric_limits<int>::min() || value > std::numeric_limits<int>::max()) {
        fail(key, "an integer in range");
      }
      out = static_cast<int>(value);
    }
  }
  void get(const char* key, std::uint64_t& out) const {
    if (const Json* v = find(key)) {
      if (!v->is_number_unsigned()) fail(key, "a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const char* key, double& out) const {
    if (const Json* v = find(key)) {
      if (!v->is_number()) fail(key, "a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, bool& out) const {
    if (const Json* v = find(key)) {
      if (!v->is_boolean()) fail(key, "true or false");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) const {
    if (const Json* v = find(key)) {
      if (!v->is_string()) fail(key, "a string");
      out = v->get<std::string>();
    }
  }
  void get(const char* key, std::optional<double>& out) const {
    if (const Json* v = find(key)) {
      if (v->is_null()) {
        out.reset();
        return;
      }
      if (!v->is_number()) fail(key, "a number or null");
      out = v->get<double>();
    }
  }

 private:
  [[noreturn]] void fail(const char* key, const char* expected) const {
    throw InputError("'" + std::string(key) + "' in " + where_ + " must be " + expected);
  }

  const Json& j_;
  std::string where_;
};

}  // namespace

std::string version() { return ASCFAM_VERSION; }

std::string format_number(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  if (v == std::trunc(v) && std::abs(v) < 1e15) {
    std::snprintf(buf, sizeof buf, "%.0f", v);
    return std::string(buf) == "-0" ? "0" : buf;
  }
  for (int precision = 1; precision < 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json fit_report(const FitResult& fit, const std::optional<LrtResult>& lrt) {
  Json params = Json::object();
  for (const ParameterEstimate& p : fit.parameters) {
    params[p.name] = Json{{"estimate", number(p.estimate)},
                          {"se", number(p.se)},
                          {"boundary", p.boundary},
                          {"fixed", p.fixed}};
  }
  Json out{{"model", fit.model},
           {"mode", mode_name(fit.genetic.mode)},
           {"parameters", std::move(params)},
           {"loglik", number(fit.loglik)},
           {"converged", fit.converged},
           {"iterations", fit.iterations},
           {"evaluations", fit.evaluations},
           {"hessian_ok", fit.hessian_ok},
           {"derived", derived_json(fit.derived)},
           {"derived_se", derived_json(fit.derived_se)}};
  if (lrt) {
    out["lrt"] = Json{{"statistic", number(lrt->statistic)},
                      {"df", lrt->df},
                      {"p", number(lrt->p_value)}};
  }
  if (fit.genetic.mode == GeneticMode::snp) {
    out["q_used"] = number(fit.genetic.q);
  } else {
    out["q_used"] = nullptr;
    out["score_model"] =
        Json{{"mu_g", number(fit.genetic.score.mu_g)}, {"sigma_g", number(fit.genetic.score.sigma_g)}};
  }
  out["warnings"] = fit.warnings;
  return out;
}

Json theta_to_json(const Theta& theta) {
  Json out = Json::object();
  const auto names = theta.names({});
  const Eigen::VectorXd v = theta.to_vector();
  for (std::size_t i = 0; i < names.size(); ++i) out[names[i]] = v(static_cast<Eigen::Index>(i));
  return out;
}

Theta theta_from_json(const Json& j, const Theta& defaults) {
  if (defaults.n_covariates() != 0) throw InputError("theta with covariates is not configurable");
  Reader r(j, "theta_true");
  const auto names = defaults.names({});
  Eigen::VectorXd v = defaults.to_vector();
  std::set<std::string> known(names.begin(), names.end());
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) throw InputError("unknown key '" + item.key() + "' in theta_true");
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    double value = v(static_cast<Eigen::Index>(i));
    r.get(names[i].c_str(), value);
    v(static_cast<Eigen::Index>(i)) = value;
  }
  return Theta::from_vector(v, 0);
}

Json scenario_to_json(const Scenario& s) {
  const FitOptions& f = s.fit_options;
  Json fit_options{{"delta_constrained", f.delta_constrained},
                   {"maf", f.maf ? Json(*f.maf) : Json(nullptr)},
                   {"score", f.score ? Json{{"mu_g", f.score->mu_g}, {"sigma_g", f.score->sigma_g}}
                                     : Json(nullptr)},
                   {"max_iterations", f.max_iterations},
                   {"grad_tolerance", f.grad_tolerance},
                   {"loglik_rel_tolerance", f.loglik_rel_tolerance}};
  return Json{{"n_families", s.n_families},
              {"family_size", s.family_size},
              {"ascertainment_min_cases", s.ascertainment_min_cases},
              {"theta_true", theta_to_json(s.theta_true)},
              {"link", s.link == Link::probit ? "probit" : "logit"},
              {"genetic", Json{{"mode", mode_name(s.mode)}, {"maf", s.maf}}},
              {"n_replicates", s.n_replicates},
              {"master_seed", s.master_seed},
              {"fit_options", std::move(fit_options)},
              {"fit_naive_too", s.fit_naive_too},
              {"lrt", s.lrt},
              {"threads", s.threads}};
}

Scenario scenario_from_json(const Json& j) {
  Scenario s;
  Reader r(j, "scenario");
  r.allow({"n_families", "family_size", "ascertainment_min_cases", "theta_true", "link", "genetic",
           "n_replicates", "master_seed", "fit_options", "fit_naive_too", "lrt", "threads"});
  r.get("n_families", s.n_families);
  r.get("family_size", s.family_size);
  r.get("ascertainment_min_cases", s.ascertainment_min_cases);
  if (const Json* t = r.find("theta_true")) s.theta_true = theta_from_json(*t, s.theta_true);

  std::string link = "probit";
  r.get("link", link);
  if (link == "probit") {
    s.link = Link::probit;
  } else if (link == "logit") {
    s.link = Link::logit;
  } else {
    throw InputError("'link' must be \"probit\" or \"logit\"");
  }

  if (const Json* g = r.find("genetic")) {
    Reader gr(*g, "genetic");
    gr.allow({"mode", "maf"});
    std::string mode = "snp";
    gr.get("mode", mode);
    if (mode == "snp") {
      s.mode = GeneticMode::snp;
    } else if (mode == "score") {
      s.mode = GeneticMode::score;
    } else {
      throw InputError("'mode' in genetic must be \"snp\" or \"score\"");
    }
    gr.get("maf", s.maf);
  }

  r.get("n_replicates", s.n_replicates);
  r.get("master_seed", s.master_seed);

  if (const Json* f = r.find("fit_options")) {
    Reader fr(*f, "fit_options");
    fr.allow({"delta_constrained", "maf", "score", "max_iterations", "grad_tolerance",
              "loglik_rel_tolerance"});
    FitOptions& o = s.fit_options;
    fr.get("delta_constrained", o.delta_constrained);
    fr.get("maf", o.maf);
    if (const Json* sc = fr.find("score"); sc && !sc->is_null()) {
      Reader sr(*sc, "fit_options.score");
      sr.allow({"mu_g", "sigma_g"});
      genetics::ScoreModel m;
      sr.get("mu_g", m.mu_g);
      sr.get("sigma_g", m.sigma_g);
      o.score = m;
    }
    fr.get("max_iterations", o.max_iterations);
    fr.get("grad_tolerance", o.grad_tolerance);
    fr.get("loglik_rel_tolerance", o.loglik_rel_tolerance);
  }
  s.fit_options.mode = s.mode;

  r.get("fit_naive_too", s.fit_naive_too);
  r.get("lrt", s.lrt);
  r.get("threads", s.threads);
  s.validate();
  return s;
}

Json parse_json(std::istream& in, const std::string& what) {
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed JSON in " + what + ": " + e.what());
  }
}

Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return parse_json(in, path);
}

void write_summary_csv(std::ostream& out, const SummaryMetrics& summary) {
  auto row = [&](const std::string& method, const std::string& quantity,
                 const std::string& statistic, double value) {
    out << method << ',' << quantity << ',' << statistic << ',' << format_number(value) << '\n';
  };
  out << "method,quantity,statistic,value\n";
  row("scenario", "replicates", "count", summary.n_replicates);
  row("scenario", "prevalence", "mean", summary.mean_prevalence);
  row("scenario", "acceptance_rate", "mean", summary.mean_acceptance_rate);
  for (const char* method : {"retrospective", "naive"}) {
    const auto it = summary.methods.find(method);
    if (it == summary.methods.end()) continue;
    const MethodSummary& m = it->second;
    row(method, "fits", "ok", m.n_ok);
    row(method, "fits", "failed", m.n_failed);
    row(method, "fits", "nonconverged", m.n_nonconverged);
    for (const auto& [name, q] : m.quantities) {
      row(method, name, "truth", q.truth);
      row(method, name, "n", q.n);
      row(method, name, "mean", q.mean);
      row(method, name, "bias", q.mean - q.truth);
      row(method, name, "sd", q.sd);
      row(method, name, "rmse", q.rmse);
      row(method, name, "coverage95", q.coverage95);
      row(method, name, "n_with_se", q.n_with_se);
    }
    row(method, "lrt_beta1", "n", m.n_lrt);
    for (const auto& [level, rate] : m.rejection) {
      row(method, "lrt_beta1", "rejection_" + format_number(level), rate);
    }
  }
}

void write_replicates_csv(std::ostream& out, const Scenario& scenario,
                          const std::vector<ReplicateResult>& replicates) {
  const auto names = scenario.theta_true.names({});
  const Eigen::VectorXd truth_vec = scenario.theta_true.to_vector();
  auto truth_of = [&](const std::string& name) {
    if (name == "h2") return derived_quantities(scenario.theta_true).h2;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return truth_vec(static_cast<Eigen::Index>(i));
    }
    return std::nan("");
  };

  out << "replicate,method,parameter,estimate,se,covered,lrt_p,converged\n";
  for (const ReplicateResult& r : replicates) {
    for (const char* method : {"retrospective", "naive"}) {
      const auto it = r.methods.find(method);
      if (it == r.methods.end()) continue;
      const MethodReplicate& m = it->second;
      if (!m.ok) {
        out << r.index << ',' << method << ",fit_failed,,,,,0\n";
        continue;
      }
      const std::string lrt_p = m.lrt ? format_number(m.lrt->p_value) : "";
      const char* converged = m.fit.converged ? "1" : "0";
      auto emit = [&](const std::string& name, double est, double se) {
        const double t = truth_of(name);
        std::string covered;
        if (std::isfinite(se) && std::isfinite(t)) {
          covered = std::abs(est - t) <= kWaldZ * se ? "1" : "0";
        }
        out << r.index << ',' << method << ',' << name << ',' << format_number(est) << ','
            << format_number(se) << ',' << covered << ',' << lrt_p << ',' << converged << '\n';
      };
      for (const ParameterEstimate& p : m.fit.parameters) {
        if (!p.fixed) emit(p.name, p.estimate, p.se);
      }
      emit("h2", m.fit.derived.h2, m.fit.derived_se.h2);
    }
  }
}

}  // namespace ascfam::io
