#include "ascfam/estimate.hpp"

#include <cmath>
#include <functional>
#include <limits>

#include <boost/math/special_functions/gamma.hpp>

#include "ascfam/error.hpp"
#include "ascfam/normal.hpp"
#include "ascfam/optimize.hpp"

namespace ascfam {
namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();
const double kLogFloor = std::log(ParameterLayout::kSdFloor);
constexpr double kHessianStep = 1e-3;
// Smallest accepted ratio of the extreme Hessian eigenvalues.
constexpr double kMinCurvatureRatio = 1e-9;
// Log-scale curvature below which an SD estimate counts as zero.
constexpr double kFlatCurvature = 1e-3;

// Offsets into Theta::to_vector() for a model with p covariates.
struct ThetaIndex {
  int p;
  int beta0() const { return 2 + p; }
  int beta1() const { return 3 + p; }
  int sigma_gy() const { return 4 + 2 * p; }
  int delta() const { return 7 + 2 * p; }
  int sigma_eps() const { return 8 + 2 * p; }
  int size() const { return 9 + 2 * p; }
};

bool at_floor(double u) { return u <= kLogFloor + 1e-9; }

// Optimization problem on the unconstrained coordinates u of a model whose
// natural parameters are `names`.
struct Problem {
  std::vector<std::string> names;
  std::vector<int> free;         // natural index of each u coordinate
  std::vector<bool> log_mapped;  // per u coordinate
  Objective objective;           // negative log-likelihood of u
  std::function<Theta(const Eigen::VectorXd&)> theta_of;
  std::function<Eigen::VectorXd(const Theta&)> natural_of;
};

DerivedQuantities nan_derived() { return {kNaN, kNaN, kNaN, kNaN, kNaN, kNaN}; }

Eigen::VectorXd derived_vector(const Theta& t) {
  const DerivedQuantities d = derived_quantities(t);
  Eigen::VectorXd v(6);
  v << d.h2, d.h2_linear_delta, d.rho_x, d.rho_y, d.rho_xy, d.rho_xy_cross;
  return v;
}

DerivedQuantities derived_from_vector(const Eigen::VectorXd& v) {
  return {v(0), v(1), v(2), v(3), v(4), v(5)};
}

// Fills estimates, boundary flags and (when the Hessian over the interior
// coordinates is positive definite) delta-method SEs.
void finish(FitResult& r, const Problem& pb, const Eigen::VectorXd& u_hat, bool compute_se) {
  r.theta_hat = pb.theta_of(u_hat);
  const Eigen::VectorXd natural = pb.natural_of(r.theta_hat);
  r.parameters.clear();
  for (std::size_t i = 0; i < pb.names.size(); ++i) {
    r.parameters.push_back({pb.names[i], natural(static_cast<Eigen::Index>(i)), kNaN, false, true});
  }
  std::vector<int> interior;
  for (std::size_t k = 0; k < pb.free.size(); ++k) {
    ParameterEstimate& pe = r.parameters[pb.free[k]];
    pe.fixed = false;
    if (pb.log_mapped[k] && at_floor(u_hat(static_cast<Eigen::Index>(k)))) {
      pe.boundary = true;
      pe.estimate = 0.0;
    } else {
      interior.push_back(static_cast<int>(k));
    }
  }
  try {
    r.derived = derived_quantities(r.theta_hat);
  } catch (const NumericalError&) {
    r.derived = nan_derived();
  }
  r.derived_se = nan_derived();
  r.hessian_ok = false;
  if (interior.empty() || !compute_se) return;

  const auto m = static_cast<Eigen::Index>(interior.size());
  auto embed = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd u = u_hat;
    for (Eigen::Index a = 0; a < m; ++a) u(interior[a]) = v(a);
    return u;
  };
  Eigen::VectorXd v_hat(m);
  for (Eigen::Index a = 0; a < m; ++a) v_hat(a) = u_hat(interior[a]);
  const Objective restricted = [&](const Eigen::VectorXd& v) { return pb.objective(embed(v)); };
  Eigen::MatrixXd hess;
  try {
    hess = central_hessian(restricted, v_hat, kHessianStep, &r.evaluations);
  } catch (const NumericalError&) {
    r.warnings.push_back("Hessian evaluation failed; standard errors withheld");
    return;
  }
  if (!hess.allFinite()) {
    r.warnings.push_back("Hessian is not finite; standard errors withheld");
    return;
  }
  // A log-mapped SD whose log-scale curvature vanishes sits at zero in all
  // but name; it joins the boundary set like a clamped one.
  std::vector<Eigen::Index> keep;
  for (Eigen::Index a = 0; a < m; ++a) {
    const int k = interior[a];
    if (pb.log_mapped[k] && hess(a, a) < kFlatCurvature) {
      ParameterEstimate& pe = r.parameters[pb.free[k]];
      pe.boundary = true;
      pe.estimate = 0.0;
    } else {
      keep.push_back(a);
    }
  }
  const auto mk = static_cast<Eigen::Index>(keep.size());
  if (mk == 0) return;
  Eigen::MatrixXd reduced(mk, mk);
  for (Eigen::Index a = 0; a < mk; ++a) {
    for (Eigen::Index b = 0; b < mk; ++b) reduced(a, b) = hess(keep[a], keep[b]);
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(reduced);
  const Eigen::VectorXd ev = eig.eigenvalues();
  if (eig.info() != Eigen::Success || !(ev(0) > kMinCurvatureRatio * ev(mk - 1))) {
    r.warnings.push_back("Hessian is singular or not positive definite; standard errors withheld");
    return;
  }
  const Eigen::MatrixXd cov =
      eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  r.hessian_ok = true;
  for (Eigen::Index a = 0; a < mk; ++a) {
    const int k = interior[keep[a]];
    const double se_u = std::sqrt(cov(a, a));
    ParameterEstimate& pe = r.parameters[pb.free[k]];
    pe.se = pb.log_mapped[k] ? pe.estimate * se_u : se_u;
  }

  // Delta method for the derived quantities.
  try {
    Eigen::MatrixXd jac(6, mk);
    for (Eigen::Index a = 0; a < mk; ++a) {
      const Eigen::Index c = keep[a];
      const double h = 1e-6 * (1.0 + std::abs(v_hat(c)));
      Eigen::VectorXd up = v_hat;
      Eigen::VectorXd down = v_hat;
      up(c) += h;
      down(c) -= h;
      jac.col(a) = (derived_vector(pb.theta_of(embed(up))) -
                    derived_vector(pb.theta_of(embed(down)))) /
                   (2.0 * h);
    }
    const Eigen::MatrixXd dcov = jac * cov * jac.transpose();
    r.derived_se = derived_from_vector(dcov.diagonal().cwiseMax(0.0).cwiseSqrt());
  } catch (const NumericalError&) {
  }
}

BfgsOptions bfgs_options(const FitOptions& o) {
  BfgsOptions b;
  b.max_iterations = o.max_iterations;
  b.grad_tolerance = o.grad_tolerance;
  b.rel_tolerance = o.loglik_rel_tolerance;
  return b;
}

FitResult run(const Problem& pb, const Eigen::VectorXd& u0, const FitOptions& options,
              FitResult r) {
  const BfgsResult br = minimize_bfgs(pb.objective, u0, bfgs_options(options));
  r.loglik = -br.value;
  r.converged = br.converged;
  r.iterations = br.iterations;
  r.evaluations = br.evaluations;
  if (!br.converged) r.warnings.push_back("optimizer did not converge: " + br.message);
  finish(r, pb, br.x, options.compute_se);
  return r;
}

// Ordinary least squares of X on (1, G, Z) over members with observed X and G.
Eigen::VectorXd ols(const std::vector<FamilyData>& blocks, double* rss, int* n_used) {
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> xs;
  for (const FamilyData& fd : blocks) {
    for (int j = 0; j < fd.size(); ++j) {
      if (std::isnan(fd.x(j)) || std::isnan(fd.g(j))) continue;
      Eigen::VectorXd row(2 + fd.z.cols());
      row << 1.0, fd.g(j), fd.z.row(j).transpose();
      rows.push_back(std::move(row));
      xs.push_back(fd.x(j));
    }
  }
  if (rows.empty()) throw InputError("no members with observed secondary phenotype and genotype");
  const auto n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index k = rows[0].size();
  Eigen::MatrixXd design(n, k);
  for (Eigen::Index i = 0; i < n; ++i) design.row(i) = rows[i].transpose();
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(xs.data(), n);
  const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(x);
  if (rss) *rss = (x - design * coef).squaredNorm();
  if (n_used) *n_used = static_cast<int>(n);
  return coef;
}

void check_tolerance(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) throw InputError(std::string(name) + " must be positive");
}

}  // namespace

void FitOptions::validate() const {
  check_tolerance(grad_tolerance, "grad_tolerance");
  check_tolerance(loglik_rel_tolerance, "loglik_rel_tolerance");
  if (max_iterations < 1) throw InputError("max_iterations must be at least 1");
  if (maf && !(*maf > 0.0 && *maf < 1.0)) throw InputError("maf outside (0,1)");
  if (score && !(score->sigma_g > 0.0)) throw InputError("score sigma_g must be positive");
  if (threads < 0) throw InputError("threads must be non-negative");
}

std::vector<int> ParameterLayout::free_indices() const {
  const ThetaIndex ix{n_covariates};
  std::vector<int> out;
  for (int i = 0; i < ix.size(); ++i) {
    if (i == ix.beta1() && fixed_beta1) continue;
    if (i == ix.delta() && !delta_free) continue;
    out.push_back(i);
  }
  return out;
}

bool ParameterLayout::is_log_mapped(int i) const {
  const ThetaIndex ix{n_covariates};
  return (i >= ix.sigma_gy() && i < ix.delta()) || i == ix.sigma_eps();
}

Eigen::VectorXd transform(const Theta& theta, const ParameterLayout& layout,
                          std::vector<bool>* floor_flags) {
  if (theta.n_covariates() != layout.n_covariates) {
    throw InputError("theta covariate count does not match the layout");
  }
  const Eigen::VectorXd v = theta.to_vector();
  const std::vector<int> free = layout.free_indices();
  Eigen::VectorXd u(static_cast<Eigen::Index>(free.size()));
  if (floor_flags) floor_flags->assign(free.size(), false);
  for (std::size_t k = 0; k < free.size(); ++k) {
    const double x = v(free[k]);
    if (!layout.is_log_mapped(free[k])) {
      u(static_cast<Eigen::Index>(k)) = x;
      continue;
    }
    if (x < 0.0) throw InputError("negative standard deviation cannot be log transformed");
    if (x <= ParameterLayout::kSdFloor) {
      u(static_cast<Eigen::Index>(k)) = kLogFloor;
      if (floor_flags) (*floor_flags)[k] = true;
    } else {
      u(static_cast<Eigen::Index>(k)) = std::log(x);
    }
  }
  return u;
}

Theta untransform(const Eigen::VectorXd& u, const ParameterLayout& layout) {
  const ThetaIndex ix{layout.n_covariates};
  const std::vector<int> free = layout.free_indices();
  if (u.size() != static_cast<Eigen::Index>(free.size())) {
    throw InputError("coordinate vector has the wrong length");
  }
  Eigen::VectorXd v = Eigen::VectorXd::Zero(ix.size());
  v(ix.beta1()) = layout.fixed_beta1.value_or(0.0);
  v(ix.delta()) = layout.fixed_delta;
  for (std::size_t k = 0; k < free.size(); ++k) {
    const double x = u(static_cast<Eigen::Index>(k));
    v(free[k]) = layout.is_log_mapped(free[k]) ? std::exp(std::max(x, kLogFloor)) : x;
  }
  return Theta::from_vector(v, layout.n_covariates);
}

const ParameterEstimate& FitResult::parameter(const std::string& name) const {
  for (const ParameterEstimate& p : parameters) {
    if (p.name == name) return p;
  }
  throw InputError("no parameter named " + name);
}

PreparedCohort prepare(const Cohort& cohort, const FitOptions& options) {
  options.validate();
  if (cohort.genetic_mode != options.mode) {
    throw InputError("cohort genetic mode does not match the fit mode");
  }
  PreparedCohort d;
  d.covariate_names = cohort.covariate_names;
  d.blocks = prepare_cohort(cohort, &d.warnings);
  if (d.blocks.empty()) throw InputError("no analysable families in the cohort");
  d.genetic.mode = options.mode;
  if (options.mode == GeneticMode::snp) {
    if (options.maf) {
      d.genetic.q = *options.maf;
    } else {
      const genetics::MafEstimate est = genetics::estimate_maf_controls(cohort);
      if (est.n_controls == 0) throw InputError("no genotyped controls to estimate the maf from");
      if (est.degenerate) throw InputError("maf estimated from controls is 0 or 1");
      d.genetic.q = est.q;
    }
  } else {
    d.genetic.score = options.score ? *options.score : genetics::estimate_score_moments(cohort);
  }
  return d;
}

Eigen::VectorXd probit_start(const std::vector<FamilyData>& blocks) {
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> signs;
  for (const FamilyData& fd : blocks) {
    for (int j = 0; j < fd.size(); ++j) {
      if (std::isnan(fd.g(j))) continue;
      Eigen::VectorXd row(2 + fd.z.cols());
      row << 1.0, fd.g(j), fd.z.row(j).transpose();
      rows.push_back(std::move(row));
      signs.push_back(fd.y[j] == 1 ? 1.0 : -1.0);
    }
  }
  const Eigen::Index k = rows.empty() ? 2 : rows[0].size();
  if (rows.empty()) return Eigen::VectorXd::Zero(k);
  const Objective nll = [&](const Eigen::VectorXd& a) {
    double total = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) total -= normal::log_cdf(signs[i] * rows[i].dot(a));
    return total;
  };
  BfgsOptions o;
  o.grad_tolerance = 1e-6;
  o.max_iterations = 100;
  const BfgsResult r = minimize_bfgs(nll, Eigen::VectorXd::Zero(k), o);
  // Perfect separation drives the estimates off to infinity; keep them tame.
  return r.x.cwiseMax(-5.0).cwiseMin(5.0);
}

FitResult fit(const PreparedCohort& data, const FitOptions& options,
              const std::optional<Theta>& start) {
  options.validate();
  const int p = static_cast<int>(data.covariate_names.size());
  ParameterLayout layout;
  layout.n_covariates = p;
  layout.delta_free = !options.delta_constrained;
  layout.fixed_beta1 = options.fixed_beta1;

  Theta init;
  if (start) {
    init = *start;
  } else {
    const FitResult naive = fit_naive(data, options);
    init = naive.theta_hat;
    const Eigen::VectorXd a = probit_start(data.blocks);
    init.alpha0 = a(0);
    init.alpha1 = a(1);
    init.alpha_z = a.tail(p);
    init.sigma_gy = 0.5;
    init.sigma_u = 0.5;
  }
  init.delta = options.delta_constrained ? 1.0 : init.delta;
  if (options.fixed_beta1) init.beta1 = *options.fixed_beta1;

  const CohortLikelihood lik(data.blocks, data.genetic, options.threads);
  Problem pb;
  pb.names = init.names(data.covariate_names);
  pb.free = layout.free_indices();
  for (int i : pb.free) pb.log_mapped.push_back(layout.is_log_mapped(i));
  pb.theta_of = [layout](const Eigen::VectorXd& u) { return untransform(u, layout); };
  pb.natural_of = [](const Theta& t) { return t.to_vector(); };
  pb.objective = [&](const Eigen::VectorXd& u) { return -lik(untransform(u, layout)); };

  FitResult r;
  r.model = "retrospective";
  r.genetic = data.genetic;
  r.warnings = data.warnings;
  return run(pb, transform(init, layout), options, std::move(r));
}

FitResult fit(const Cohort& cohort, const FitOptions& options) {
  return fit(prepare(cohort, options), options);
}

FitResult fit_naive(const PreparedCohort& data, const FitOptions& options) {
  options.validate();
  const int p = static_cast<int>(data.covariate_names.size());
  // Natural order: beta0, beta1, beta_z..., sigma_gx, sigma_eps.
  const int n_natural = 4 + p;
  const int i_beta1 = 1;

  double rss = 0.0;
  int n = 0;
  const Eigen::VectorXd coef = ols(data.blocks, &rss, &n);
  const double half_sd = std::sqrt(rss / n / 2.0);
  Eigen::VectorXd start_natural(n_natural);
  start_natural << coef, half_sd, half_sd;
  if (options.fixed_beta1) start_natural(i_beta1) = *options.fixed_beta1;

  Problem pb;
  pb.names.push_back("beta0");
  pb.names.push_back("beta1");
  for (const std::string& c : data.covariate_names) pb.names.push_back("beta_" + c);
  pb.names.push_back("sigma_gx");
  pb.names.push_back("sigma_eps");
  for (int i = 0; i < n_natural; ++i) {
    if (i == i_beta1 && options.fixed_beta1) continue;
    pb.free.push_back(i);
    pb.log_mapped.push_back(i >= n_natural - 2);
  }
  const std::vector<int> free = pb.free;
  const std::vector<bool> log_mapped = pb.log_mapped;
  const Eigen::VectorXd fixed = start_natural;
  auto natural_from_u = [=](const Eigen::VectorXd& u) {
    Eigen::VectorXd v = fixed;
    for (std::size_t k = 0; k < free.size(); ++k) {
      const double x = u(static_cast<Eigen::Index>(k));
      v(free[k]) = log_mapped[k] ? std::exp(std::max(x, kLogFloor)) : x;
    }
    return v;
  };
  pb.theta_of = [=](const Eigen::VectorXd& u) {
    const Eigen::VectorXd v = natural_from_u(u);
    Theta t;
    t.alpha_z = Eigen::VectorXd::Zero(p);
    t.beta0 = v(0);
    t.beta1 = v(1);
    t.beta_z = v.segment(2, p);
    t.sigma_gx = v(2 + p);
    t.sigma_eps = v(3 + p);
    t.sigma_gy = 0.0;
    t.sigma_u = 0.0;
    return t;
  };
  pb.natural_of = [p](const Theta& t) {
    Eigen::VectorXd v(4 + p);
    v << t.beta0, t.beta1, t.beta_z, t.sigma_gx, t.sigma_eps;
    return v;
  };
  const CohortLikelihood lik(data.blocks, data.genetic, options.threads);
  pb.objective = [&](const Eigen::VectorXd& u) {
    const Eigen::VectorXd v = natural_from_u(u);
    return -lik.naive({v(0), v(1), v.segment(2, p), v(2 + p), v(3 + p)});
  };

  Eigen::VectorXd u0(static_cast<Eigen::Index>(free.size()));
  for (std::size_t k = 0; k < free.size(); ++k) {
    const double x = start_natural(free[k]);
    u0(static_cast<Eigen::Index>(k)) = log_mapped[k] ? std::log(std::max(x, 1e-8)) : x;
  }
  FitResult r;
  r.model = "naive";
  r.genetic = data.genetic;
  r.warnings = data.warnings;
  return run(pb, u0, options, std::move(r));
}

FitResult fit_naive(const Cohort& cohort, const FitOptions& options) {
  return fit_naive(prepare(cohort, options), options);
}

LrtResult lrt(double loglik_full, double loglik_null, int df) {
  if (df < 1) throw InputError("LRT needs df >= 1");
  const double stat = 2.0 * (loglik_full - loglik_null);
  if (stat < -2e-6) {
    throw NumericalError("null model fits better than the full model; the optimizer failed");
  }
  LrtResult r;
  r.df = df;
  r.statistic = std::max(stat, 0.0);
  r.p_value = boost::math::gamma_q(0.5 * df, 0.5 * r.statistic);
  return r;
}

LrtResult lrt(const FitResult& full, const FitResult& null, int df) {
  return lrt(full.loglik, null.loglik, df);
}

}  // namespace ascfam
