#include "ascfam/mvnorm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ascfam/error.hpp"
#include "ascfam/normal.hpp"
#include "ascfam/quadrature.hpp"

namespace ascfam::mvnorm {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_rectangle(const Rectangle& r, Eigen::Index n) {
  if (r.lower.size() != n || r.upper.size() != n) {
    throw InputError("rectangle dimension does not match the Gaussian");
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!(r.lower(j) < r.upper(j))) {
      throw InputError("rectangle requires lower < upper in every coordinate");
    }
  }
}

double interval_prob(double lo, double hi) {
  return std::exp(normal::log_cdf_interval(lo, hi));
}

double bvn_rect(double a1, double b1, double a2, double b2, double rho) {
  auto F = [rho](double h, double k) {
    if (h == -kInf || k == -kInf) return 0.0;
    if (h == kInf) return normal::cdf(k);
    if (k == kInf) return normal::cdf(h);
    return normal::bivariate_cdf(h, k, rho);
  };
  // Upper-tail form is more accurate when both upper bounds are open.
  if (b1 == kInf && b2 == kInf) {
    return normal::bivariate_upper(a1, a2, rho);
  }
  const double p = F(b1, b2) - F(a1, b2) - F(b1, a2) + F(a1, a2);
  return std::clamp(p, 0.0, 1.0);
}

constexpr int kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37,
                           41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89};

struct Sov {
  Matrix chol;  // lower triangular, reordered
  Vector lower;
  Vector upper;
};

// Cholesky with Gibson-Glasbey-Elston reordering: at each step pick the
// remaining variable with the smallest conditional interval probability.
bool try_prepare(const Matrix& cov_in, const Vector& lo_in, const Vector& hi_in, Sov& out) {
  const Eigen::Index n = cov_in.rows();
  Matrix cov = cov_in;
  Vector lo = lo_in;
  Vector hi = hi_in;
  Matrix L = Matrix::Zero(n, n);
  Vector y = Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = i;
    double best_prob = kInf;
    double best_sd = 0.0;
    for (Eigen::Index j = i; j < n; ++j) {
      double var = cov(j, j);
      double shift = 0.0;
      for (Eigen::Index k = 0; k < i; ++k) {
        var -= L(j, k) * L(j, k);
        shift += L(j, k) * y(k);
      }
      if (!(var > 0.0)) return false;
      const double sd = std::sqrt(var);
      const double p = interval_prob((lo(j) - shift) / sd, (hi(j) - shift) / sd);
      if (p < best_prob) {
        best_prob = p;
        best = j;
        best_sd = sd;
      }
    }
    if (best != i) {
      cov.row(i).swap(cov.row(best));
      cov.col(i).swap(cov.col(best));
      std::swap(lo(i), lo(best));
      std::swap(hi(i), hi(best));
      L.row(i).swap(L.row(best));
    }
    L(i, i) = best_sd;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double v = cov(j, i);
      for (Eigen::Index k = 0; k < i; ++k) v -= L(j, k) * L(i, k);
      L(j, i) = v / best_sd;
    }
    double shift = 0.0;
    for (Eigen::Index k = 0; k < i; ++k) shift += L(i, k) * y(k);
    const double a = (lo(i) - shift) / best_sd;
    const double b = (hi(i) - shift) / best_sd;
    const double mass = interval_prob(a, b);
    if (mass > 1e-300) {
      const double pa = std::isinf(a) ? 0.0 : normal::pdf(a);
      const double pb = std::isinf(b) ? 0.0 : normal::pdf(b);
      y(i) = (pa - pb) / mass;
    } else {
      y(i) = std::isinf(a) ? b : (std::isinf(b) ? a : 0.5 * (a + b));
    }
  }
  out.chol = std::move(L);
  out.lower = std::move(lo);
  out.upper = std::move(hi);
  return true;
}

Sov prepare(const Matrix& cov, const Vector& lo, const Vector& hi) {
  Sov sov;
  if (try_prepare(cov, lo, hi, sov)) return sov;
  const Eigen::Index n = cov.rows();
  Matrix jittered = cov;
  jittered.diagonal().array() += 1e-10 * cov.trace() / static_cast<double>(n);
  if (try_prepare(jittered, lo, hi, sov)) return sov;
  throw NumericalError("covariance matrix is not positive definite");
}

double sov_integrand(const Sov& sov, const double* w, Vector& y) {
  const Eigen::Index n = sov.chol.rows();
  const double l00 = sov.chol(0, 0);
  double d = normal::cdf(sov.lower(0) / l00);
  double e = normal::cdf(sov.upper(0) / l00);
  double f = e - d;
  for (Eigen::Index i = 1; i < n && f > 0.0; ++i) {
    const double u = std::clamp(d + w[i - 1] * (e - d), 1e-300, 1.0 - 1e-16);
    y(i - 1) = normal::quantile(u);
    double shift = 0.0;
    for (Eigen::Index k = 0; k < i; ++k) shift += sov.chol(i, k) * y(k);
    const double lii = sov.chol(i, i);
    d = normal::cdf((sov.lower(i) - shift) / lii);
    e = normal::cdf((sov.upper(i) - shift) / lii);
    f *= (e - d);
  }
  return std::max(f, 0.0);
}

}  // namespace

Gaussian FactorGaussian::dense() const {
  Gaussian g;
  g.mean = mean;
  g.cov = loading * loading.transpose();
  g.cov.diagonal() += variance;
  return g;
}

Rectangle Rectangle::whole_space(Eigen::Index n) {
  return {Vector::Constant(n, -kInf), Vector::Constant(n, kInf)};
}

Rectangle orthant(std::span<const int> y) {
  const auto n = static_cast<Eigen::Index>(y.size());
  Rectangle r{Vector(n), Vector(n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    r.lower(j) = y[j] == 1 ? 0.0 : -kInf;
    r.upper(j) = y[j] == 1 ? kInf : 0.0;
  }
  return r;
}

Matrix cholesky(const Matrix& cov) {
  if (cov.rows() != cov.cols()) throw InputError("covariance must be square");
  if (!cov.allFinite()) throw NumericalError("covariance has non-finite entries");
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Matrix jittered = cov;
  jittered.diagonal().array() += 1e-10 * cov.trace() / static_cast<double>(cov.rows());
  llt.compute(jittered);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("covariance matrix is not positive definite");
  }
  return llt.matrixL();
}

double log_density(const Gaussian& g, const Vector& x) {
  if (x.size() != g.dim()) throw InputError("log_density: dimension mismatch");
  const Matrix L = cholesky(g.cov);
  const Vector z = L.triangularView<Eigen::Lower>().solve(x - g.mean);
  const double log_det = 2.0 * L.diagonal().array().log().sum();
  return -0.5 * z.squaredNorm() - 0.5 * log_det -
         static_cast<double>(g.dim()) * normal::kLogSqrt2Pi;
}

double log_density(const FactorGaussian& g, const Vector& x) {
  if (x.size() != g.dim()) throw InputError("log_density: dimension mismatch");
  if ((g.variance.array() <= 0.0).any()) {
    throw NumericalError("factor Gaussian requires positive idiosyncratic variances");
  }
  const Vector r = x - g.mean;
  const Eigen::ArrayXd inv = g.variance.array().inverse();
  const double vdv = (g.loading.array().square() * inv).sum();
  const double vdr = (g.loading.array() * r.array() * inv).sum();
  const double quad = (r.array().square() * inv).sum() - vdr * vdr / (1.0 + vdv);
  const double log_det = g.variance.array().log().sum() + std::log1p(vdv);
  return -0.5 * quad - 0.5 * log_det - static_cast<double>(g.dim()) * normal::kLogSqrt2Pi;
}

Gaussian condition(const Gaussian& g, std::span<const int> observed, const Vector& values) {
  const Eigen::Index n = g.dim();
  if (observed.empty()) throw InputError("condition: observed index set is empty");
  if (static_cast<Eigen::Index>(observed.size()) >= n) {
    throw InputError("condition: observed set must be a proper subset");
  }
  if (static_cast<Eigen::Index>(values.size()) != static_cast<Eigen::Index>(observed.size())) {
    throw InputError("condition: values size does not match observed indices");
  }
  std::vector<bool> is_obs(n, false);
  for (int idx : observed) {
    if (idx < 0 || idx >= n || is_obs[idx]) throw InputError("condition: bad observed index");
    is_obs[idx] = true;
  }
  std::vector<int> hidden;
  for (int j = 0; j < n; ++j) {
    if (!is_obs[j]) hidden.push_back(j);
  }
  const auto no = static_cast<Eigen::Index>(observed.size());
  const auto nh = static_cast<Eigen::Index>(hidden.size());
  Matrix s_oo(no, no), s_ho(nh, no), s_hh(nh, nh);
  Vector r(no);
  for (Eigen::Index a = 0; a < no; ++a) {
    r(a) = values(a) - g.mean(observed[a]);
    for (Eigen::Index b = 0; b < no; ++b) s_oo(a, b) = g.cov(observed[a], observed[b]);
  }
  for (Eigen::Index a = 0; a < nh; ++a) {
    for (Eigen::Index b = 0; b < no; ++b) s_ho(a, b) = g.cov(hidden[a], observed[b]);
    for (Eigen::Index b = 0; b < nh; ++b) s_hh(a, b) = g.cov(hidden[a], hidden[b]);
  }
  Eigen::LLT<Matrix> llt(s_oo);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("condition: observed block covariance is singular");
  }
  Gaussian out;
  out.mean = Vector(nh);
  for (Eigen::Index a = 0; a < nh; ++a) out.mean(a) = g.mean(hidden[a]);
  out.mean += s_ho * llt.solve(r);
  out.cov = s_hh - s_ho * llt.solve(s_ho.transpose());
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

Matrix sample(const Gaussian& g, std::mt19937_64& rng, int count) {
  if (count < 1) throw InputError("sample: count must be >= 1");
  const Matrix L = cholesky(g.cov);
  std::normal_distribution<double> z;
  Matrix draws(count, g.dim());
  Vector e(g.dim());
  for (int i = 0; i < count; ++i) {
    for (Eigen::Index j = 0; j < g.dim(); ++j) e(j) = z(rng);
    draws.row(i) = (g.mean + L * e).transpose();
  }
  return draws;
}

ProbabilityEstimate rectangle_prob(const Gaussian& g, const Rectangle& r,
                                   const QmcOptions& options) {
  const Eigen::Index n = g.dim();
  if (n < 1) throw InputError("rectangle_prob: empty Gaussian");
  if (g.cov.rows() != n || g.cov.cols() != n) throw InputError("rectangle_prob: bad covariance");
  check_rectangle(r, n);
  if (!(options.accuracy > 0.0)) throw InputError("rectangle_prob: accuracy must be > 0");

  const Vector lo = r.lower - g.mean;
  const Vector hi = r.upper - g.mean;
  if (n == 1) {
    if (!(g.cov(0, 0) > 0.0)) throw NumericalError("variance must be positive");
    const double sd = std::sqrt(g.cov(0, 0));
    return {interval_prob(lo(0) / sd, hi(0) / sd), 1e-15, true};
  }
  if (n == 2) {
    cholesky(g.cov);  // positive-definiteness check
    const double s1 = std::sqrt(g.cov(0, 0));
    const double s2 = std::sqrt(g.cov(1, 1));
    const double rho = std::clamp(g.cov(0, 1) / (s1 * s2), -1.0, 1.0);
    return {bvn_rect(lo(0) / s1, hi(0) / s1, lo(1) / s2, hi(1) / s2, rho), 1e-14, true};
  }
  if (n > 1 + static_cast<Eigen::Index>(std::size(kPrimes))) {
    throw InputError("rectangle_prob: dimension too large");
  }

  const Sov sov = prepare(g.cov, lo, hi);
  const int dims = static_cast<int>(n - 1);
  std::vector<double> generator(dims);
  for (int j = 0; j < dims; ++j) {
    const double s = std::sqrt(static_cast<double>(kPrimes[j]));
    generator[j] = s - std::floor(s);
  }
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int shifts = std::max(2, options.randomizations);
  std::vector<std::vector<double>> shift(shifts, std::vector<double>(dims));
  for (auto& s : shift) {
    for (double& v : s) v = unif(rng);
  }

  std::vector<double> sums(shifts, 0.0);
  std::vector<double> w(dims);
  Vector y(n);
  long done = 0;
  long target = options.fixed_points ? options.max_points
                                     : std::min(options.min_points, options.max_points);
  ProbabilityEstimate est;
  while (true) {
    for (long k = done + 1; k <= target; ++k) {
      for (int s = 0; s < shifts; ++s) {
        for (int j = 0; j < dims; ++j) {
          double x = static_cast<double>(k) * generator[j] + shift[s][j];
          x -= std::floor(x);
          w[j] = 1.0 - std::abs(2.0 * x - 1.0);
        }
        sums[s] += sov_integrand(sov, w.data(), y);
      }
    }
    done = target;
    double mean = 0.0;
    for (double v : sums) mean += v / static_cast<double>(done);
    mean /= shifts;
    double var = 0.0;
    for (double v : sums) {
      const double dev = v / static_cast<double>(done) - mean;
      var += dev * dev;
    }
    var /= static_cast<double>(shifts - 1);
    est.probability = std::clamp(mean, 0.0, 1.0);
    est.error = 3.0 * std::sqrt(var / shifts);
    est.converged = est.error <= options.accuracy;
    if (est.converged || done >= options.max_points) break;
    target = std::min<long>(2 * done, options.max_points);
  }
  return est;
}

double log_rectangle_prob(const FactorGaussian& g, const Rectangle& r, int nodes) {
  const Eigen::Index n = g.dim();
  check_rectangle(r, n);
  if (g.variance.size() != n || g.loading.size() != n) {
    throw InputError("factor Gaussian has inconsistent sizes");
  }
  if ((g.variance.array() <= 0.0).any()) {
    throw NumericalError("factor Gaussian requires positive idiosyncratic variances");
  }
  const Eigen::ArrayXd sd = g.variance.array().sqrt();
  const Eigen::ArrayXd lo = (r.lower - g.mean).array() / sd;
  const Eigen::ArrayXd hi = (r.upper - g.mean).array() / sd;
  const Eigen::ArrayXd slope = g.loading.array() / sd;
  if ((slope == 0.0).all()) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) total += normal::log_cdf_interval(lo(j), hi(j));
    return total;
  }
  auto log_f = [&](double t) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      total += normal::log_cdf_interval(lo(j) - slope(j) * t, hi(j) - slope(j) * t);
    }
    return total;
  };
  return log_integrate_normal(log_f, nodes, slope.abs().maxCoeff());
}

ProbabilityEstimate rectangle_prob(const FactorGaussian& g, const Rectangle& r, int nodes) {
  const double full = std::exp(log_rectangle_prob(g, r, nodes));
  const double half = std::exp(log_rectangle_prob(g, r, std::max(2, nodes / 2)));
  return {std::clamp(full, 0.0, 1.0), std::abs(full - half), true};
}

}  // namespace ascfam::mvnorm
